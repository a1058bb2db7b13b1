//! Removes the best 10% of a uniform Branin dataset, trains on the rest and
//! counts the proposals that beat everything the model was shown.
//!
//! ```text
//! cargo run --release --example generalization_truncated
//! ```

use ddom::experiment::{evaluate_points, guidance_for};
use ddom::numerics::Rng;
use ddom::sampler::{sample_candidates, SamplerConfig, DEFAULT_GAMMA};
use ddom::tasks::{gen_dataset, DatasetKind, DatasetSpec, Task};
use ddom::training::{train, TrainConfig};

fn main() -> ddom::Result<()> {
    for seed in 0..3 {
        let spec = DatasetSpec {
            percentile: 10.0,
            ..DatasetSpec::new(DatasetKind::UniformTruncated, 5000, seed)
        };
        let data = gen_dataset(&spec, &Task::Branin)?;
        let model = train(&data, &TrainConfig::small(seed))?.model;
        let guidance = guidance_for(&model, DEFAULT_GAMMA, model.best_value)?;
        let set = sample_candidates(&model, 256, &guidance, &SamplerConfig::small(), &Rng::new(seed))?;
        let e = evaluate_points(&Task::Branin, &set.points)?;
        let above = e.values.iter().filter(|&&v| v > data.best_value()).count();
        println!(
            "seed {seed}: truncated max {:.3}, best proposal {:.3}, {above}/256 above the data",
            data.best_value(),
            e.max
        );
    }
    Ok(())
}
