//! The inverse model at work: one conditional model trained on uniformly
//! sampled Branin points, queried at a grid of target values. The mean
//! objective of the samples follows the requested value up to the dataset
//! maximum.
//!
//! ```text
//! cargo run --release --example conditional_inverse
//! ```

use ddom::experiment::{conditioning_grid, evaluate_points, guidance_for};
use ddom::numerics::Rng;
use ddom::sampler::{sample_candidates, SamplerConfig, DEFAULT_GAMMA};
use ddom::tasks::{gen_dataset, DatasetKind, DatasetSpec, Task};
use ddom::training::{train, TrainConfig};

fn main() -> ddom::Result<()> {
    let data = gen_dataset(&DatasetSpec::new(DatasetKind::Uniform, 5000, 0), &Task::Branin)?;
    // Unweighted, so that low target values are learned as well as high ones.
    let config = TrainConfig {
        reweight: false,
        ..TrainConfig::small(0)
    };
    let model = train(&data, &config)?.model;
    println!("dataset max {:.3}", data.best_value());
    println!("{:>12} {:>10} {:>10}", "target y", "max f", "mean f");
    for y in conditioning_grid(&model, &data, 20) {
        let guidance = guidance_for(&model, DEFAULT_GAMMA, y)?;
        let set = sample_candidates(&model, 256, &guidance, &SamplerConfig::small(), &Rng::new(0))?;
        let e = evaluate_points(&Task::Branin, &set.points)?;
        let raw = model.normalizer.denormalize_value(y);
        let mark = if raw > data.best_value() { "  (beyond data)" } else { "" };
        println!("{raw:>12.3} {:>10.3} {:>10.3}{mark}", e.max, e.mean);
    }
    Ok(())
}
