//! Bin reweighting on a dataset skewed towards poor designs: 90% of the
//! points lie in the bottom half of objective values. Compares training with
//! and without weights, then sweeps the number of bins.
//!
//! ```text
//! cargo run --release --example reweighting_ablation
//! ```

use ddom::experiment::{evaluate_points, guidance_for, run_sweep, Sweep, SweepContext};
use ddom::numerics::Rng;
use ddom::sampler::{sample_candidates, SamplerConfig, DEFAULT_BUDGET, DEFAULT_GAMMA};
use ddom::tasks::{gen_dataset, skew_low, DatasetKind, DatasetSpec, Task};
use ddom::training::{train, training_weights, Normalizer, TrainConfig};

fn main() -> ddom::Result<()> {
    let full = gen_dataset(&DatasetSpec::new(DatasetKind::Uniform, 5000, 0), &Task::Branin)?;
    let data = skew_low(&full, 0.9, &mut Rng::new(0))?;
    println!("{} points, max y {:.3}", data.len(), data.best_value());

    let norm = Normalizer::fit(&data);
    let y: Vec<f64> = data.values().iter().map(|&v| norm.normalize_value(v)).collect();
    let (_, bins) = training_weights(&y, &TrainConfig::small(0))?;
    let bins = bins.expect("reweighting is on by default");
    let occupied = bins.counts().iter().filter(|&&c| c > 0).count();
    println!("{} of {} bins occupied, best-bin weight {:.3}", occupied, bins.n_bins(), bins.weights()[bins.n_bins() - 1]);

    for reweight in [true, false] {
        let config = TrainConfig {
            reweight,
            ..TrainConfig::small(0)
        };
        let model = train(&data, &config)?.model;
        let guidance = guidance_for(&model, DEFAULT_GAMMA, model.best_value)?;
        let set = sample_candidates(&model, DEFAULT_BUDGET, &guidance, &SamplerConfig::small(), &Rng::new(0))?;
        let e = evaluate_points(&Task::Branin, &set.points)?;
        println!("reweight={reweight:<5}  best {:.3}  mean {:.3}", e.max, e.mean);
    }

    let ctx = SweepContext {
        task: Task::Branin,
        model: None,
        dataset: Some(&data),
        train: TrainConfig::small(0),
        sampler: SamplerConfig::small(),
        gamma: DEFAULT_GAMMA,
        q: DEFAULT_BUDGET,
        seed: 0,
    };
    for r in run_sweep(Sweep::Bins, &ctx)? {
        println!("n_bins={:<3} best {:.3}  mean {:.3}", r.n_bins.unwrap(), r.max_f, r.mean_f);
    }
    Ok(())
}
