//! Classifier-free guidance strength against sample quality, reported along
//! the reverse trajectory for gamma in {0, 1, 2, 4}.
//!
//! ```text
//! cargo run --release --example guidance_sweep
//! ```

use ddom::experiment::{run_sweep, Sweep, SweepContext};
use ddom::sampler::{SamplerConfig, DEFAULT_BUDGET, DEFAULT_GAMMA};
use ddom::tasks::{gen_dataset, DatasetKind, DatasetSpec, Task};
use ddom::training::{train, TrainConfig};

fn main() -> ddom::Result<()> {
    let data = gen_dataset(&DatasetSpec::new(DatasetKind::Uniform, 5000, 0), &Task::Branin)?;
    let model = train(&data, &TrainConfig::small(0))?.model;
    let ctx = SweepContext {
        task: Task::Branin,
        model: Some(&model),
        dataset: Some(&data),
        train: TrainConfig::small(0),
        sampler: SamplerConfig::small(),
        gamma: DEFAULT_GAMMA,
        q: DEFAULT_BUDGET,
        seed: 0,
    };
    let rows = run_sweep(Sweep::Guidance, &ctx)?;
    println!("{:>6} {:>6} {:>10} {:>10}", "gamma", "step", "max f", "mean f");
    for r in rows.iter().filter(|r| r.step.is_some_and(|s| s % 20 == 0)) {
        println!("{:>6} {:>6} {:>10.3} {:>10.3}", r.gamma, r.step.unwrap(), r.max_f, r.mean_f);
    }
    Ok(())
}
