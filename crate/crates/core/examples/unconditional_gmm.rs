//! Trains an unconditional model on the 5000-point Gaussian-mixture dataset
//! centred on the three Branin maxima, then tracks the objective of the
//! samples along the reverse diffusion.
//!
//! ```text
//! cargo run --release --example unconditional_gmm
//! ```

use ddom::experiment::{evaluate_points, per_step_stats};
use ddom::numerics::Rng;
use ddom::sampler::{sample_candidates, GuidanceConfig, SamplerConfig};
use ddom::tasks::{gen_dataset, DatasetKind, DatasetSpec, Task, BRANIN_MAX};
use ddom::training::{train, TrainConfig};

fn main() -> ddom::Result<()> {
    let data = gen_dataset(&DatasetSpec::new(DatasetKind::Gmm, 5000, 0), &Task::Branin)?;
    let config = TrainConfig {
        conditional: false,
        reweight: false,
        ..TrainConfig::small(0)
    };
    let outcome = train(&data, &config)?;
    println!("final training loss {:.4}", outcome.log.last().unwrap().mean_loss);

    let sampler = SamplerConfig {
        record_trajectory: true,
        ..SamplerConfig::small()
    };
    let set = sample_candidates(&outcome.model, 256, &GuidanceConfig::unconditional(), &sampler, &Rng::new(0))?;
    let stats = per_step_stats(&Task::Branin, set.trajectory.as_ref().unwrap())?;
    println!("{:>5} {:>7} {:>10} {:>10}", "step", "t", "max f", "mean f");
    for s in stats.iter().step_by(10) {
        println!("{:>5} {:>7.3} {:>10.3} {:>10.3}", s.step, s.t, s.max, s.mean);
    }

    let e = evaluate_points(&Task::Branin, &set.points)?;
    println!("final: max f {:.4}, mean f {:.3} (optimum {BRANIN_MAX})", e.max, e.mean);
    Ok(())
}
