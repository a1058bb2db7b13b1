//! Any type implementing `Objective` can be optimized. Here: a shifted,
//! negated sphere in three dimensions, learned from uniform samples.
//!
//! ```text
//! cargo run --release --example custom_objective
//! ```

use ddom::experiment::{evaluate_points, guidance_for};
use ddom::numerics::Rng;
use ddom::sampler::{sample_candidates, SamplerConfig, DEFAULT_GAMMA};
use ddom::tasks::{gen_dataset, DatasetKind, DatasetSpec, Objective};
use ddom::training::{train, TrainConfig};

struct Sphere {
    center: [f64; 3],
}

impl Objective for Sphere {
    fn name(&self) -> &str {
        "sphere"
    }

    fn dim(&self) -> usize {
        3
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(-4.0, 4.0); 3]
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        -x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>()
    }
}

fn main() -> ddom::Result<()> {
    let task = Sphere { center: [1.0, -0.5, 2.0] };
    let spec = DatasetSpec {
        percentile: 20.0,
        ..DatasetSpec::new(DatasetKind::UniformTruncated, 3000, 0)
    };
    let data = gen_dataset(&spec, &task)?;
    let model = train(&data, &TrainConfig::small(0))?.model;
    let guidance = guidance_for(&model, DEFAULT_GAMMA, model.best_value)?;
    let set = sample_candidates(&model, 64, &guidance, &SamplerConfig::small(), &Rng::new(0))?;
    let e = evaluate_points(&task, &set.points)?;
    let best = (0..e.values.len()).fold(0, |b, i| if e.values[i] > e.values[b] { i } else { b });
    println!("dataset max {:.3}; best proposal {:.3} at {:.3?}", data.best_value(), e.max, set.points.row(best));
    Ok(())
}
