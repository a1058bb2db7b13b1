//! Euler-Maruyama against Heun on Gaussian data, where the score is known
//! exactly and the terminal distribution is known in closed form.
//!
//! ```text
//! cargo run --release --example integrators_toy
//! ```

use ddom::numerics::{Matrix, Rng};
use ddom::sampler::{integrate_reverse, GaussianScore, Integrator, SamplerConfig};
use ddom::sde::NoiseSchedule;

fn main() -> ddom::Result<()> {
    let model = GaussianScore {
        mean: vec![1.0, -2.0],
        variance: 0.25,
        schedule: NoiseSchedule::default(),
    };
    let (start_mean, start_var) = model.marginal(1.0)?;
    let config = SamplerConfig::default();
    let (target_mean, target_var) = model.marginal(config.t_eps)?;
    println!("target: mean {target_mean:.4?}, variance {target_var:.4}");

    let n = 20_000;
    for steps in [10, 50, 250] {
        for integrator in [Integrator::EulerMaruyama, Integrator::Heun] {
            let root = Rng::new(0);
            let mut rngs: Vec<Rng> = (0..n as u64).map(|i| root.split(i)).collect();
            let mut init = Vec::with_capacity(2 * n);
            for r in rngs.iter_mut() {
                init.extend(start_mean.iter().map(|m| m + start_var.sqrt() * r.normal()));
            }
            let config = SamplerConfig {
                steps,
                integrator,
                ..config
            };
            let run = integrate_reverse(&model, &model.schedule, Matrix::new(n, 2, init)?, &config, &mut rngs)?;
            let x: Vec<f64> = run.final_points.iter_rows().map(|r| r[0]).collect();
            let mean = x.iter().sum::<f64>() / n as f64;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            println!("T={steps:<4} {integrator:<15} x0 mean {mean:.4}  variance {var:.4}");
        }
    }
    Ok(())
}
