//! The file-based workflow the CLI uses, driven from code: dataset CSV,
//! training, checkpoint, candidate CSV and a results row.
//!
//! ```text
//! cargo run --release --example end_to_end -- [out_dir]
//! ```

use std::path::PathBuf;

use ddom::checkpoint::TrainedModel;
use ddom::experiment::{evaluate_points, guidance_for};
use ddom::numerics::Rng;
use ddom::records::{read_candidates, read_dataset, write_candidates, write_dataset, write_results, write_train_log, ExperimentResult};
use ddom::sampler::{sample_candidates, SamplerConfig, DEFAULT_GAMMA};
use ddom::tasks::{gen_dataset, DatasetKind, DatasetSpec, Task};
use ddom::training::{train_with_progress, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("ddom-run"), PathBuf::from);
    std::fs::create_dir_all(&dir)?;

    let data = gen_dataset(&DatasetSpec::new(DatasetKind::Uniform, 5000, 0), &Task::Branin)?;
    write_dataset(dir.join("data.csv"), &data)?;

    let data = read_dataset(dir.join("data.csv"))?;
    let config = TrainConfig::small(0);
    let outcome = train_with_progress(&data, &config, |r| {
        if r.epoch % 50 == 0 {
            println!("epoch {:>4}  loss {:.4}", r.epoch, r.mean_loss);
        }
    })?;
    outcome.model.save(dir.join("model.ckpt"))?;
    write_train_log(dir.join("train_log.csv"), &outcome.log, false)?;

    let model = TrainedModel::load(dir.join("model.ckpt"))?;
    let sampler = SamplerConfig::small();
    let guidance = guidance_for(&model, DEFAULT_GAMMA, model.best_value)?;
    let set = sample_candidates(&model, 256, &guidance, &sampler, &Rng::new(0))?;
    write_candidates(dir.join("candidates.csv"), &set.points)?;

    let points = read_candidates(dir.join("candidates.csv"))?;
    let e = evaluate_points(&Task::Branin, &points)?;
    let result = ExperimentResult {
        task: Task::Branin.to_string(),
        seed: 0,
        gamma: guidance.gamma(),
        steps: sampler.steps,
        q: points.rows(),
        reweight: model.info.reweighted,
        conditioning_y: model.best_raw_value(),
        max_f: e.max,
        mean_f: e.mean,
        wall_seconds: None,
    };
    write_results(dir.join("results.csv"), &[result], false)?;
    println!("max f {:.4}, mean f {:.3}; artifacts in {}", e.max, e.mean, dir.display());
    Ok(())
}
