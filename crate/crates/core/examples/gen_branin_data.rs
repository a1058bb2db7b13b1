//! Generates the three offline Branin datasets and writes each as CSV with a
//! `key=value` sidecar.
//!
//! ```text
//! cargo run --release --example gen_branin_data -- [out_dir]
//! ```

use std::path::PathBuf;

use ddom::records::{sidecar_path, write_dataset, Metadata};
use ddom::tasks::{gen_dataset, DatasetKind, DatasetSpec, Objective, Task};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out_dir = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("ddom-data"), PathBuf::from);
    std::fs::create_dir_all(&out_dir)?;

    for kind in [DatasetKind::Gmm, DatasetKind::Uniform, DatasetKind::UniformTruncated] {
        let spec = DatasetSpec::new(kind, 5000, 0);
        let data = gen_dataset(&spec, &Task::Branin)?;
        let path = out_dir.join(format!("branin_{kind}.csv"));
        write_dataset(&path, &data)?;
        Metadata::new()
            .with("task", Task::Branin.name())
            .with("kind", kind)
            .with("n", data.len())
            .with("seed", spec.seed)
            .write(sidecar_path(&path))?;

        let values = data.values();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        println!(
            "{:<24} n={:<5} y in [{min:9.3}, {:7.3}]  -> {}",
            kind.to_string(),
            data.len(),
            data.best_value(),
            path.display()
        );
    }
    Ok(())
}
