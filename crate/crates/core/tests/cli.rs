use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn ddom(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddom"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = ddom(dir, args);
    assert!(
        out.status.success(),
        "ddom {args:?} exited with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn data_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect()
}

const TINY: [&str; 8] = [
    "--epochs", "2", "--hidden-width", "8", "--fourier-features", "4", "--batch-size", "64",
];

fn tiny_model(dir: &Path) {
    ok(dir, &["gen-data", "--kind", "uniform", "--n", "200", "--out", "d.csv"]);
    ok(dir, &[&["train", "--data", "d.csv", "--out-dir", "run"][..], &TINY].concat());
}

#[test]
fn gen_data_writes_requested_rows_and_sidecar() {
    let dir = tempdir().unwrap();
    ok(dir.path(), &["gen-data", "--task", "branin", "--kind", "gmm", "--n", "5000", "--seed", "0", "--out", "d.csv"]);
    let text = fs::read_to_string(dir.path().join("d.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("x0,x1,y"));
    assert_eq!(text.lines().count(), 5001);
    let meta = fs::read_to_string(dir.path().join("d.csv.meta")).unwrap();
    for key in ["task=branin", "kind=gmm", "n=5000", "d=2", "seed=0"] {
        assert!(meta.lines().any(|l| l == key), "missing {key} in {meta}");
    }
}

#[test]
fn truncation_lowers_the_maximum() {
    let dir = tempdir().unwrap();
    ok(dir.path(), &["gen-data", "--kind", "uniform", "--n", "1000", "--out", "full.csv"]);
    ok(dir.path(), &["gen-data", "--kind", "uniform_truncated", "--percentile", "10", "--n", "1000", "--out", "cut.csv"]);
    let max = |f: &str| data_rows(&dir.path().join(f)).iter().map(|r| r[2]).fold(f64::NEG_INFINITY, f64::max);
    assert!(max("cut.csv") < max("full.csv"));
    assert_eq!(data_rows(&dir.path().join("cut.csv")).len(), 900);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempdir().unwrap();
    assert_eq!(ddom(dir.path(), &["gen-data", "--kind", "gmm"]).status.code(), Some(2));
    assert_eq!(ddom(dir.path(), &["gen-data", "--kind", "spiral", "--out", "x.csv"]).status.code(), Some(2));
    assert_eq!(ddom(dir.path(), &["sample", "--checkpoint", "m", "--out", "c", "--steps", "0"]).status.code(), Some(2));
    assert_eq!(ddom(dir.path(), &["sample", "--checkpoint", "m", "--out", "c", "--gamma", "-1.01"]).status.code(), Some(2));
    assert_eq!(ddom(dir.path(), &["evaluate", "--candidates", "c", "--task", "rosen", "--out", "r"]).status.code(), Some(2));
    assert_eq!(ddom(dir.path(), &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn malformed_dataset_names_the_line() {
    let dir = tempdir().unwrap();
    fs::write(dir.path().join("bad.csv"), "x0,x1,y\n0,0,1\n1,1,2\n2,x,3\n").unwrap();
    let out = ddom(dir.path(), &["train", "--data", "bad.csv", "--out-dir", "run"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4"), "{err}");
}

#[test]
fn train_and_sample_defaults() {
    let dir = tempdir().unwrap();
    tiny_model(dir.path());
    assert!(dir.path().join("run/model.ckpt").exists());
    let log = fs::read_to_string(dir.path().join("run/train_log.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("epoch,mean_loss,wall_seconds"));
    assert_eq!(log.lines().count(), 3);

    ok(dir.path(), &["sample", "--checkpoint", "run/model.ckpt", "--out", "c.csv", "--steps", "5"]);
    let text = fs::read_to_string(dir.path().join("c.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("candidate_index,x0,x1"));
    assert_eq!(text.lines().count(), 257);

    ok(dir.path(), &["sample", "--checkpoint", "run/model.ckpt", "--out", "u.csv", "--steps", "5", "--gamma", "-1", "--q", "4"]);
    let meta = fs::read_to_string(dir.path().join("u.csv.meta")).unwrap();
    assert!(meta.contains("gamma=-1.0"));
}

#[test]
fn timing_is_opt_in() {
    let dir = tempdir().unwrap();
    tiny_model(dir.path());
    let log = fs::read_to_string(dir.path().join("run/train_log.csv")).unwrap();
    assert!(log.lines().skip(1).all(|l| l.ends_with(',')));
    ok(dir.path(), &[&["train", "--data", "d.csv", "--out-dir", "timed", "--timing"][..], &TINY].concat());
    let log = fs::read_to_string(dir.path().join("timed/train_log.csv")).unwrap();
    assert!(log.lines().skip(1).all(|l| !l.ends_with(',')));
}

#[test]
fn trajectory_output() {
    let dir = tempdir().unwrap();
    tiny_model(dir.path());
    ok(dir.path(), &["sample", "--checkpoint", "run/model.ckpt", "--out", "c.csv", "--steps", "4", "--q", "3", "--trajectory", "t.csv"]);
    let text = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("candidate_index,step,t,x0,x1"));
    assert_eq!(text.lines().count(), 1 + 3 * 5);
    // the last snapshot of each candidate is the written candidate
    let traj = data_rows(&dir.path().join("t.csv"));
    let cands = data_rows(&dir.path().join("c.csv"));
    for (i, c) in cands.iter().enumerate() {
        let last = &traj[i * 5 + 4];
        assert_eq!(last[0] as usize, i);
        assert_eq!(&last[3..], &c[1..]);
    }
}

#[test]
fn evaluate_at_the_known_maxima() {
    let dir = tempdir().unwrap();
    let c = dir.path().join("c.csv");
    fs::write(
        &c,
        "candidate_index,x0,x1\n0,-3.141592653589793,12.275\n1,3.141592653589793,2.275\n2,9.42478,2.475\n3,0,0\n",
    )
    .unwrap();
    ok(dir.path(), &["evaluate", "--candidates", "c.csv", "--task", "branin", "--out", "r.csv"]);
    let text = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("task,seed,gamma,steps,q,reweight,conditioning_y,max_f,mean_f,wall_seconds")
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let max_f: f64 = row[7].parse().unwrap();
    let mean_f: f64 = row[8].parse().unwrap();
    assert!((max_f + 0.397887).abs() < 1e-5);

    // independent Branin over the same rows
    let pi = std::f64::consts::PI;
    let f = |x1: f64, x2: f64| {
        let b = 5.1 / (4.0 * pi * pi);
        -((x2 - b * x1 * x1 + 5.0 / pi * x1 - 6.0).powi(2) + 10.0 * (1.0 - 1.0 / (8.0 * pi)) * x1.cos() + 10.0)
    };
    let rows = data_rows(&c);
    let mean = rows.iter().map(|r| f(r[1], r[2])).sum::<f64>() / rows.len() as f64;
    assert!((mean - mean_f).abs() <= 1e-12 * mean.abs().max(1.0));
    assert!(max_f >= mean_f);
}

#[test]
fn evaluate_appends_on_request() {
    let dir = tempdir().unwrap();
    fs::write(dir.path().join("c.csv"), "candidate_index,x0,x1\n0,1,2\n").unwrap();
    ok(dir.path(), &["evaluate", "--candidates", "c.csv", "--out", "r.csv"]);
    ok(dir.path(), &["evaluate", "--candidates", "c.csv", "--out", "r.csv", "--append"]);
    assert_eq!(fs::read_to_string(dir.path().join("r.csv")).unwrap().lines().count(), 3);
    ok(dir.path(), &["evaluate", "--candidates", "c.csv", "--out", "r.csv"]);
    assert_eq!(fs::read_to_string(dir.path().join("r.csv")).unwrap().lines().count(), 2);
}

#[test]
fn empty_candidates_are_an_error() {
    let dir = tempdir().unwrap();
    fs::write(dir.path().join("c.csv"), "candidate_index,x0,x1\n").unwrap();
    let out = ddom(dir.path(), &["evaluate", "--candidates", "c.csv", "--out", "r.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_sweep_lists_the_choices() {
    let dir = tempdir().unwrap();
    let out = ddom(dir.path(), &["ablate", "--sweep", "learning-rate", "--out", "s.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in ["conditioning", "guidance", "budget", "k-tau", "bins", "timestep"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn sweeps_report_missing_inputs() {
    let dir = tempdir().unwrap();
    let out = ddom(dir.path(), &["ablate", "--sweep", "guidance", "--out", "s.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));
}

#[test]
fn guidance_and_timestep_sweeps() {
    let dir = tempdir().unwrap();
    tiny_model(dir.path());
    ok(dir.path(), &["ablate", "--sweep", "guidance", "--checkpoint", "run/model.ckpt", "--steps", "3", "--q", "4", "--out", "g.csv"]);
    let text = fs::read_to_string(dir.path().join("g.csv")).unwrap();
    assert!(text.starts_with("sweep,task,seed,gamma,steps,q,reweight,k,tau,n_bins,conditioning_y,step,max_f,mean_f\n"));
    assert_eq!(text.lines().count(), 1 + 4 * 4);
    ok(dir.path(), &["ablate", "--sweep", "timestep", "--checkpoint", "run/model.ckpt", "--steps", "3", "--q", "4", "--out", "s.csv"]);
    assert_eq!(fs::read_to_string(dir.path().join("s.csv")).unwrap().lines().count(), 1 + 4);
    ok(dir.path(), &["ablate", "--sweep", "budget", "--checkpoint", "run/model.ckpt", "--steps", "2", "--out", "b.csv"]);
    assert_eq!(fs::read_to_string(dir.path().join("b.csv")).unwrap().lines().count(), 1 + 6);
}

#[test]
fn retraining_sweeps() {
    let dir = tempdir().unwrap();
    ok(dir.path(), &["gen-data", "--kind", "uniform", "--n", "200", "--out", "d.csv"]);
    ok(dir.path(), &[&["ablate", "--sweep", "k-tau", "--data", "d.csv", "--steps", "2", "--q", "4", "--out", "k.csv"][..], &TINY].concat());
    let rows: Vec<String> = fs::read_to_string(dir.path().join("k.csv")).unwrap().lines().skip(1).map(String::from).collect();
    assert_eq!(rows.len(), 8);
    let k: Vec<f64> = rows.iter().map(|r| r.split(',').nth(7).unwrap().parse().unwrap()).collect();
    assert_eq!(&k[..4], &[0.001, 0.01, 0.1, 1.0]);
    ok(dir.path(), &[&["ablate", "--sweep", "bins", "--data", "d.csv", "--steps", "2", "--q", "4", "--out", "n.csv"][..], &TINY].concat());
    let bins: Vec<String> = fs::read_to_string(dir.path().join("n.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|r| r.split(',').nth(9).unwrap().to_string())
        .collect();
    assert_eq!(bins, ["1", "32", "64"]);
}

#[test]
fn identical_flags_give_identical_checkpoints() {
    let dir = tempdir().unwrap();
    tiny_model(dir.path());
    let first = fs::read(dir.path().join("run/model.ckpt")).unwrap();
    ok(dir.path(), &[&["train", "--data", "d.csv", "--out-dir", "run"][..], &TINY].concat());
    assert_eq!(first, fs::read(dir.path().join("run/model.ckpt")).unwrap());
    ok(dir.path(), &[&["train", "--data", "d.csv", "--out-dir", "other", "--seed", "1"][..], &TINY].concat());
    assert_ne!(first, fs::read(dir.path().join("other/model.ckpt")).unwrap());
}
