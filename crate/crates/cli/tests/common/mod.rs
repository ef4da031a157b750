#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use polyloc_cli::config::RunConfig;

/// Smallest model that still exercises every stream.
pub fn tiny_config(dataset: &Path) -> RunConfig {
    let cfg = RunConfig {
        dataset: dataset.to_path_buf(),
        synth_duration_s: 2.0,
        synth_landmarks: 150,
        grid_bins: [8, 8, 4],
        point_dim: 4,
        backbone_divisor: 16,
        image_size: (32, 32),
        image_channels: 8,
        feature_dim: 64,
        slots: 3,
        slot_iters: 2,
        batch_size: 2,
        epochs: 1,
        lr: 0.001,
        ..RunConfig::default()
    };
    cfg.validate().unwrap();
    cfg
}

pub fn write_config(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let p = dir.join("run.cfg");
    std::fs::write(&p, cfg.to_text()).unwrap();
    p
}

pub fn polyloc(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_polyloc"));
    c.args(args).env("RUST_LOG", "warn");
    for (k, v) in envs {
        c.env(k, v);
    }
    c.output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// All files under `root` with their bytes, sorted by relative path.
pub fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
