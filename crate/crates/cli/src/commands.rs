//! One function per CLI verb. Each returns a summary that `main` prints.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use polyloc::checkpoint::{file_hash, Checkpoint};
use polyloc::dataset::load_samples;
use polyloc::model::{Model, SensorSample};
use polyloc::numerics::adam::AdamState;
use polyloc::numerics::init::{mix_seed, rng_from_seed};
use polyloc::numerics::{ParamStore, Tensor};
use polyloc::objective::{train_step, BalanceFactors, StepMetrics};
use polyloc::pose::{sensor_list_label, Pose6DoF, SensorId};
use polyloc::sync::{
    align, gap_fill, read_gt_csv, read_manifest, read_odometry_csv, scan_stream, write_manifest, AlignedSample, GT_FILE,
    MANIFEST_FILE, ODOMETRY_FILE,
};
use polyloc::synth::emit_dataset;
use polyloc::{Error, Result};

use crate::config::{EvalSplit, RunConfig};
use crate::metrics::{text_table, MetricsReport};
use crate::registry::{registry, run_entries, sign_flip_fixture, EntryResult};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_FILE: &str = "loss.csv";
pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_TXT: &str = "metrics.txt";
/// Prefix of the balance-factor parameter names.
pub const BALANCE_NAME: &str = "balance";

/// Subsets evaluated when none is requested explicitly.
pub fn standard_subsets() -> Vec<Vec<SensorId>> {
    use SensorId::*;
    vec![
        vec![L1],
        vec![L2],
        vec![C1],
        vec![R],
        vec![L1, C1, R],
        vec![L1, L2, R],
        SensorId::ALL.to_vec(),
    ]
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyncSummary {
    pub samples: usize,
    pub dropped_radar: usize,
    pub gap_filled: usize,
    pub boundary_warning: bool,
}

impl SyncSummary {
    pub fn text(&self) -> String {
        let mut s = format!(
            "samples {}\ndropped radar frames {}\ngap-filled poses {}\n",
            self.samples, self.dropped_radar, self.gap_filled
        );
        if self.boundary_warning {
            s.push_str("warning: poses were dead-reckoned past the ground-truth boundary\n");
        }
        s
    }
}

/// Fills ground-truth gaps from odometry, aligns every stream and writes the manifest.
pub fn sync(cfg: &RunConfig, root: &Path) -> Result<SyncSummary> {
    let gt = read_gt_csv(&root.join(GT_FILE))?;
    let odo_path = root.join(ODOMETRY_FILE);
    let odometry = if odo_path.exists() {
        read_odometry_csv(&odo_path)?
    } else {
        Vec::new()
    };
    let (filled, report) = gap_fill(&gt, &odometry, cfg.max_gap_ns())?;
    let streams = SensorId::ALL
        .iter()
        .map(|&s| scan_stream(root, s))
        .collect::<Result<Vec<_>>>()?;
    let data = align(&streams, &filled, cfg.max_gap_ns())?;
    write_manifest(&root.join(MANIFEST_FILE), &data.samples)?;
    Ok(SyncSummary {
        samples: data.samples.len(),
        dropped_radar: data.dropped_radar,
        gap_filled: report.filled,
        boundary_warning: report.boundary_warning,
    })
}

/// Emits a synthetic dataset under `root` and synchronizes it.
pub fn synth_gen(cfg: &RunConfig, root: &Path) -> Result<String> {
    let report = emit_dataset(root, &cfg.synth_config())?;
    let sync = sync(cfg, root)?;
    let mut s = String::new();
    for (sensor, n) in &report.frames {
        writeln!(s, "{sensor} frames {n}").unwrap();
    }
    writeln!(s, "empty LiDAR frames skipped {}", report.skipped_empty).unwrap();
    writeln!(s, "ground-truth rows {}", report.gt_rows).unwrap();
    writeln!(s, "world diameter {:.3} m", report.world_diameter).unwrap();
    s.push_str(&sync.text());
    Ok(s)
}

/// Model, balance factors and parameters built from a configuration.
pub struct Session {
    pub model: Model,
    pub factors: BalanceFactors,
    pub store: ParamStore,
}

impl Session {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let mut store = ParamStore::new();
        let model = Model::new(&mut store, cfg.model_config(), cfg.seed)?;
        let factors = BalanceFactors::new(&mut store, BALANCE_NAME, cfg.sign_mode)?;
        let (alpha, beta) = cfg.balance_init;
        for (&id, v) in factors.translation.iter().zip([alpha; 3]).chain(factors.rotation.iter().zip([beta; 3])) {
            store.set_value(id, Tensor::scalar(v))?;
        }
        Ok(Session { model, factors, store })
    }
}

fn check_compatible(cfg: &RunConfig, ck: &Checkpoint, path: &Path) -> Result<()> {
    let saved = RunConfig::parse(&ck.config_text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        detail: format!("stored configuration: {e}"),
    })?;
    if saved.model_config() != cfg.model_config() || saved.sign_mode != cfg.sign_mode {
        return Err(Error::Config(format!(
            "checkpoint {} was trained with a different model configuration",
            path.display()
        )));
    }
    Ok(())
}

fn training_prefix(cfg: &RunConfig, n: usize) -> usize {
    if cfg.train_samples == 0 {
        n
    } else {
        cfg.train_samples.min(n)
    }
}

/// Sample indices of optimizer step `step`, derived from the step alone.
pub fn batch_indices(cfg: &RunConfig, samples: usize, step: u64) -> Vec<usize> {
    let per_epoch = samples.div_ceil(cfg.batch_size) as u64;
    let (epoch, b) = (step / per_epoch, (step % per_epoch) as usize);
    let mut order: Vec<usize> = (0..samples).collect();
    order.shuffle(&mut rng_from_seed(mix_seed(&[cfg.seed, epoch, 0xba7c])));
    let start = b * cfg.batch_size;
    order[start..(start + cfg.batch_size).min(samples)].to_vec()
}

/// Optimizer steps a full run takes.
pub fn total_steps(cfg: &RunConfig, samples: usize) -> u64 {
    let all = (cfg.epochs * samples.div_ceil(cfg.batch_size)) as u64;
    if cfg.max_steps > 0 {
        all.min(cfg.max_steps)
    } else {
        all
    }
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub start_step: u64,
    pub steps: Vec<StepMetrics>,
    pub checkpoint: PathBuf,
}

impl TrainSummary {
    pub fn text(&self) -> String {
        let last = self.steps.last().map_or(f64::NAN, |m| m.loss);
        format!(
            "steps {}..{}\nfinal loss {last:.6}\ncheckpoint {}\n",
            self.start_step,
            self.start_step + self.steps.len() as u64,
            self.checkpoint.display()
        )
    }
}

/// Trains on the manifest under `root`, optionally resuming from `resume`.
///
/// Writes `model.ckpt` and appends to `loss.csv` in `out`.
pub fn train(cfg: &RunConfig, root: &Path, resume: Option<&Path>, out: &Path) -> Result<TrainSummary> {
    let manifest = read_manifest(&root.join(MANIFEST_FILE))?;
    let n = training_prefix(cfg, manifest.len());
    if n == 0 {
        return Err(Error::EmptyInput("manifest has no samples".into()));
    }
    let samples = load_samples(root, &manifest[..n], &SensorId::ALL, &cfg.model_config())?;
    let mut session = Session::new(cfg)?;
    let mut adam = AdamState::new(&session.store, cfg.adam_config());
    let mut start = 0;
    if let Some(path) = resume {
        let ck = Checkpoint::load(path)?;
        check_compatible(cfg, &ck, path)?;
        ck.restore_into(&mut session.store)?;
        if let Some(a) = ck.adam {
            adam = a;
            adam.config = cfg.adam_config();
        }
        start = ck.step;
    }
    create_dir(out)?;
    let loss_path = out.join(LOSS_FILE);
    let fresh = start == 0 || !loss_path.exists();
    let mut log = fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(&loss_path)
        .map_err(|e| io_err(&loss_path, e))?;
    if fresh {
        let names: Vec<&str> = SensorId::ALL.iter().map(|s| s.name()).collect();
        writeln!(log, "step,loss,{}", names.join(",")).map_err(|e| io_err(&loss_path, e))?;
    }
    let total = total_steps(cfg, n);
    let mut steps = Vec::new();
    for step in start..total {
        let batch: Vec<SensorSample> = batch_indices(cfg, n, step)
            .into_iter()
            .map(|i| samples[i].clone())
            .collect();
        let m = train_step(
            &session.model,
            &session.factors,
            &mut session.store,
            &mut adam,
            &batch,
            step,
            cfg.seed,
        )?;
        let per: Vec<String> = SensorId::ALL.iter().map(|s| format!("{:?}", m.per_sensor[s])).collect();
        writeln!(log, "{},{:?},{}", m.step, m.loss, per.join(",")).map_err(|e| io_err(&loss_path, e))?;
        if step % 25 == 0 || step + 1 == total {
            log::info!("step {step}/{total} loss {:.5}", m.loss);
        }
        steps.push(m);
    }
    let checkpoint = out.join(CHECKPOINT_FILE);
    Checkpoint::capture(&cfg.to_text(), total.max(start), &session.store, Some(&adam)).save(&checkpoint)?;
    Ok(TrainSummary {
        start_step: start,
        steps,
        checkpoint,
    })
}

fn split<'a>(cfg: &RunConfig, manifest: &'a [AlignedSample]) -> &'a [AlignedSample] {
    let n = training_prefix(cfg, manifest.len());
    match cfg.eval_split {
        EvalSplit::Train => &manifest[..n],
        EvalSplit::Rest => &manifest[n..],
        EvalSplit::All => manifest,
    }
}

/// File-name form of a subset label.
pub fn subset_tag(sensors: &[SensorId]) -> String {
    sensor_list_label(sensors).replace(',', "-")
}

pub fn predictions_file(sensors: &[SensorId]) -> String {
    format!("predictions_{}.csv", subset_tag(sensors))
}

fn pose_fields(p: &Pose6DoF) -> String {
    p.translation
        .iter()
        .chain(&p.rotation)
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Clone, Debug)]
pub struct EvalSummary {
    pub reports: Vec<MetricsReport>,
    pub table: String,
}

/// Evaluates each subset from one checkpoint without modifying it.
///
/// Writes `metrics.csv`, `metrics.txt` and one `predictions_<subset>.csv`
/// per subset into `out`. Prediction rows hold every sensor's pose and the
/// fused pose, `source` telling them apart.
pub fn eval(cfg: &RunConfig, root: &Path, checkpoint: &Path, subsets: &[Vec<SensorId>], out: &Path) -> Result<EvalSummary> {
    let before = file_hash(checkpoint)?;
    let ck = Checkpoint::load(checkpoint)?;
    check_compatible(cfg, &ck, checkpoint)?;
    let mut session = Session::new(cfg)?;
    ck.restore_into(&mut session.store)?;

    let manifest = read_manifest(&root.join(MANIFEST_FILE))?;
    let chosen = split(cfg, &manifest);
    let mut needed: Vec<SensorId> = subsets.iter().flatten().copied().collect();
    needed.sort();
    needed.dedup();
    for &s in &needed {
        if !root.join(s.name()).is_dir() {
            return Err(Error::MissingSensor {
                sensor: s.name().into(),
                detail: format!("dataset {} has no {} directory", root.display(), s.name()),
            });
        }
    }
    let samples = load_samples(root, chosen, &needed, &cfg.model_config())?;
    create_dir(out)?;
    let mut reports = Vec::new();
    for subset in subsets {
        let mut pairs = Vec::new();
        let mut dump = String::from("timestamp_ns,source,gt_x,gt_y,gt_z,gt_yaw,gt_roll,gt_pitch,x,y,z,yaw,roll,pitch\n");
        for s in &samples {
            let p = session.model.predict(&session.store, s, subset, cfg.seed)?;
            let gt = pose_fields(&s.pose);
            for (sensor, pose) in &p.per_sensor {
                writeln!(dump, "{},{},{gt},{}", s.timestamp_ns, sensor, pose_fields(pose)).unwrap();
            }
            writeln!(dump, "{},fused,{gt},{}", s.timestamp_ns, pose_fields(&p.fused)).unwrap();
            pairs.push((s.pose, p.fused));
        }
        let path = out.join(predictions_file(subset));
        fs::write(&path, dump).map_err(|e| io_err(&path, e))?;
        reports.push(MetricsReport::compute(&sensor_list_label(subset), &pairs)?);
    }
    let mut csv = format!("{}\n", MetricsReport::CSV_HEADER);
    for r in &reports {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    let table = text_table(&reports);
    for (name, body) in [(METRICS_CSV, &csv), (METRICS_TXT, &table)] {
        let path = out.join(name);
        fs::write(&path, body).map_err(|e| io_err(&path, e))?;
    }
    if file_hash(checkpoint)? != before {
        return Err(Error::Numeric(format!("checkpoint {} changed during evaluation", checkpoint.display())));
    }
    Ok(EvalSummary { reports, table })
}

/// Runs the gradient-check registry, plus the failing fixture when asked.
pub fn gradcheck(inject_sign_flip: bool) -> Vec<EntryResult> {
    let mut entries = registry();
    if inject_sign_flip {
        entries.push(sign_flip_fixture());
    }
    run_entries(&entries)
}

/// Renders `metrics.csv` and `loss.csv` from `dir` as text.
pub fn report(dir: &Path) -> Result<String> {
    let mut s = String::new();
    let metrics = dir.join(METRICS_CSV);
    if metrics.exists() {
        let mut reader = csv::Reader::from_path(&metrics).map_err(|e| Error::Format {
            path: metrics.clone(),
            detail: e.to_string(),
        })?;
        let mut reports = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| Error::Format {
                path: metrics.clone(),
                detail: e.to_string(),
            })?;
            reports.push(report_from_row(&row).ok_or_else(|| Error::Format {
                path: metrics.clone(),
                detail: format!("malformed row {row:?}"),
            })?);
        }
        s.push_str(&text_table(&reports));
    }
    let losses = dir.join(LOSS_FILE);
    if losses.exists() {
        let text = fs::read_to_string(&losses).map_err(|e| io_err(&losses, e))?;
        let values: Vec<(u64, f64)> = text
            .lines()
            .skip(1)
            .filter_map(|l| {
                let mut it = l.split(',');
                Some((it.next()?.parse().ok()?, it.next()?.parse().ok()?))
            })
            .collect();
        if let (Some(first), Some(last)) = (values.first(), values.last()) {
            writeln!(
                s,
                "loss {:.6} at step {} -> {:.6} at step {} ({} steps logged)",
                first.1,
                first.0,
                last.1,
                last.0,
                values.len()
            )
            .unwrap();
        }
    }
    if s.is_empty() {
        return Err(Error::Config(format!("{} holds neither {METRICS_CSV} nor {LOSS_FILE}", dir.display())));
    }
    Ok(s)
}

fn report_from_row(row: &csv::StringRecord) -> Option<MetricsReport> {
    let v: Vec<f64> = row.iter().skip(2).map(|x| x.parse().ok()).collect::<Option<_>>()?;
    if v.len() != 15 {
        return None;
    }
    let three = |i: usize| [v[i], v[i + 1], v[i + 2]];
    Some(MetricsReport {
        label: row.get(0)?.to_string(),
        samples: row.get(1)?.parse().ok()?,
        mean_translation_m: v[0],
        mean_rotation_deg: v[1],
        mean_geodesic_deg: v[2],
        mae_translation_m: three(3),
        mae_rotation_deg: three(6),
        rmse_translation_cm: three(9),
        rmse_rotation_deg: three(12),
    })
}

/// Parsed per-sensor and fused rows of a predictions file, keyed by `(timestamp, source)`.
pub fn read_predictions(path: &Path) -> Result<BTreeMap<(i64, String), (Pose6DoF, Pose6DoF)>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let bad = |l: &str| Error::Format {
        path: path.to_path_buf(),
        detail: format!("malformed line `{l}`"),
    };
    let mut out = BTreeMap::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 14 {
            return Err(bad(line));
        }
        let nums: Vec<f64> = f[2..].iter().map(|x| x.parse()).collect::<std::result::Result<_, _>>().map_err(|_| bad(line))?;
        let pose = |o: usize| Pose6DoF::new([nums[o], nums[o + 1], nums[o + 2]], [nums[o + 3], nums[o + 4], nums[o + 5]]);
        let t: i64 = f[0].parse().map_err(|_| bad(line))?;
        out.insert((t, f[1].to_string()), (pose(0), pose(6)));
    }
    Ok(out)
}
