//! Acceptance run: one pass/FAIL line per criterion A1–A8.
//!
//! Runs as a plain binary (`harness = false`) so every line is printed even
//! when all criteria pass. A2 trains for 500 steps and dominates the runtime;
//! A7 evaluates the checkpoint A2 leaves behind.

#[path = "../../core/tests/oracle/mod.rs"]
mod oracle;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use polyloc::checkpoint::{file_hash, Checkpoint};
use polyloc::cylindrical::{CylGridConfig, PointCloud, PointFeatureNet};
use polyloc::fusion::{HeadConfig, HeadOutput, RegressionHead};
use polyloc::imaging::ImageStream;
use polyloc::model::{ModelConfig, PointStream};
use polyloc::numerics::gradcheck::random_tensor;
use polyloc::numerics::init::rng_from_seed;
use polyloc::numerics::macs;
use polyloc::numerics::{Graph, ParamId, ParamStore, Tensor, Var};
use polyloc::objective::{net_loss, pose_loss, weighted_term, BalanceFactors, SignMode};
use polyloc::pose::{angle_diff, Pose6DoF, SensorId};
use polyloc::slotfilter::{token_matrix, SlotConfig, SlotFilter, SoftmaxAxis};
use polyloc::sparse3d::{Backbone, CbBlock, CbdBlock, SparseTensor3D};
use polyloc::sync::{align, gap_fill, nearest_linear, GroundTruthStream, KdTree, OdometryStep, SensorStream};
use polyloc::synth::SynthConfig;
use polyloc_cli::commands::{self, predictions_file, read_predictions, standard_subsets, CHECKPOINT_FILE};
use polyloc_cli::config::{EvalSplit, RunConfig};
use polyloc_cli::registry::{registry, run_entries, POOLING_TOLERANCE, SMOOTH_TOLERANCE};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn a1_gradients() -> Outcome {
    let start = Instant::now();
    let entries = registry();
    let results = run_entries(&entries);
    let elapsed = start.elapsed();
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    let worst = |pooling: bool| {
        results
            .iter()
            .filter(|r| (r.tolerance == POOLING_TOLERANCE) == pooling)
            .filter_map(|r| r.outcome.as_ref().ok().map(|o| o.max_rel_error))
            .fold(0.0, f64::max)
    };
    let tolerances_ok = results
        .iter()
        .all(|r| r.tolerance == SMOOTH_TOLERANCE || r.tolerance == POOLING_TOLERANCE);
    let detail = format!(
        "{} entries, worst smooth {:.2e} (≤1e-5), worst pooling {:.2e} (≤1e-4), {:.1} s (<300 s){}",
        results.len(),
        worst(false),
        worst(true),
        elapsed.as_secs_f64(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(", failed: {}", failed.join(", "))
        }
    );
    check(
        failed.is_empty() && tolerances_ok && elapsed < Duration::from_secs(300),
        detail,
    )
}

struct Overfit {
    dir: tempfile::TempDir,
    cfg: RunConfig,
}

impl Overfit {
    fn data(&self) -> PathBuf {
        self.dir.path().join("data")
    }

    fn run(&self) -> PathBuf {
        self.dir.path().join("run")
    }
}

/// Desk-scale overfit configuration: 16 training samples, full batch, 500 steps.
///
/// Rotation residuals are in units of π while translation residuals are in
/// meters behind a ×40 output scale, so the rotation factor starts at
/// `β₀ = −3` (weight e³) to put both on a comparable footing from step 0.
/// Adam moves each factor by at most about `lr` per step, too slowly to find
/// that balance within 500 steps from zero.
fn overfit_config(root: &Path) -> RunConfig {
    RunConfig {
        dataset: root.join("data"),
        train_samples: 16,
        batch_size: 16,
        epochs: 500,
        max_steps: 500,
        lr: 3e-4,
        balance_init: (0.0, -3.0),
        eval_split: EvalSplit::Train,
        ..RunConfig::default()
    }
}

fn a2_overfit(state: &mut Option<Overfit>) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = overfit_config(dir.path());
    let run = Overfit { dir, cfg };
    let m = run.cfg.model_config();
    if (m.grid.bins, m.image, m.feature_dim, m.slots, m.slot_iters) != ([48, 36, 16], (64, 64), 128, 8, 3) {
        return Err(format!("not at desk dimensions: {m:?}"));
    }
    let start = Instant::now();
    commands::synth_gen(&run.cfg, &run.data()).map_err(|e| e.to_string())?;
    let trained = commands::train(&run.cfg, &run.data(), None, &run.run()).map_err(|e| e.to_string())?;
    let all = vec![SensorId::ALL.to_vec()];
    let summary = commands::eval(
        &run.cfg,
        &run.data(),
        &trained.checkpoint,
        &all,
        &run.dir.path().join("a2-eval"),
    )
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let report = &summary.reports[0];
    let diameter = run.cfg.synth_config().world().map_err(|e| e.to_string())?.diameter();
    let bound = 0.05 * diameter;
    let detail = format!(
        "{} steps on {} samples: fused translation {:.3} m (<{:.3} m), rotation {:.3}° (<2°), geodesic {:.3}°, {:.0} s (<1800 s)",
        trained.steps.len(),
        report.samples,
        report.mean_translation_m,
        bound,
        report.mean_rotation_deg,
        report.mean_geodesic_deg,
        elapsed.as_secs_f64()
    );
    let ok = trained.steps.len() == 500
        && report.samples == 16
        && report.mean_translation_m < bound
        && report.mean_rotation_deg < 2.0
        && elapsed < Duration::from_secs(1800);
    *state = Some(run);
    check(ok, detail)
}

fn a3_sparse_oracle() -> Outcome {
    use oracle::{compare, dense_backbone, dense_cb, dense_cbd, densify, random_case, randomize_biases};
    let mut worst = [0.0f64; 3];
    let mut counts = [0usize; 3];
    for seed in 0..100u64 {
        let wrap = seed % 2 == 1;
        let case = random_case(seed + 10_000, 8, 3);
        let dense_in = densify(&case, 3);
        let mut store = ParamStore::new();
        let mut rng = rng_from_seed(seed);
        let cb = CbBlock::new(&mut store, "cb", 3, 4, wrap, &mut rng).map_err(|e| e.to_string())?;
        let cbd = CbdBlock::new(&mut store, "cbd", 3, 4, wrap, &mut rng).map_err(|e| e.to_string())?;
        let bb = Backbone::new(&mut store, "bb", 3, 8, wrap, &mut rng).map_err(|e| e.to_string())?;
        randomize_biases(&mut store, seed);
        let mut g = Graph::with_params(&store);
        let x = SparseTensor3D::from_entries(&mut g, case.shape, case.entries.clone()).map_err(|e| e.to_string())?;
        let y = cb.forward(&mut g, &x).map_err(|e| e.to_string())?;
        worst[0] = worst[0].max(compare(&g, &y, &dense_cb(&dense_in, &store, &cb)));
        let y = cbd.forward(&mut g, &x).map_err(|e| e.to_string())?;
        worst[1] = worst[1].max(compare(&g, &y, &dense_cbd(&dense_in, &store, &cbd)));
        let y = bb.forward(&mut g, &x).map_err(|e| e.to_string())?;
        worst[2] = worst[2].max(compare(&g, &y, &dense_backbone(&dense_in, &store, &bb)));
        for c in &mut counts {
            *c += 1;
        }
    }
    check(
        worst.iter().all(|&w| w <= 1e-10) && counts.iter().all(|&c| c >= 100),
        format!(
            "{} inputs each (grids ≤8³, wrap on and off): max |sparse − dense| CB {:.1e}, CBD {:.1e}, backbone {:.1e} (≤1e-10)",
            counts[0], worst[0], worst[1], worst[2]
        ),
    )
}

fn slot_filter(k: usize, d: usize, t: usize, axis: SoftmaxAxis, seed: u64) -> (ParamStore, SlotFilter) {
    let mut store = ParamStore::new();
    let mut cfg = SlotConfig::new(k, d, t);
    cfg.softmax_axis = axis;
    let f = SlotFilter::new(&mut store, "slots", cfg, &mut rng_from_seed(seed)).unwrap();
    (store, f)
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    let (n, d) = t.dims2().unwrap();
    (0..n).map(|i| (0..d).map(|j| t.at2(i, j)).collect()).collect()
}

fn a4_slot_contracts() -> Outcome {
    let mut shapes_ok = true;
    let mut worst_column: f64 = 0.0;
    for axis in [SoftmaxAxis::Slots, SoftmaxAxis::Inputs] {
        for (n, k) in [(1, 1), (5, 3), (16, 8), (64, 8), (37, 20), (256, 4)] {
            let (store, f) = slot_filter(k, 16, 3, axis, (n * 31 + k) as u64);
            let mut g = Graph::with_params(&store);
            let x = g.input(random_tensor(&[n, 16], &mut rng_from_seed(n as u64)));
            let s = f.init_slots(&mut g, 5).unwrap();
            let q = f.queries(&mut g, s).unwrap();
            let att = f.attend(&mut g, x, q).unwrap();
            shapes_ok &= g.shape(att.affinity) == [n, k] && g.shape(att.weights) == [n, k];
            let w = g.value(att.weights);
            for j in 0..k {
                let col: f64 = (0..n).map(|i| w.at2(i, j)).sum();
                worst_column = worst_column.max((col - 1.0).abs());
            }
        }
    }

    let (store, f) = slot_filter(8, 128, 3, SoftmaxAxis::Slots, 3);
    let cost = |n: usize| {
        let mut g = Graph::with_params(&store);
        let x = g.input(random_tensor(&[n, 128], &mut rng_from_seed(n as u64)));
        let s = f.init_slots(&mut g, 0).unwrap();
        let q = f.queries(&mut g, s).unwrap();
        macs::measure(|| f.attend(&mut g, x, q).unwrap()).1 as f64
    };
    let c = [cost(64), cost(128), cost(256)];
    let ratios = [c[1] / c[0], c[2] / c[1]];

    let (store, f) = slot_filter(8, 32, 3, SoftmaxAxis::Inputs, 4);
    let x = random_tensor(&[12, 32], &mut rng_from_seed(9));
    let doubled: Vec<Vec<f64>> = rows(&x).iter().flat_map(|r| [r.clone(), r.clone()]).collect();
    let run = |t: Tensor| {
        let mut g = Graph::with_params(&store);
        let v = g.input(t);
        let y = f.filter(&mut g, v, 21).unwrap();
        g.value(y).data().to_vec()
    };
    let a = run(x);
    let b = run(token_matrix(&doubled).unwrap());
    let dup = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);

    check(
        shapes_ok && worst_column <= 1e-12 && ratios.iter().all(|r| (r - 2.0).abs() <= 0.2) && dup <= 1e-9,
        format!(
            "affinity N×K {}, max |colsum − 1| {:.1e} (≤1e-12), attention MAC ratios {:.3}, {:.3} (2±0.2), duplication Δ {:.1e} (≤1e-9)",
            if shapes_ok { "ok" } else { "WRONG" },
            worst_column,
            ratios[0],
            ratios[1],
            dup
        ),
    )
}

fn a5_sync() -> Outcome {
    // k-d tree against a linear scan
    let mut rng = rng_from_seed(55);
    let points: Vec<[f64; 3]> = (0..10_000)
        .map(|_| [0; 3].map(|_| rng.random_range(-50.0..50.0)))
        .collect();
    let tree = KdTree::build(points.clone()).map_err(|e| e.to_string())?;
    let mut mismatches = 0;
    for _ in 0..1000 {
        let q = [0; 3].map(|_| rng.random_range(-60.0..60.0));
        if Some(tree.nearest(q)) != nearest_linear(&points, q) {
            mismatches += 1;
        }
    }

    // align against brute force on a 4/16/20 Hz run
    let synth = SynthConfig {
        radar_hz: 4.0,
        camera_hz: 16.0,
        lidar_hz: 20.0,
        ..SynthConfig::default()
    };
    let gt_ts = synth.gt_timestamps();
    let gt_poses: Vec<Pose6DoF> = gt_ts.iter().map(|&t| synth.trajectory.pose_at(t)).collect();
    let gt = GroundTruthStream::new(gt_ts.clone(), gt_poses.clone()).map_err(|e| e.to_string())?;
    let streams: Vec<SensorStream> = SensorId::ALL
        .into_iter()
        .map(|s| SensorStream::from_timestamps(s, synth.timestamps(s)).unwrap())
        .collect();
    let max_gap = 250_000_000;
    let aligned = align(&streams, &gt, max_gap).map_err(|e| e.to_string())?;
    let brute = brute_force_align(&streams, &gt);
    let same = aligned.samples.len() == brute.len()
        && aligned.samples.iter().zip(&brute).all(|(a, (t, pose, frames))| {
            a.timestamp_ns == *t
                && a.pose == *pose
                && a.frames.iter().all(|(s, f)| frames.get(s) == Some(&f.timestamp_ns))
                && a.frames.len() == 6
        });

    // gap_fill from noiseless odometry
    let (lo, hi) = (3_000_000_000, 5_000_000_000);
    let keep: Vec<usize> = (0..gt_ts.len()).filter(|&i| gt_ts[i] <= lo || gt_ts[i] >= hi).collect();
    let holed = GroundTruthStream::new(
        keep.iter().map(|&i| gt_ts[i]).collect(),
        keep.iter().map(|&i| gt_poses[i]).collect(),
    )
    .map_err(|e| e.to_string())?;
    let odometry: Vec<OdometryStep> = gt_ts
        .windows(2)
        .zip(gt_poses.windows(2))
        .map(|(t, p)| OdometryStep {
            t0: t[0],
            t1: t[1],
            delta: p[0].relative_to(&p[1]),
        })
        .collect();
    let (filled, report) = gap_fill(&holed, &odometry, max_gap).map_err(|e| e.to_string())?;
    let truth: BTreeMap<i64, Pose6DoF> = gt_ts.iter().copied().zip(gt_poses.iter().copied()).collect();
    let mut fill_err: f64 = 0.0;
    for (t, p) in filled.timestamps().iter().zip(filled.poses()) {
        let Some(want) = truth.get(t) else {
            fill_err = f64::INFINITY;
            continue;
        };
        for k in 0..3 {
            fill_err = fill_err
                .max((p.translation[k] - want.translation[k]).abs())
                .max(angle_diff(p.rotation[k], want.rotation[k]).abs());
        }
    }
    let removed = gt_ts.len() - keep.len();
    let fill_ok = report.filled == removed && report.unbridged.is_empty() && filled.len() == gt_ts.len();

    check(
        mismatches == 0 && same && fill_ok && fill_err <= 1e-9,
        format!(
            "k-d tree {mismatches} mismatches in 1e3 queries over 1e4 points; align {} on {} samples; gap fill {} of {removed} poses, max error {:.1e} (≤1e-9)",
            if same { "equals brute force" } else { "DIFFERS from brute force" },
            brute.len(),
            report.filled,
            fill_err
        ),
    )
}

type BruteSample = (i64, Pose6DoF, BTreeMap<SensorId, i64>);

fn brute_force_align(streams: &[SensorStream], gt: &GroundTruthStream) -> Vec<BruteSample> {
    let radar = streams.iter().find(|s| s.sensor == SensorId::R).unwrap();
    let mut out = Vec::new();
    for &t in radar.timestamps() {
        if !gt.contains(t) {
            continue;
        }
        let pose = gt.interpolate(t).unwrap();
        let mut frames = BTreeMap::from([(SensorId::R, t)]);
        for st in streams.iter().filter(|s| s.sensor != SensorId::R) {
            let mut best: Option<(f64, i64)> = None;
            for &u in st.timestamps().iter().filter(|&&u| gt.contains(u)) {
                let p = gt.interpolate(u).unwrap().translation;
                let d: f64 = (0..3).map(|k| (p[k] - pose.translation[k]).powi(2)).sum();
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, u));
                }
            }
            frames.insert(st.sensor, best.unwrap().1);
        }
        out.push((t, pose, frames));
    }
    out
}

fn a6_loss() -> Outcome {
    // additivity of the six-sensor loss, value and gradient
    let mut store = ParamStore::new();
    let factors = BalanceFactors::new(&mut store, "balance", SignMode::Stable).unwrap();
    let mut rng = rng_from_seed(66);
    let ids: Vec<ParamId> = factors.ids().collect();
    for &id in &ids {
        store.set_value(id, Tensor::scalar(rng.random_range(-1.0..1.0))).unwrap();
    }
    let heads: Vec<(Tensor, Tensor, Pose6DoF)> = SensorId::ALL
        .iter()
        .map(|_| {
            let t = random_tensor(&[3], &mut rng);
            let r = random_tensor(&[3], &mut rng);
            let gt = Pose6DoF::new([0; 3].map(|_| rng.random_range(-5.0..5.0)), [0; 3].map(|_| rng.random_range(-3.0..3.0)));
            (t, r, gt)
        })
        .collect();
    let unit = std::f64::consts::PI;
    let sensor_loss = |g: &mut Graph<'_>, i: usize| -> (Var, HeadOutput) {
        let (t, r, gt) = &heads[i];
        let out = HeadOutput {
            translation: g.input(t.clone()),
            rotation: g.input(r.clone()),
        };
        let l = pose_loss(g, &out, gt, &factors, SensorId::ALL[i].modality(), unit).unwrap();
        (l, out)
    };
    let mut g = Graph::with_params(&store);
    let mut losses = BTreeMap::new();
    let mut outs = Vec::new();
    for (i, s) in SensorId::ALL.into_iter().enumerate() {
        let (l, o) = sensor_loss(&mut g, i);
        losses.insert(s, l);
        outs.push(o);
    }
    let net = net_loss(&mut g, &losses).unwrap();
    let net_grads = g.backward(net).unwrap();
    let mut sum_value = 0.0;
    let mut sum_param = vec![0.0; ids.len()];
    let mut additivity: f64 = 0.0;
    for i in 0..6 {
        let mut gi = Graph::with_params(&store);
        let (l, o) = sensor_loss(&mut gi, i);
        sum_value += gi.value(l).item();
        let gr = gi.backward(l).unwrap();
        for (j, &id) in ids.iter().enumerate() {
            sum_param[j] += gr.param(id).map_or(0.0, |t| t.item());
        }
        for (a, b) in [(o.translation, outs[i].translation), (o.rotation, outs[i].rotation)] {
            let (x, y) = (gr.wrt(a).unwrap(), net_grads.wrt(b).unwrap());
            for (p, q) in x.data().iter().zip(y.data()) {
                additivity = additivity.max((p - q).abs());
            }
        }
    }
    additivity = additivity.max((sum_value - g.value(net).item()).abs());
    for (j, &id) in ids.iter().enumerate() {
        let n = net_grads.param(id).map_or(0.0, |t| t.item());
        additivity = additivity.max((n - sum_param[j]).abs());
    }

    // stable mode: the minimizer of c·e^{-α} + α is ln c
    let term = |mode: SignMode, c: f64, alpha: f64| {
        let mut g = Graph::new();
        let r = g.input(Tensor::scalar(c));
        let a = g.input(Tensor::scalar(alpha));
        let l = weighted_term(&mut g, r, a, mode).unwrap();
        g.value(l).item()
    };
    let mut worst_alpha: f64 = 0.0;
    for c in [0.05, 0.5, 1.0, 3.7, 42.0] {
        let found = golden_section(|a| term(SignMode::Stable, c, a), -10.0, 10.0, 1e-9);
        worst_alpha = worst_alpha.max((found - f64::ln(c)).abs());
    }

    // literal mode keeps decreasing as α goes down
    let literal_ok = [0.05, 1.0, 3.7].iter().all(|&c| {
        let v: Vec<f64> = [0.0, -10.0, -20.0].iter().map(|&a| term(SignMode::Literal, c, a)).collect();
        v[0] > v[1] && v[1] > v[2]
    });
    let at = |a: f64| term(SignMode::Literal, 1.0, a);

    check(
        additivity <= 1e-12 && worst_alpha <= 1e-4 && literal_ok,
        format!(
            "additivity Δ {:.1e} (≤1e-12), max |α* − ln c| {:.1e} (≤1e-4), literal L(0)={:.3} > L(−10)={:.3} > L(−20)={:.3}: {}",
            additivity,
            worst_alpha,
            at(0.0),
            at(-10.0),
            at(-20.0),
            if literal_ok { "monotone" } else { "NOT monotone" }
        ),
    )
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    while b - a > tol {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - phi * (b - a);
        d = a + phi * (b - a);
    }
    (a + b) / 2.0
}

fn a7_on_demand(state: &Option<Overfit>) -> Outcome {
    let Some(run) = state else {
        return Err("no checkpoint, A2 did not complete".into());
    };
    let ck_path = run.run().join(CHECKPOINT_FILE);
    let before = file_hash(&ck_path).map_err(|e| e.to_string())?;
    let step = Checkpoint::load(&ck_path).map_err(|e| e.to_string())?.step;
    let subsets = standard_subsets();
    let out = run.dir.path().join("a7-eval");
    let summary = commands::eval(&run.cfg, &run.data(), &ck_path, &subsets, &out).map_err(|e| e.to_string())?;
    let unchanged = file_hash(&ck_path).map_err(|e| e.to_string())? == before
        && Checkpoint::load(&ck_path).map_err(|e| e.to_string())?.step == step;
    let mut singleton_rows = 0;
    let mut singleton_ok = true;
    for subset in subsets.iter().filter(|s| s.len() == 1) {
        let rows = read_predictions(&out.join(predictions_file(subset))).map_err(|e| e.to_string())?;
        let name = subset[0].name();
        for ((t, source), (_, fused)) in &rows {
            if source != "fused" {
                continue;
            }
            let Some((_, single)) = rows.get(&(*t, name.to_string())) else {
                singleton_ok = false;
                continue;
            };
            let bits = |p: &Pose6DoF| p.translation.iter().chain(&p.rotation).map(|v| v.to_bits()).collect::<Vec<_>>();
            singleton_ok &= bits(fused) == bits(single);
            singleton_rows += 1;
        }
    }
    let labels: Vec<&str> = summary.reports.iter().map(|r| r.label.as_str()).collect();
    check(
        summary.reports.len() == 7 && unchanged && singleton_ok && singleton_rows > 0,
        format!(
            "{} subsets from one checkpoint [{}], checkpoint {}, singleton fused = per-sensor bit-exact on {} rows: {}",
            summary.reports.len(),
            labels.join(" | "),
            if unchanged { "unchanged" } else { "MODIFIED" },
            singleton_rows,
            singleton_ok
        ),
    )
}

fn a8_full_scale() -> Outcome {
    let cfg = ModelConfig::full_scale();
    cfg.validate().map_err(|e| e.to_string())?;
    let mut rng = rng_from_seed(8);

    // image stream: modules built at full size, finetune stage run for real
    let mut store = ParamStore::new();
    let stream = ImageStream::new(&mut store, "image", cfg.image_channels, cfg.feature_dim, cfg.image, &mut rng)
        .map_err(|e| e.to_string())?;
    let (feat, tokens) = stream.shape_trace().map_err(|e| e.to_string())?;
    let mut g = Graph::with_params(&store);
    let x = g.input(random_tensor(&[1, feat[0], feat[1], feat[2]], &mut rng));
    let y = stream.finetune.forward(&mut g, x).map_err(|e| e.to_string())?;
    let token_shape = g.shape(y).to_vec();
    drop(g);
    drop(store);

    // LiDAR stream on a real cloud
    let mut store = ParamStore::new();
    let grid = CylGridConfig::default();
    let net = PointFeatureNet::new(&mut store, "point.mlp", grid, cfg.point_dim, &mut rng).map_err(|e| e.to_string())?;
    let backbone = Backbone::new(&mut store, "point.backbone", cfg.point_dim, cfg.backbone_divisor, true, &mut rng)
        .map_err(|e| e.to_string())?;
    let point = PointStream { net, backbone };
    let cloud = PointCloud::new(
        (0..3000)
            .map(|_| [rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), rng.random_range(-3.0..7.0)])
            .collect(),
        None,
    )
    .map_err(|e| e.to_string())?;
    let mut g = Graph::with_params(&store);
    let pooled = point.forward(&mut g, &cloud).map_err(|e| e.to_string())?;
    let pooled_len = g.shape(pooled).to_vec();
    drop(g);
    drop(store);

    // regression head
    let mut store = ParamStore::new();
    let head = RegressionHead::new(&mut store, "head", HeadConfig::new(cfg.feature_dim), &mut rng).map_err(|e| e.to_string())?;
    let mut g = Graph::with_params(&store);
    let f = g.input(random_tensor(&[cfg.feature_dim], &mut rng));
    let out = head.forward(&mut g, f).map_err(|e| e.to_string())?;
    // output width of each layer along a branch
    let trace = |layers: &[polyloc::numerics::nn::Linear]| layers.iter().map(|l| l.n_out).collect::<Vec<_>>();
    let t_trace = trace(&head.translation.layers);
    let r_trace = trace(&head.rotation.layers);
    let outputs = [g.shape(out.translation).to_vec(), g.shape(out.rotation).to_vec()];

    let ok = cfg.image == (512, 512)
        && feat == [512, 64, 64]
        && tokens == [256, 1024]
        && token_shape == [256, 1024]
        && pooled_len == [1024]
        && t_trace == [1024, 512, 256, 3]
        && r_trace == [1024, 512, 256, 3]
        && outputs.iter().all(|s| s == &[3]);
    check(
        ok,
        format!(
            "image 3×{}×{} → {}×{}×{} → {}×{} (computed {:?}); LiDAR pooled {:?}; branches {:?} / {:?}",
            cfg.image.0, cfg.image.1, feat[0], feat[1], feat[2], tokens[0], tokens[1], token_shape, pooled_len, t_trace, r_trace
        ),
    )
}

fn run_criterion(id: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let (verdict, detail, ok) = match outcome {
        Ok(d) => ("pass", d, true),
        Err(d) => ("FAIL", d, false),
    };
    println!("{id} {verdict}  {detail}  [{secs:.1} s]");
    ok
}

fn main() -> ExitCode {
    let mut overfit = None;
    let results = [
        run_criterion("A1", a1_gradients),
        run_criterion("A3", a3_sparse_oracle),
        run_criterion("A4", a4_slot_contracts),
        run_criterion("A5", a5_sync),
        run_criterion("A6", a6_loss),
        run_criterion("A8", a8_full_scale),
        run_criterion("A2", || a2_overfit(&mut overfit)),
        run_criterion("A7", || a7_on_demand(&overfit)),
    ];
    let failed = results.iter().filter(|&&ok| !ok).count();
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
