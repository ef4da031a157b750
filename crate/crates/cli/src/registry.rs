//! Finite-difference checks of every differentiable module at small shapes.
//!
//! | entry | module |
//! |---|---|
//! | `point_mlp` | per-point MLP of the cylindrical stream |
//! | `scatter_max` | per-voxel channel maximum |
//! | `sparse_conv` | strided sparse 3-D convolution with azimuth wrap |
//! | `cb_block` | two-stream submanifold block |
//! | `cbd_block` | block plus stride-2 downsampling |
//! | `backbone_pool` | five-block backbone with max/mean pooling |
//! | `residual_stack` | 2-D residual stack |
//! | `finetune_pe` | finetune convolutions with positional encoding |
//! | `radar_broadcast` | 1-to-3 channel radar lift |
//! | `slot_step` | one slot attention iteration |
//! | `slot_filter_slots` / `slot_filter_inputs` | full slot filter, both softmax axes |
//! | `gru` | GRU cell |
//! | `layer_norm` | layer normalization |
//! | `modality_encoding` | per-modality additive vectors |
//! | `regression_head` | shared layers and both branches |
//! | `loss_stable` / `loss_literal` | pose loss with balance factors |

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;

use polyloc::cylindrical::{CylGridConfig, PointFeatureNet, POINT_INPUT_DIM};
use polyloc::fusion::{HeadConfig, HeadOutput, ModalityEncoding, RegressionHead};
use polyloc::imaging::{Finetune, RadarBroadcast, ResidualStack};
use polyloc::numerics::gradcheck::{gradient_check, gradient_check_inputs, random_tensor, GradCheckOptions, GradCheckReport};
use polyloc::numerics::init::rng_from_seed;
use polyloc::numerics::nn::{GruCell, LayerNorm};
use polyloc::numerics::{ParamStore, Tensor};
use polyloc::objective::{pose_loss, BalanceFactors, SignMode};
use polyloc::pose::{Modality, Pose6DoF, SensorId};
use polyloc::slotfilter::{SlotConfig, SlotFilter, SoftmaxAxis};
use polyloc::sparse3d::{linear_index, pool_concat, Backbone, CbBlock, CbdBlock, SparseConv3d, SparseTensor3D};
use polyloc::Result;

/// Bound for ops whose gradient is smooth almost everywhere.
pub const SMOOTH_TOLERANCE: f64 = 1e-5;
/// Bound for max-pooling ops.
pub const POOLING_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy)]
pub struct GradEntry {
    pub name: &'static str,
    pub tolerance: f64,
    pub run: fn() -> Result<GradCheckReport>,
}

#[derive(Clone, Debug)]
pub struct EntryResult {
    pub name: &'static str,
    pub tolerance: f64,
    pub outcome: std::result::Result<GradCheckReport, String>,
}

impl EntryResult {
    pub fn passed(&self) -> bool {
        matches!(&self.outcome, Ok(r) if r.max_rel_error <= self.tolerance)
    }

    pub fn line(&self) -> String {
        let verdict = if self.passed() { "pass" } else { "FAIL" };
        match &self.outcome {
            Ok(r) => format!(
                "{verdict} {:<20} max rel error {:.3e} (bound {:.0e}, worst {}, {} scalars)",
                self.name, r.max_rel_error, self.tolerance, r.worst, r.checked_scalars
            ),
            Err(e) => format!("{verdict} {:<20} error: {e}", self.name),
        }
    }
}

fn opts() -> GradCheckOptions {
    GradCheckOptions::default()
}

fn sites(shape: [usize; 3], n: usize, c: usize, seed: u64) -> (Vec<[usize; 3]>, Tensor) {
    let mut rng = rng_from_seed(seed);
    let total = shape.iter().product();
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, total, n).into_vec();
    picked.sort();
    let coords: Vec<[usize; 3]> = picked
        .iter()
        .map(|&li| [li / (shape[1] * shape[2]), (li / shape[2]) % shape[1], li % shape[2]])
        .collect();
    debug_assert!(coords.windows(2).all(|w| linear_index(shape, w[0]) < linear_index(shape, w[1])));
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..c).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    (coords, Tensor::from_rows(&rows).unwrap())
}

/// Random biases keep ReLU inputs off the kink at exactly zero.
fn randomize_biases(store: &mut ParamStore, seed: u64) -> Result<()> {
    let rng = &mut rng_from_seed(seed);
    let ids: Vec<_> = store.iter().filter(|(_, p)| p.name.ends_with(".bias")).map(|(id, _)| id).collect();
    for id in ids {
        let shape = store.value(id).shape().to_vec();
        store.set_value(id, random_tensor(&shape, rng).map(|v| 0.1 * v))?;
    }
    Ok(())
}

fn point_mlp() -> Result<GradCheckReport> {
    let mut store = ParamStore::new();
    let rng = &mut rng_from_seed(1);
    let grid = CylGridConfig {
        bins: [4, 4, 2],
        ..CylGridConfig::default()
    };
    let net = PointFeatureNet::new(&mut store, "pf", grid, 6, rng)?;
    let x = random_tensor(&[5, POINT_INPUT_DIM], rng);
    gradient_check(&mut store, &[x], |g, v| net.point_features(g, v[0]), opts())
}

fn scatter_max() -> Result<GradCheckReport> {
    let x = random_tensor(&[9, 4], &mut rng_from_seed(2));
    let group = [0, 2, 1, 0, 2, 2, 1, 0, 3];
    gradient_check_inputs(&[x], |g, v| g.scatter_max(v[0], &group, 4), opts())
}

fn sparse_conv() -> Result<GradCheckReport> {
    let mut store = ParamStore::new();
    let rng = &mut rng_from_seed(3);
    let conv = SparseConv3d::new(&mut store, "conv", [3, 3, 3], 2, 3, 2, true, rng)?;
    store.set_value(conv.bias, random_tensor(&[3], rng))?;
    let shape = [4, 5, 3];
    let (coords, feats) = sites(shape, 14, 2, 4);
    gradient_check(
        &mut store,
        &[feats],
        |g, v| {
            let x = SparseTensor3D::new(g, shape, coords.clone(), v[0])?;
            Ok(conv.forward(g, &x)?.features)
        },
        opts(),
    )
}

fn cb_block() -> Result<GradCheckReport> {
    let mut store = ParamStore::new();
    let cb = CbBlock::new(&mut store, "cb", 2, 3, true, &mut rng_from_seed(5))?;
    randomize_biases(&mut store, 50)?;
    let shape = [4, 4, 3];
    let (coords, feats) = sites(shape, 16, 2, 6);
    gradient_check(
        &mut store,
        &[feats],
        |g, v| {
            let x = SparseTensor3D::new(g, shape, coords.clone(), v[0])?;
            Ok(cb.forward(g, &x)?.features)
        },
        opts(),
    )
}

fn cbd_block() -> Result<GradCheckReport> {
    let mut store = ParamStore::new();
    let cbd = CbdBlock::new(&mut store, "cbd", 2, 3, false, &mut rng_from_seed(7))?;
    randomize_biases(&mut store, 70)?;
    let shape = [4, 4, 4];
    let (coords, feats) = sites(shape, 18, 2, 8);
    gradient_check(
        &mut store,
        &[feats],
        |g, v| {
            let x = SparseTensor3D::new(g, shape, coords.clone(), v[0])?;
            Ok(cbd.forward(g, &x)?.features)
        },
        opts(),
    )
}

fn backbone_pool() -> Result<GradCheckReport> {
    let mut store = ParamStore::new();
    let bb = Backbone::new(&mut store, "bb", 2, 16, true, &mut rng_from_seed(9))?;
    randomize_biases(&mut store, 90)?;
    let shape = [6, 6, 4];
    let (coords, feats) = sites(shape, 40, 2, 10);
    gradient_check(
        &mut store,
        &[feats],
        |g, v| {
            let x = SparseTensor3D::new(g, shape, coords.clone(), v[0])?;
            let y = bb.forward(g, &x)?;
            pool_concat(g, &y)
        },
        opts(),
    )
}

fn residual_stack() -> Result<GradCheckReport> {
    let mut store = ParamStore::new();
    let rng = &mut rng_from_seed(11);
    let stack = ResidualStack::new(&mut store, "stack", 8, rng)?;
    randomize_biases(&mut store, 110)?;
    let x = random_tensor(&[1, 3, 16, 16], rng);
    gradient_check(&mut store, &[x], |g, v| stack.forward(g, v[0]), opts())
}

fn finetune_pe() -> Result<GradCheckReport> {
    let mut store = ParamStore::new();
    let rng = &mut rng_from_seed(12);
    let ft = Finetune::new(&mut store, "ft", 4, 4, (64, 32), rng)?;
    let x = random_tensor(&[1, 4, 8, 4], rng);
    gradient_check(&mut store, &[x], |g, v| ft.forward(g, v[0]), opts())
}

fn radar_broadcast() -> Result<GradCheckReport> {
    let mut store = ParamStore::new();
    let rng = &mut rng_from_seed(13);
    let rb = RadarBroadcast::new(&mut store, "rb", rng)?;
    let x = random_tensor(&[1, 1, 5, 4], rng);
    gradient_check(&mut store, &[x], |g, v| rb.forward(g, v[0]), opts())
}

fn slot_filter(axis: SoftmaxAxis, iters: usize, seed: u64) -> Result<(ParamStore, SlotFilter)> {
    let mut store = ParamStore::new();
    let cfg = SlotConfig {
        softmax_axis: axis,
        ..SlotConfig::new(3, 8, iters)
    };
    let f = SlotFilter::new(&mut store, "slots", cfg, &mut rng_from_seed(seed))?;
    Ok((store, f))
}

fn slot_step() -> Result<GradCheckReport> {
    let (mut store, f) = slot_filter(SoftmaxAxis::Slots, 1, 14)?;
    let rng = &mut rng_from_seed(15);
    let inputs = [random_tensor(&[6, 8], rng), random_tensor(&[3, 8], rng)];
    gradient_check(&mut store, &inputs, |g, v| f.attention_step(g, v[0], v[1]), opts())
}

fn full_filter(axis: SoftmaxAxis) -> Result<GradCheckReport> {
    let (mut store, f) = slot_filter(axis, 3, 16)?;
    let x = random_tensor(&[5, 8], &mut rng_from_seed(17));
    gradient_check(&mut store, &[x], |g, v| f.filter(g, v[0], 4), opts())
}

fn gru() -> Result<GradCheckReport> {
    let mut store = ParamStore::new();
    let rng = &mut rng_from_seed(18);
    let cell = GruCell::new(&mut store, "gru", 6, 5, rng)?;
    let inputs = [random_tensor(&[3, 5], rng), random_tensor(&[3, 6], rng)];
    gradient_check(&mut store, &inputs, |g, v| cell.forward(g, v[0], v[1]), opts())
}

fn layer_norm() -> Result<GradCheckReport> {
    let mut store = ParamStore::new();
    let rng = &mut rng_from_seed(19);
    let ln = LayerNorm::new(&mut store, "ln", 6)?;
    store.set_value(ln.gamma, random_tensor(&[6], rng))?;
    store.set_value(ln.beta, random_tensor(&[6], rng))?;
    let x = random_tensor(&[4, 6], rng);
    gradient_check(&mut store, &[x], |g, v| ln.forward(g, v[0]), opts())
}

fn modality_encoding() -> Result<GradCheckReport> {
    let mut store = ParamStore::new();
    let rng = &mut rng_from_seed(20);
    let enc = ModalityEncoding::new(&mut store, "enc", 5, rng)?;
    let x = random_tensor(&[5], rng);
    gradient_check(
        &mut store,
        &[x],
        |g, v| {
            let outs = [SensorId::L2, SensorId::C3, SensorId::R]
                .iter()
                .map(|&s| {
                    let y = enc.encode(g, v[0], s)?;
                    // square so the output depends on the encoding nonlinearly
                    Ok(g.mul(y, y)?)
                })
                .collect::<Result<Vec<_>>>()?;
            g.concat(&outs)
        },
        opts(),
    )
}

fn regression_head() -> Result<GradCheckReport> {
    let mut store = ParamStore::new();
    let rng = &mut rng_from_seed(21);
    let head = RegressionHead::new(&mut store, "head", HeadConfig::new(16), rng)?;
    let x = random_tensor(&[16], rng);
    gradient_check(
        &mut store,
        &[x],
        |g, v| {
            let out = head.forward(g, v[0])?;
            g.concat(&[out.translation, out.rotation])
        },
        opts(),
    )
}

fn loss(mode: SignMode) -> Result<GradCheckReport> {
    let mut store = ParamStore::new();
    let f = BalanceFactors::new(&mut store, "balance", mode)?;
    for (k, id) in f.ids().enumerate() {
        store.set_value(id, Tensor::scalar(0.15 * k as f64 - 0.3))?;
    }
    let gt = Pose6DoF::new([0.4, -1.0, 2.0], [0.5, -0.3, 2.9]);
    let inputs = [random_tensor(&[3], &mut rng_from_seed(22)), random_tensor(&[3], &mut rng_from_seed(23))];
    gradient_check(
        &mut store,
        &inputs,
        |g, v| {
            let out = HeadOutput {
                translation: v[0],
                rotation: v[1],
            };
            pose_loss(g, &out, &gt, &f, Modality::Radar, PI)
        },
        opts(),
    )
}

/// Every differentiable module of the pipeline.
pub fn registry() -> Vec<GradEntry> {
    let e = |name, tolerance, run| GradEntry { name, tolerance, run };
    vec![
        e("point_mlp", SMOOTH_TOLERANCE, point_mlp),
        e("scatter_max", POOLING_TOLERANCE, scatter_max),
        e("sparse_conv", SMOOTH_TOLERANCE, sparse_conv),
        e("cb_block", SMOOTH_TOLERANCE, cb_block),
        e("cbd_block", SMOOTH_TOLERANCE, cbd_block),
        e("backbone_pool", POOLING_TOLERANCE, backbone_pool),
        e("residual_stack", SMOOTH_TOLERANCE, residual_stack),
        e("finetune_pe", SMOOTH_TOLERANCE, finetune_pe),
        e("radar_broadcast", SMOOTH_TOLERANCE, radar_broadcast),
        e("slot_step", SMOOTH_TOLERANCE, slot_step),
        e("slot_filter_slots", SMOOTH_TOLERANCE, || full_filter(SoftmaxAxis::Slots)),
        e("slot_filter_inputs", SMOOTH_TOLERANCE, || full_filter(SoftmaxAxis::Inputs)),
        e("gru", SMOOTH_TOLERANCE, gru),
        e("layer_norm", SMOOTH_TOLERANCE, layer_norm),
        e("modality_encoding", SMOOTH_TOLERANCE, modality_encoding),
        e("regression_head", SMOOTH_TOLERANCE, regression_head),
        e("loss_stable", SMOOTH_TOLERANCE, || loss(SignMode::Stable)),
        e("loss_literal", SMOOTH_TOLERANCE, || loss(SignMode::Literal)),
    ]
}

fn sign_flip() -> Result<GradCheckReport> {
    let x = random_tensor(&[4], &mut rng_from_seed(24));
    gradient_check_inputs(
        &[x],
        |g, v| {
            let value = g.value(v[0]).map(|a| 2.0 * a);
            Ok(g.custom(&[v[0]], value, Box::new(|ctx| vec![Some(ctx.grad.map(|d| -2.0 * d))])))
        },
        opts(),
    )
}

/// Doubling op whose backward has the wrong sign; must fail.
pub fn sign_flip_fixture() -> GradEntry {
    GradEntry {
        name: "fixture_sign_flip",
        tolerance: SMOOTH_TOLERANCE,
        run: sign_flip,
    }
}

pub fn run_entries(entries: &[GradEntry]) -> Vec<EntryResult> {
    entries
        .par_iter()
        .map(|e| EntryResult {
            name: e.name,
            tolerance: e.tolerance,
            outcome: (e.run)().map_err(|err| err.to_string()),
        })
        .collect()
}
