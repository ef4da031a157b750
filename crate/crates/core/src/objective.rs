//! Pose loss with learnable balance factors, the six-sensor sum and one
//! optimizer step.
//!
//! Per sensor the loss is
//!
//! ```text
//! stable:  L = ‖Δt‖₁·e^{-α} + α + ‖Δr‖₁·e^{-β} + β
//! literal: L = ‖Δt‖₁·e^{+α} + α + ‖Δr‖₁·e^{+β} + β
//! ```
//!
//! with one `(α, β)` pair per modality. `Δr` is the wrapped Euler difference
//! in the head's rotation units.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::HeadOutput;
use crate::model::{Model, SensorSample};
use crate::numerics::adam::AdamState;
use crate::numerics::init::mix_seed;
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::pose::{Modality, Pose6DoF, SensorId};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignMode {
    /// `e^{-α}` weighting, bounded below in `α`.
    #[default]
    Stable,
    /// `e^{+α}` weighting, unbounded below in `α`.
    Literal,
}

/// One `(α, β)` pair per modality, initialized to zero.
#[derive(Clone, Debug)]
pub struct BalanceFactors {
    pub translation: [ParamId; 3],
    pub rotation: [ParamId; 3],
    pub mode: SignMode,
}

impl BalanceFactors {
    pub fn new(store: &mut ParamStore, name: &str, mode: SignMode) -> Result<Self> {
        let mut reg = |kind: &str, m: Modality| store.register(format!("{name}.{kind}.{}", m.name()), Tensor::scalar(0.0));
        let translation = [
            reg("alpha", Modality::PointCloud)?,
            reg("alpha", Modality::Image)?,
            reg("alpha", Modality::Radar)?,
        ];
        let rotation = [
            reg("beta", Modality::PointCloud)?,
            reg("beta", Modality::Image)?,
            reg("beta", Modality::Radar)?,
        ];
        Ok(BalanceFactors {
            translation,
            rotation,
            mode,
        })
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.translation.iter().chain(&self.rotation).copied()
    }
}

/// `residual · e^{∓a} + a` for a one-element residual and factor.
pub fn weighted_term(g: &mut Graph<'_>, residual: Var, factor: Var, mode: SignMode) -> Result<Var> {
    let exponent = match mode {
        SignMode::Stable => g.scale(factor, -1.0),
        SignMode::Literal => factor,
    };
    let w = g.exp(exponent);
    let r = g.mul_scalar_var(residual, w)?;
    g.add(r, factor)
}

/// `‖pred - gt‖₁` over translations and wrapped `‖pred - gt/unit‖₁` over rotations.
pub fn residuals(g: &mut Graph<'_>, out: &HeadOutput, gt: &Pose6DoF, rotation_unit: f64) -> Result<(Var, Var)> {
    let t_gt = g.constant(Tensor::from_vec(gt.translation.to_vec()));
    let dt = g.sub(out.translation, t_gt)?;
    let dt = g.abs(dt);
    let dt = g.sum(dt);
    let r_gt = g.constant(Tensor::from_vec(gt.rotation.iter().map(|r| r / rotation_unit).collect()));
    let dr = g.sub(out.rotation, r_gt)?;
    let dr = g.wrap_periodic(dr, 2.0 * PI / rotation_unit);
    let dr = g.abs(dr);
    let dr = g.sum(dr);
    Ok((dt, dr))
}

/// Loss of one sensor's prediction against the ground truth.
pub fn pose_loss(
    g: &mut Graph<'_>,
    out: &HeadOutput,
    gt: &Pose6DoF,
    factors: &BalanceFactors,
    modality: Modality,
    rotation_unit: f64,
) -> Result<Var> {
    let (dt, dr) = residuals(g, out, gt, rotation_unit)?;
    let alpha = g.param(factors.translation[modality.index()]);
    let beta = g.param(factors.rotation[modality.index()]);
    let lt = weighted_term(g, dt, alpha, factors.mode)?;
    let lr = weighted_term(g, dr, beta, factors.mode)?;
    g.add(lt, lr)
}

/// Plain sum of the six per-sensor losses, in sensor order.
pub fn net_loss(g: &mut Graph<'_>, losses: &BTreeMap<SensorId, Var>) -> Result<Var> {
    if let Some(missing) = SensorId::ALL.into_iter().find(|s| !losses.contains_key(s)) {
        return Err(Error::Config(format!("net loss needs all six sensors, {missing} is missing")));
    }
    let terms: Vec<Var> = losses.values().copied().collect();
    g.add_n(&terms)
}

/// Slot-noise seed for one sensor of one sample at one step.
pub fn training_seed(seed: u64, step: u64, sample: usize, sensor: SensorId) -> u64 {
    mix_seed(&[seed, step, sample as u64, sensor.index() as u64])
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    /// Batch mean of the net loss.
    pub loss: f64,
    /// Batch mean of each sensor's loss.
    pub per_sensor: BTreeMap<SensorId, f64>,
}

/// Net loss of one sample and its parameter gradients.
pub fn sample_gradients(
    model: &Model,
    factors: &BalanceFactors,
    store: &ParamStore,
    sample: &SensorSample,
    seeds: impl Fn(SensorId) -> u64,
) -> Result<(f64, BTreeMap<SensorId, f64>, Vec<(ParamId, Tensor)>)> {
    let mut g = Graph::with_params(store);
    let unit = model.head.config.rotation_unit();
    let mut losses = BTreeMap::new();
    for s in SensorId::ALL {
        let frame = sample.frame(s)?;
        let out = model.sensor_output(&mut g, s, frame, seeds(s))?;
        losses.insert(s, pose_loss(&mut g, &out, &sample.pose, factors, s.modality(), unit)?);
    }
    let total = net_loss(&mut g, &losses)?;
    let values = losses.iter().map(|(&s, &v)| (s, g.value(v).item())).collect();
    let loss = g.value(total).item();
    let grads = g.backward(total)?.into_param_grads();
    Ok((loss, values, grads))
}

/// Forward and backward over `batch`, averaged, followed by one Adam update.
pub fn train_step(
    model: &Model,
    factors: &BalanceFactors,
    store: &mut ParamStore,
    adam: &mut AdamState,
    batch: &[SensorSample],
    step: u64,
    seed: u64,
) -> Result<StepMetrics> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("training batch is empty".into()));
    }
    let results = {
        let frozen: &ParamStore = store;
        batch
            .par_iter()
            .enumerate()
            .map(|(i, sample)| sample_gradients(model, factors, frozen, sample, |s| training_seed(seed, step, i, s)))
            .collect::<Result<Vec<_>>>()?
    };
    let n = batch.len() as f64;
    let loss = results.iter().map(|r| r.0).sum::<f64>() / n;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss at step {step}")));
    }
    let mut per_sensor = BTreeMap::new();
    store.zero_grads();
    for (_, values, grads) in &results {
        for (s, v) in values {
            *per_sensor.entry(*s).or_insert(0.0) += v / n;
        }
        for (id, gr) in grads {
            store.accumulate_grad(*id, gr)?;
        }
    }
    store.scale_grads(1.0 / n);
    adam.step(store).map_err(|e| match e {
        Error::Numeric(msg) => Error::Numeric(format!("step {step}: {msg}")),
        other => other,
    })?;
    Ok(StepMetrics { step, loss, per_sensor })
}
