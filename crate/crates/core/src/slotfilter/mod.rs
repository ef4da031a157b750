//! Slot attention over a token set.
//!
//! `K` learnable slots compete for `N` input tokens. Each iteration forms the
//! `N×K` affinity between projected tokens and projected slots, normalizes it
//! into per-slot weights over the inputs, aggregates the projected tokens and
//! feeds the result to a GRU that updates the slots. The final slots pass
//! through a residual MLP and layer normalization and are averaged into one
//! feature vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::init::{normal, rng_from_seed, xavier_uniform};
use crate::numerics::nn::{GruCell, LayerNorm, Mlp};
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};

/// Axis along which the affinity matrix is softmax-normalized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SoftmaxAxis {
    /// Each token distributes its attention over the slots.
    #[default]
    Slots,
    /// Each slot distributes its attention over the tokens.
    Inputs,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlotConfig {
    pub slots: usize,
    pub dim: usize,
    pub iters: usize,
    pub softmax_axis: SoftmaxAxis,
}

impl SlotConfig {
    pub fn new(slots: usize, dim: usize, iters: usize) -> Self {
        SlotConfig {
            slots,
            dim,
            iters,
            softmax_axis: SoftmaxAxis::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.slots == 0 || self.iters == 0 || self.dim == 0 {
            return Err(Error::Config(format!(
                "slot attention needs K, T and D at least 1, got K={} T={} D={}",
                self.slots, self.iters, self.dim
            )));
        }
        Ok(())
    }
}

impl Default for SlotConfig {
    fn default() -> Self {
        SlotConfig::new(20, 1024, 3)
    }
}

/// Intermediate tensors of one attention step.
#[derive(Clone, Copy, Debug)]
pub struct Attention {
    /// `N×K` scaled affinities.
    pub affinity: Var,
    /// `N×K` softmax of the affinities along the configured axis.
    pub gamma: Var,
    /// `N×K`, every column sums to one.
    pub weights: Var,
    /// `K×D` aggregated values.
    pub updates: Var,
}

#[derive(Clone, Debug)]
pub struct SlotFilter {
    pub config: SlotConfig,
    pub key: ParamId,
    pub query: ParamId,
    pub value: ParamId,
    pub mu: ParamId,
    pub log_sigma: ParamId,
    pub gru: GruCell,
    pub mlp: Mlp,
    pub norm: LayerNorm,
}

impl SlotFilter {
    pub fn new(store: &mut ParamStore, name: &str, config: SlotConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        let mut proj = |s: &str| store.register(format!("{name}.{s}"), xavier_uniform(&[d, d], d, d, rng));
        let key = proj("key")?;
        let query = proj("query")?;
        let value = proj("value")?;
        let mu = store.register(format!("{name}.mu"), normal(&[d], 1.0, rng))?;
        let log_sigma = store.register(format!("{name}.log_sigma"), Tensor::zeros([d]))?;
        Ok(SlotFilter {
            config,
            key,
            query,
            value,
            mu,
            log_sigma,
            gru: GruCell::new(store, &format!("{name}.gru"), d, d, rng)?,
            mlp: Mlp::new(store, &format!("{name}.mlp"), d, d, d, rng)?,
            norm: LayerNorm::new(store, &format!("{name}.norm"), d)?,
        })
    }

    /// `K×D` slots `μ + exp(logσ) ⊙ ε` with `ε` drawn from `noise_seed`.
    pub fn init_slots(&self, g: &mut Graph<'_>, noise_seed: u64) -> Result<Var> {
        let eps = normal(&[self.config.slots, self.config.dim], 1.0, &mut rng_from_seed(noise_seed));
        let eps = g.constant(eps);
        let log_sigma = g.param(self.log_sigma);
        let sigma = g.exp(log_sigma);
        let mu = g.param(self.mu);
        let spread = g.mul_row(eps, sigma)?;
        g.add_row(spread, mu)
    }

    /// Projected slots `q(slots)`, `K×D`.
    pub fn queries(&self, g: &mut Graph<'_>, slots: Var) -> Result<Var> {
        let wq = g.param(self.query);
        g.matmul(slots, wq)
    }

    /// Affinity, weights and aggregated values for `inputs: N×D` against `queries: K×D`.
    pub fn attend(&self, g: &mut Graph<'_>, inputs: Var, queries: Var) -> Result<Attention> {
        let (n, d) = g.value(inputs).dims2()?;
        if d != self.config.dim {
            return Err(Error::dim(format!("tokens have width {d}, slots expect {}", self.config.dim)));
        }
        if n == 0 {
            return Err(Error::EmptyInput("slot attention got no tokens".into()));
        }
        let wk = g.param(self.key);
        let wv = g.param(self.value);
        let keys = g.matmul(inputs, wk)?;
        let qt = g.transpose(queries)?;
        let raw = g.matmul(keys, qt)?;
        let affinity = g.scale(raw, 1.0 / (d as f64).sqrt());
        let axis = match self.config.softmax_axis {
            SoftmaxAxis::Slots => 1,
            SoftmaxAxis::Inputs => 0,
        };
        let gamma = g.softmax(affinity, axis)?;
        let weights = g.normalize_sum(gamma, 0)?;
        let values = g.matmul(inputs, wv)?;
        let wt = g.transpose(weights)?;
        let updates = g.matmul(wt, values)?;
        Ok(Attention {
            affinity,
            gamma,
            weights,
            updates,
        })
    }

    /// GRU update of the slots with the aggregated values as input.
    pub fn update(&self, g: &mut Graph<'_>, slots: Var, updates: Var) -> Result<Var> {
        self.gru.forward(g, slots, updates)
    }

    /// One full iteration: `queries`, `attend`, `update`.
    pub fn attention_step(&self, g: &mut Graph<'_>, inputs: Var, slots: Var) -> Result<Var> {
        let q = self.queries(g, slots)?;
        let att = self.attend(g, inputs, q)?;
        self.update(g, slots, att.updates)
    }

    /// Reduces `tokens: N×D` to a length-`D` feature vector.
    pub fn filter(&self, g: &mut Graph<'_>, tokens: Var, noise_seed: u64) -> Result<Var> {
        let mut slots = self.init_slots(g, noise_seed)?;
        for _ in 0..self.config.iters {
            slots = self.attention_step(g, tokens, slots)?;
        }
        let refined = self.mlp.forward(g, slots)?;
        let slots = g.add(slots, refined)?;
        let slots = self.norm.forward(g, slots)?;
        g.mean_axis(slots, 0)
    }
}

/// Stacks token rows into an `N×D` tensor.
pub fn token_matrix(rows: &[Vec<f64>]) -> Result<Tensor> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("no tokens".into()));
    }
    Tensor::from_rows(rows)
}
