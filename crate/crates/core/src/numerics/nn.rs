//! Parameterized building blocks composed from graph operations.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::init::xavier_uniform;
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};

/// Fully connected layer `y = x·W + b`, Xavier-uniform weights, zero bias.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub n_in: usize,
    pub n_out: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        n_in: usize,
        n_out: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let weight = store.register(
            format!("{name}.weight"),
            xavier_uniform(&[n_in, n_out], n_in, n_out, rng),
        )?;
        let bias = store.register(format!("{name}.bias"), Tensor::zeros([n_out]))?;
        Ok(Linear {
            weight,
            bias,
            n_in,
            n_out,
        })
    }

    /// Applies the layer to a `B×n_in` matrix.
    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        g.linear(x, w, b)
    }

    /// Applies the layer to a single vector, returning a vector.
    pub fn forward_vec(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let n = g.value(x).len();
        if g.shape(x) != [n] {
            return Err(Error::dim("forward_vec expects a vector"));
        }
        let row = g.reshape(x, &[1, n])?;
        let y = self.forward(g, row)?;
        g.reshape(y, &[self.n_out])
    }
}

/// Layer normalization over the last axis with unit scale and zero shift at init.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(LayerNorm {
            gamma: store.register(format!("{name}.gamma"), Tensor::full([dim], 1.0))?,
            beta: store.register(format!("{name}.beta"), Tensor::zeros([dim]))?,
            dim,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.layer_norm(x, gamma, beta)
    }
}

/// Gated recurrent unit with reset gate applied after the hidden projection.
///
/// ```text
/// r  = σ(x·W_ir + h·W_hr + b_r)
/// z  = σ(x·W_iz + h·W_hz + b_z)
/// n  = tanh(x·W_in + b_in + r ⊙ (h·W_hn + b_hn))
/// h' = (1 - z) ⊙ n + z ⊙ h
/// ```
#[derive(Clone, Debug)]
pub struct GruCell {
    pub w_ir: ParamId,
    pub w_iz: ParamId,
    pub w_in: ParamId,
    pub w_hr: ParamId,
    pub w_hz: ParamId,
    pub w_hn: ParamId,
    pub b_r: ParamId,
    pub b_z: ParamId,
    pub b_in: ParamId,
    pub b_hn: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut w = |suffix: &str, rows: usize| {
            store.register(
                format!("{name}.{suffix}"),
                xavier_uniform(&[rows, hidden], rows, hidden, rng),
            )
        };
        let w_ir = w("w_ir", input_dim)?;
        let w_iz = w("w_iz", input_dim)?;
        let w_in = w("w_in", input_dim)?;
        let w_hr = w("w_hr", hidden)?;
        let w_hz = w("w_hz", hidden)?;
        let w_hn = w("w_hn", hidden)?;
        let mut b = |suffix: &str| store.register(format!("{name}.{suffix}"), Tensor::zeros([hidden]));
        Ok(GruCell {
            w_ir,
            w_iz,
            w_in,
            w_hr,
            w_hz,
            w_hn,
            b_r: b("b_r")?,
            b_z: b("b_z")?,
            b_in: b("b_in")?,
            b_hn: b("b_hn")?,
            input_dim,
            hidden,
        })
    }

    /// One update of `state: K×hidden` driven by `input: K×input_dim`.
    pub fn forward(&self, g: &mut Graph<'_>, state: Var, input: Var) -> Result<Var> {
        let (k, h) = g.value(state).dims2()?;
        let (k2, d) = g.value(input).dims2()?;
        if k != k2 || h != self.hidden || d != self.input_dim {
            return Err(Error::dim(format!(
                "gru: state {k}×{h} and input {k2}×{d} do not fit a {}→{} cell",
                self.input_dim, self.hidden
            )));
        }
        let gate = |g: &mut Graph<'_>, wi: ParamId, wh: ParamId, b: ParamId| -> Result<Var> {
            let (wi, wh, b) = (g.param(wi), g.param(wh), g.param(b));
            let xi = g.matmul(input, wi)?;
            let hh = g.matmul(state, wh)?;
            let s = g.add(xi, hh)?;
            let s = g.add_row(s, b)?;
            Ok(g.sigmoid(s))
        };
        let r = gate(g, self.w_ir, self.w_hr, self.b_r)?;
        let z = gate(g, self.w_iz, self.w_hz, self.b_z)?;
        let (w_in, w_hn, b_in, b_hn) = (
            g.param(self.w_in),
            g.param(self.w_hn),
            g.param(self.b_in),
            g.param(self.b_hn),
        );
        let xn = g.linear(input, w_in, b_in)?;
        let hn = g.linear(state, w_hn, b_hn)?;
        let rhn = g.mul(r, hn)?;
        let pre = g.add(xn, rhn)?;
        let n = g.tanh(pre);
        let diff = g.sub(state, n)?;
        let zd = g.mul(z, diff)?;
        g.add(n, zd)
    }
}

/// Two-layer perceptron `Linear → ReLU → Linear`.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub first: Linear,
    pub second: Linear,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        n_in: usize,
        hidden: usize,
        n_out: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Mlp {
            first: Linear::new(store, &format!("{name}.0"), n_in, hidden, rng)?,
            second: Linear::new(store, &format!("{name}.1"), hidden, n_out, rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let h = self.first.forward(g, x)?;
        let h = g.relu(h);
        self.second.forward(g, h)
    }
}
