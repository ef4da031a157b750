//! Central finite-difference verification of analytic gradients.
//!
//! The output of the function under test is reduced to a scalar through a
//! fixed random projection `s = Σ r ⊙ y`. The analytic gradient of `s` is
//! compared with `(s(x + ε) - s(x - ε)) / 2ε` for every checked scalar.
//!
//! The error of one tensor is `‖a - n‖∞ / max(‖a‖∞, ‖n‖∞)` over its checked
//! entries, so an analytic gradient that is uniformly twice too large reports
//! 0.5. The report carries the maximum over all inputs and parameters.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::Result;
use crate::numerics::init::rng_from_seed;
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    pub seed: u64,
    /// Tensors larger than this are checked on a seeded random subset of entries.
    pub max_entries_per_tensor: usize,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-5,
            seed: 0x5eed,
            max_entries_per_tensor: 64,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Name of the tensor with the largest error (`input[i]` or a parameter name).
    pub worst: String,
    pub checked_scalars: usize,
}

enum Target {
    Input(usize),
    Param(ParamId),
}

fn projection_value<F>(store: &ParamStore, inputs: &[Tensor], proj: &Tensor, f: &F) -> Result<f64>
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::with_params(store);
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let y = f(&mut g, &vars)?;
    Ok(g.value(y)
        .data()
        .iter()
        .zip(proj.data())
        .map(|(a, b)| a * b)
        .sum())
}

/// Checks gradients with respect to `inputs` and every parameter `f` reads.
pub fn gradient_check<F>(
    store: &mut ParamStore,
    inputs: &[Tensor],
    f: F,
    opts: GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Result<Var>,
{
    let mut rng = rng_from_seed(opts.seed);
    let (proj, analytic) = {
        let mut g = Graph::with_params(store);
        let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
        let y = f(&mut g, &vars)?;
        let shape = g.shape(y).to_vec();
        let n: usize = shape.iter().product();
        let proj = Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let r = g.constant(proj.clone());
        let ry = g.mul(y, r)?;
        let s = g.sum(ry);
        let grads = g.backward(s)?;
        let mut analytic: Vec<(Target, Tensor)> = Vec::new();
        for (i, v) in vars.iter().enumerate() {
            let grad = grads
                .wrt(*v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(inputs[i].shape().to_vec()));
            analytic.push((Target::Input(i), grad));
        }
        for (id, grad) in grads.param_grads() {
            analytic.push((Target::Param(id), grad.clone()));
        }
        (proj, analytic)
    };

    let mut inputs = inputs.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked_scalars: 0,
    };
    for (target, a) in &analytic {
        let len = a.len();
        let entries: Vec<usize> = if len <= opts.max_entries_per_tensor {
            (0..len).collect()
        } else {
            let mut e = sample(&mut rng, len, opts.max_entries_per_tensor).into_vec();
            e.sort_unstable();
            e
        };
        let mut max_diff: f64 = 0.0;
        let mut max_a: f64 = 0.0;
        let mut max_n: f64 = 0.0;
        for &e in &entries {
            let eval_at = |delta: f64,
                           store: &mut ParamStore,
                           inputs: &mut Vec<Tensor>|
             -> Result<f64> {
                let orig = match target {
                    Target::Input(i) => inputs[*i].data()[e],
                    Target::Param(id) => store.value(*id).data()[e],
                };
                let set = |v: f64, store: &mut ParamStore, inputs: &mut Vec<Tensor>| match target {
                    Target::Input(i) => inputs[*i].data_mut()[e] = v,
                    Target::Param(id) => store.get_mut(*id).value.data_mut()[e] = v,
                };
                set(orig + delta, store, inputs);
                let out = projection_value(store, inputs, &proj, &f);
                set(orig, store, inputs);
                out
            };
            let plus = eval_at(opts.eps, store, &mut inputs)?;
            let minus = eval_at(-opts.eps, store, &mut inputs)?;
            let numeric = (plus - minus) / (2.0 * opts.eps);
            let analytic = a.data()[e];
            max_diff = max_diff.max((analytic - numeric).abs());
            max_a = max_a.max(analytic.abs());
            max_n = max_n.max(numeric.abs());
        }
        report.checked_scalars += entries.len();
        let scale = max_a.max(max_n);
        let err = if scale < 1e-12 { max_diff } else { max_diff / scale };
        if err >= report.max_rel_error {
            report.max_rel_error = err;
            report.worst = match target {
                Target::Input(i) => format!("input[{i}]"),
                Target::Param(id) => store.get(*id).name.clone(),
            };
        }
    }
    Ok(report)
}

/// [`gradient_check`] for parameter-free functions.
pub fn gradient_check_inputs<F>(inputs: &[Tensor], f: F, opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Result<Var>,
{
    gradient_check(&mut ParamStore::new(), inputs, f, opts)
}

/// Uniform random tensor in `[-1, 1)` for tests and check fixtures.
pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .expect("valid shape")
}
