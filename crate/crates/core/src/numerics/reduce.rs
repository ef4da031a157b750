//! Axis reductions, softmax and layer normalization.

use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};

/// Epsilon added to the variance in [`Graph::layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Splits a shape around `axis` into `(outer, axis_len, inner)`.
fn split_axis(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::dim(format!("axis {axis} out of range for shape {shape:?}")));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s: Vec<usize> = shape
        .iter()
        .enumerate()
        .filter_map(|(i, &d)| (i != axis).then_some(d))
        .collect();
    if s.is_empty() {
        s.push(1);
    }
    s
}

impl Graph<'_> {
    /// Softmax along `axis`, stabilized by subtracting the per-slice maximum.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xv = self.value(x);
        if !xv.all_finite() {
            return Err(Error::Numeric("softmax input contains non-finite values".into()));
        }
        let shape = xv.shape().to_vec();
        let (outer, len, inner) = split_axis(&shape, axis)?;
        let src = xv.data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |a: usize| (o * len + a) * inner + i;
                let m = (0..len).map(|a| src[idx(a)]).fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for a in 0..len {
                    let e = (src[idx(a)] - m).exp();
                    out[idx(a)] = e;
                    s += e;
                }
                for a in 0..len {
                    out[idx(a)] /= s;
                }
            }
        }
        let value = Tensor::from_parts_unchecked(shape.clone(), out);
        Ok(self.custom(
            &[x],
            value,
            Box::new(move |ctx| {
                let y = ctx.output.data();
                let g = ctx.grad.data();
                let mut dx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |a: usize| (o * len + a) * inner + i;
                        let dot: f64 = (0..len).map(|a| g[idx(a)] * y[idx(a)]).sum();
                        for a in 0..len {
                            dx[idx(a)] = y[idx(a)] * (g[idx(a)] - dot);
                        }
                    }
                }
                vec![Some(Tensor::from_parts_unchecked(shape.clone(), dx))]
            }),
        ))
    }

    /// Divides every slice along `axis` by its sum.
    pub fn normalize_sum(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (outer, len, inner) = split_axis(&shape, axis)?;
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        let mut sums = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |a: usize| (o * len + a) * inner + i;
                let s: f64 = (0..len).map(|a| src[idx(a)]).sum();
                if s == 0.0 || !s.is_finite() {
                    return Err(Error::Numeric(format!("normalize_sum: slice sum is {s}")));
                }
                sums[o * inner + i] = s;
                for a in 0..len {
                    out[idx(a)] = src[idx(a)] / s;
                }
            }
        }
        let value = Tensor::from_parts_unchecked(shape.clone(), out);
        Ok(self.custom(
            &[x],
            value,
            Box::new(move |ctx| {
                let y = ctx.output.data();
                let g = ctx.grad.data();
                let mut dx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |a: usize| (o * len + a) * inner + i;
                        let s = sums[o * inner + i];
                        let dot: f64 = (0..len).map(|a| g[idx(a)] * y[idx(a)]).sum();
                        for a in 0..len {
                            dx[idx(a)] = (g[idx(a)] - dot) / s;
                        }
                    }
                }
                vec![Some(Tensor::from_parts_unchecked(shape.clone(), dx))]
            }),
        ))
    }

    /// Maximum along `axis`; the gradient goes to the first maximal entry.
    pub fn max_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (outer, len, inner) = split_axis(&shape, axis)?;
        let src = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        let mut arg = vec![0usize; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut best = 0;
                let mut bv = src[o * len * inner + i];
                for a in 1..len {
                    let v = src[(o * len + a) * inner + i];
                    if v > bv {
                        bv = v;
                        best = a;
                    }
                }
                out[o * inner + i] = bv;
                arg[o * inner + i] = best;
            }
        }
        let value = Tensor::from_parts_unchecked(reduced_shape(&shape, axis), out);
        Ok(self.custom(
            &[x],
            value,
            Box::new(move |ctx| {
                let g = ctx.grad.data();
                let mut dx = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        let a = arg[o * inner + i];
                        dx[(o * len + a) * inner + i] = g[o * inner + i];
                    }
                }
                vec![Some(Tensor::from_parts_unchecked(shape.clone(), dx))]
            }),
        ))
    }

    /// Mean along `axis`, summed in index order.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (outer, len, inner) = split_axis(&shape, axis)?;
        let src = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..len {
                for i in 0..inner {
                    out[o * inner + i] += src[(o * len + a) * inner + i];
                }
            }
        }
        let inv = 1.0 / len as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        let value = Tensor::from_parts_unchecked(reduced_shape(&shape, axis), out);
        Ok(self.custom(
            &[x],
            value,
            Box::new(move |ctx| {
                let g = ctx.grad.data();
                let mut dx = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    for a in 0..len {
                        for i in 0..inner {
                            dx[(o * len + a) * inner + i] = g[o * inner + i] * inv;
                        }
                    }
                }
                vec![Some(Tensor::from_parts_unchecked(shape.clone(), dx))]
            }),
        ))
    }

    /// Layer normalization over the last axis with learnable scale and shift.
    ///
    /// Each slice is shifted to zero mean and divided by `sqrt(var + 1e-5)`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let c = *shape.last().unwrap();
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::dim(format!(
                "layer_norm: scale/shift must have length {c}"
            )));
        }
        let src = self.value(x).data();
        let gm = self.value(gamma).data();
        let bt = self.value(beta).data();
        let rows = src.len() / c;
        let mut xhat = vec![0.0; src.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; src.len()];
        for r in 0..rows {
            let s = &src[r * c..(r + 1) * c];
            let mu = s.iter().sum::<f64>() / c as f64;
            let var = s.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[r] = is;
            for j in 0..c {
                let h = (s[j] - mu) * is;
                xhat[r * c + j] = h;
                out[r * c + j] = h * gm[j] + bt[j];
            }
        }
        let value = Tensor::from_parts_unchecked(shape.clone(), out);
        Ok(self.custom(
            &[x, gamma, beta],
            value,
            Box::new(move |ctx| {
                let g = ctx.grad.data();
                let gm = ctx.inputs[1].data();
                let mut dx = vec![0.0; g.len()];
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for r in 0..rows {
                    let gr = &g[r * c..(r + 1) * c];
                    let hr = &xhat[r * c..(r + 1) * c];
                    let mut mean_dh = 0.0;
                    let mut mean_dh_h = 0.0;
                    for j in 0..c {
                        let dh = gr[j] * gm[j];
                        mean_dh += dh;
                        mean_dh_h += dh * hr[j];
                        dgamma[j] += gr[j] * hr[j];
                        dbeta[j] += gr[j];
                    }
                    mean_dh /= c as f64;
                    mean_dh_h /= c as f64;
                    for j in 0..c {
                        let dh = gr[j] * gm[j];
                        dx[r * c + j] = inv_std[r] * (dh - mean_dh - hr[j] * mean_dh_h);
                    }
                }
                vec![
                    Some(Tensor::from_parts_unchecked(shape.clone(), dx)),
                    Some(Tensor::from_vec(dgamma)),
                    Some(Tensor::from_vec(dbeta)),
                ]
            }),
        ))
    }
}
