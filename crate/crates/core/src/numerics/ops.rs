//! Elementwise, broadcasting and shape operations.

use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};

fn same_shape(g: &Graph<'_>, a: Var, b: Var, op: &str) -> Result<()> {
    if g.shape(a) != g.shape(b) {
        return Err(Error::dim(format!(
            "{op}: shapes {:?} and {:?} differ",
            g.shape(a),
            g.shape(b)
        )));
    }
    Ok(())
}

impl Graph<'_> {
    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, df: fn(f64, f64) -> f64) -> Var {
        let value = self.value(x).map(f);
        self.custom(
            &[x],
            value,
            Box::new(move |ctx| {
                let x = ctx.inputs[0].data();
                let y = ctx.output.data();
                let data = ctx
                    .grad
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &g)| g * df(x[i], y[i]))
                    .collect();
                vec![Some(Tensor::from_parts_unchecked(
                    ctx.grad.shape().to_vec(),
                    data,
                ))]
            }),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "add")?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.custom(
            &[a, b],
            value,
            Box::new(|ctx| vec![Some(ctx.grad.clone()), Some(ctx.grad.clone())]),
        ))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "sub")?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        Ok(self.custom(
            &[a, b],
            value,
            Box::new(|ctx| vec![Some(ctx.grad.clone()), Some(ctx.grad.map(|g| -g))]),
        ))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "mul")?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.custom(
            &[a, b],
            value,
            Box::new(|ctx| {
                let ga = ctx
                    .needs(0)
                    .then(|| ctx.grad.zip_map(ctx.inputs[1], |g, y| g * y).unwrap());
                let gb = ctx
                    .needs(1)
                    .then(|| ctx.grad.zip_map(ctx.inputs[0], |g, x| g * x).unwrap());
                vec![ga, gb]
            }),
        ))
    }

    /// Sum of several same-shaped values.
    pub fn add_n(&mut self, xs: &[Var]) -> Result<Var> {
        let (&first, rest) = xs
            .split_first()
            .ok_or_else(|| Error::EmptyInput("add_n of nothing".into()))?;
        let mut value = self.value(first).clone();
        for &x in rest {
            same_shape(self, first, x, "add_n")?;
            value.add_assign(self.value(x));
        }
        let n = xs.len();
        Ok(self.custom(
            xs,
            value,
            Box::new(move |ctx| (0..n).map(|_| Some(ctx.grad.clone())).collect()),
        ))
    }

    /// `x * scale + shift` with constant scalars.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(x).map(|v| v * scale + shift);
        self.custom(
            &[x],
            value,
            Box::new(move |ctx| vec![Some(ctx.grad.map(|g| g * scale))]),
        )
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.affine(x, factor, 0.0)
    }

    /// Adds a vector to every row (broadcast over all leading axes).
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let c = *self.shape(x).last().unwrap();
        if self.shape(row) != [c] {
            return Err(Error::dim(format!(
                "add_row: row shape {:?} does not match last axis {c}",
                self.shape(row)
            )));
        }
        let mut value = self.value(x).clone();
        let r = self.value(row).data().to_vec();
        for chunk in value.data_mut().chunks_mut(c) {
            for (v, b) in chunk.iter_mut().zip(&r) {
                *v += b;
            }
        }
        Ok(self.custom(
            &[x, row],
            value,
            Box::new(move |ctx| {
                let gr = ctx.needs(1).then(|| {
                    let mut acc = vec![0.0; c];
                    for chunk in ctx.grad.data().chunks(c) {
                        for (a, g) in acc.iter_mut().zip(chunk) {
                            *a += g;
                        }
                    }
                    Tensor::from_vec(acc)
                });
                vec![Some(ctx.grad.clone()), gr]
            }),
        ))
    }

    /// Multiplies every row elementwise by a vector.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let c = *self.shape(x).last().unwrap();
        if self.shape(row) != [c] {
            return Err(Error::dim(format!(
                "mul_row: row shape {:?} does not match last axis {c}",
                self.shape(row)
            )));
        }
        let mut value = self.value(x).clone();
        let r = self.value(row).data().to_vec();
        for chunk in value.data_mut().chunks_mut(c) {
            for (v, b) in chunk.iter_mut().zip(&r) {
                *v *= b;
            }
        }
        Ok(self.custom(
            &[x, row],
            value,
            Box::new(move |ctx| {
                let x = ctx.inputs[0].data();
                let r = ctx.inputs[1].data();
                let g = ctx.grad.data();
                let gx = ctx.needs(0).then(|| {
                    let data = g.iter().enumerate().map(|(i, gi)| gi * r[i % c]).collect();
                    Tensor::from_parts_unchecked(ctx.grad.shape().to_vec(), data)
                });
                let gr = ctx.needs(1).then(|| {
                    let mut acc = vec![0.0; c];
                    for (i, gi) in g.iter().enumerate() {
                        acc[i % c] += gi * x[i];
                    }
                    Tensor::from_vec(acc)
                });
                vec![gx, gr]
            }),
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, |_, y| y)
    }

    /// Absolute value; the subgradient at zero is taken as zero.
    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, f64::abs, |x, _| x.signum() * f64::from(x != 0.0))
    }

    /// Wraps values into `[-period/2, period/2)`; derivative one almost everywhere.
    pub fn wrap_periodic(&mut self, x: Var, period: f64) -> Var {
        let value = self.value(x).map(|v| wrap_to(v, period));
        self.custom(&[x], value, Box::new(|ctx| vec![Some(ctx.grad.clone())]))
    }

    /// Sum of all entries, as a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.custom(
            &[x],
            value,
            Box::new(|ctx| {
                let g = ctx.grad.item();
                vec![Some(Tensor::full(ctx.inputs[0].shape().to_vec(), g))]
            }),
        )
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape.to_vec())?;
        Ok(self.custom(
            &[x],
            value,
            Box::new(|ctx| {
                vec![Some(Tensor::from_parts_unchecked(
                    ctx.inputs[0].shape().to_vec(),
                    ctx.grad.data().to_vec(),
                ))]
            }),
        ))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).transpose2()?;
        Ok(self.custom(
            &[x],
            value,
            Box::new(|ctx| vec![Some(ctx.grad.transpose2().unwrap())]),
        ))
    }

    /// Concatenates vectors end to end.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        let mut lens = Vec::with_capacity(xs.len());
        for &x in xs {
            if self.value(x).rank() != 1 {
                return Err(Error::dim("concat expects vectors"));
            }
            data.extend_from_slice(self.value(x).data());
            lens.push(self.value(x).len());
        }
        if data.is_empty() {
            return Err(Error::EmptyInput("concat of nothing".into()));
        }
        Ok(self.custom(
            xs,
            Tensor::from_vec(data),
            Box::new(move |ctx| {
                let g = ctx.grad.data();
                let mut off = 0;
                lens.iter()
                    .map(|&n| {
                        let part = Tensor::from_vec(g[off..off + n].to_vec());
                        off += n;
                        Some(part)
                    })
                    .collect()
            }),
        ))
    }

    /// Scales `x` by the one-element variable `s`.
    pub fn mul_scalar_var(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(Error::dim("mul_scalar_var expects a one-element scale"));
        }
        let k = self.value(s).item();
        let value = self.value(x).map(|v| v * k);
        Ok(self.custom(
            &[x, s],
            value,
            Box::new(|ctx| {
                let k = ctx.inputs[1].item();
                let gx = ctx.needs(0).then(|| ctx.grad.map(|g| g * k));
                let gs = ctx.needs(1).then(|| {
                    let dot: f64 = ctx
                        .grad
                        .data()
                        .iter()
                        .zip(ctx.inputs[0].data())
                        .map(|(g, x)| g * x)
                        .sum();
                    Tensor::from_parts_unchecked(ctx.inputs[1].shape().to_vec(), vec![dot])
                });
                vec![gx, gs]
            }),
        ))
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Maps `v` into `[-period/2, period/2)`.
pub fn wrap_to(v: f64, period: f64) -> f64 {
    let half = period / 2.0;
    let w = (v + half).rem_euclid(period) - half;
    if w >= half {
        w - period
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_example() {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(vec![-1.0, 2.0]));
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 2.0]);
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_to(1.0, 2.0), -1.0);
        assert_eq!(wrap_to(-1.0, 2.0), -1.0);
        assert!((wrap_to(1.5, 2.0) + 0.5).abs() < 1e-15);
        assert!((wrap_to(-2.5, 2.0) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn gradients_accumulate_over_reuse() {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(vec![3.0]));
        let y = g.add(x, x).unwrap();
        let z = g.mul(y, x).unwrap();
        let grads = g.backward(z).unwrap();
        // z = 2x^2
        assert_eq!(grads.wrt(x).unwrap().item(), 12.0);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(vec![1.0, 2.0]));
        let c = g.constant(Tensor::from_vec(vec![5.0, 7.0]));
        let y = g.mul(x, c).unwrap();
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert!(grads.wrt(c).is_none());
        assert_eq!(grads.wrt(x).unwrap().data(), &[5.0, 7.0]);
    }
}
