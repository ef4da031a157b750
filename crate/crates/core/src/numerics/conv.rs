//! 2D cross-correlation via im2col and a dense matrix product.

use crate::error::{Error, Result};
use crate::numerics::linalg::gemm;
use crate::numerics::{Graph, Tensor, Var};

/// Geometry of one conv2d call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dGeometry {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2dGeometry {
    /// Output spatial size `floor((n + 2p - k) / s) + 1` per axis.
    pub fn output_hw(&self) -> Result<(usize, usize)> {
        if self.stride == 0 {
            return Err(Error::dim("conv2d stride must be at least 1"));
        }
        let axis = |n: usize, k: usize| -> Result<usize> {
            let padded = n + 2 * self.padding;
            if k > padded {
                return Err(Error::dim(format!(
                    "conv2d kernel {k} larger than padded input {padded}"
                )));
            }
            Ok((padded - k) / self.stride + 1)
        };
        Ok((axis(self.h, self.kh)?, axis(self.w, self.kw)?))
    }

    fn col_rows(&self) -> usize {
        self.c_in * self.kh * self.kw
    }
}

fn im2col(x: &[f64], geo: &Conv2dGeometry, ho: usize, wo: usize, cols: &mut [f64]) {
    let Conv2dGeometry { c_in, h, w, kh, kw, stride, padding, .. } = *geo;
    let ncol = ho * wo;
    for c in 0..c_in {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (c * kh + ki) * kw + kj;
                let dst = &mut cols[row * ncol..(row + 1) * ncol];
                for oi in 0..ho {
                    let ii = (oi * stride + ki) as isize - padding as isize;
                    let line = &mut dst[oi * wo..(oi + 1) * wo];
                    if ii < 0 || ii >= h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &x[(c * h + ii as usize) * w..(c * h + ii as usize + 1) * w];
                    for (oj, d) in line.iter_mut().enumerate() {
                        let jj = (oj * stride + kj) as isize - padding as isize;
                        *d = if jj < 0 || jj >= w as isize { 0.0 } else { src[jj as usize] };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], geo: &Conv2dGeometry, ho: usize, wo: usize, dx: &mut [f64]) {
    let Conv2dGeometry { c_in, h, w, kh, kw, stride, padding, .. } = *geo;
    let ncol = ho * wo;
    for c in 0..c_in {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (c * kh + ki) * kw + kj;
                let src = &cols[row * ncol..(row + 1) * ncol];
                for oi in 0..ho {
                    let ii = (oi * stride + ki) as isize - padding as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    let base = (c * h + ii as usize) * w;
                    for oj in 0..wo {
                        let jj = (oj * stride + kj) as isize - padding as isize;
                        if jj >= 0 && jj < w as isize {
                            dx[base + jj as usize] += src[oi * wo + oj];
                        }
                    }
                }
            }
        }
    }
}

impl Graph<'_> {
    /// Cross-correlation of `x: B×C_in×H×W` with `kernel: C_out×C_in×kh×kw`.
    pub fn conv2d(
        &mut self,
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (b, c_in, h, w) = match self.shape(x) {
            &[b, c, h, w] => (b, c, h, w),
            s => return Err(Error::dim(format!("conv2d input must be B×C×H×W, got {s:?}"))),
        };
        let (c_out, kc, kh, kw) = match self.shape(kernel) {
            &[o, c, kh, kw] => (o, c, kh, kw),
            s => return Err(Error::dim(format!("conv2d kernel must be rank 4, got {s:?}"))),
        };
        if kc != c_in {
            return Err(Error::dim(format!(
                "conv2d: input has {c_in} channels, kernel expects {kc}"
            )));
        }
        if let Some(bv) = bias {
            if self.shape(bv) != [c_out] {
                return Err(Error::dim("conv2d bias length must equal output channels"));
            }
        }
        let geo = Conv2dGeometry { c_in, h, w, c_out, kh, kw, stride, padding };
        let (ho, wo) = geo.output_hw()?;
        let ncol = ho * wo;
        let krows = geo.col_rows();
        let xin = self.value(x).data();
        let kdata = self.value(kernel).data();
        let mut out = vec![0.0; b * c_out * ncol];
        let mut cols = vec![0.0; krows * ncol];
        for bi in 0..b {
            im2col(&xin[bi * c_in * h * w..(bi + 1) * c_in * h * w], &geo, ho, wo, &mut cols);
            let dst = &mut out[bi * c_out * ncol..(bi + 1) * c_out * ncol];
            gemm(c_out, krows, ncol, kdata, false, &cols, false, dst, false);
        }
        if let Some(bv) = bias {
            let bd = self.value(bv).data();
            for bi in 0..b {
                for o in 0..c_out {
                    let base = (bi * c_out + o) * ncol;
                    out[base..base + ncol].iter_mut().for_each(|v| *v += bd[o]);
                }
            }
        }
        let value = Tensor::from_parts_unchecked(vec![b, c_out, ho, wo], out);
        let mut parents = vec![x, kernel];
        parents.extend(bias);
        Ok(self.custom(
            &parents,
            value,
            Box::new(move |ctx| {
                let g = ctx.grad.data();
                let xin = ctx.inputs[0].data();
                let kdata = ctx.inputs[1].data();
                let mut dx = ctx.needs(0).then(|| vec![0.0; b * c_in * h * w]);
                let mut dk = ctx.needs(1).then(|| vec![0.0; c_out * krows]);
                let mut cols = vec![0.0; krows * ncol];
                for bi in 0..b {
                    let gb = &g[bi * c_out * ncol..(bi + 1) * c_out * ncol];
                    if let Some(dk) = dk.as_mut() {
                        im2col(&xin[bi * c_in * h * w..(bi + 1) * c_in * h * w], &geo, ho, wo, &mut cols);
                        gemm(c_out, ncol, krows, gb, false, &cols, true, dk, true);
                    }
                    if let Some(dx) = dx.as_mut() {
                        gemm(krows, c_out, ncol, kdata, true, gb, false, &mut cols, false);
                        col2im(&cols, &geo, ho, wo, &mut dx[bi * c_in * h * w..(bi + 1) * c_in * h * w]);
                    }
                }
                let mut grads = vec![
                    dx.map(|d| Tensor::from_parts_unchecked(vec![b, c_in, h, w], d)),
                    dk.map(|d| Tensor::from_parts_unchecked(vec![c_out, c_in, kh, kw], d)),
                ];
                if ctx.inputs.len() == 3 {
                    let mut db = vec![0.0; c_out];
                    for bi in 0..b {
                        for (o, d) in db.iter_mut().enumerate() {
                            let base = (bi * c_out + o) * ncol;
                            *d += g[base..base + ncol].iter().sum::<f64>();
                        }
                    }
                    grads.push(Some(Tensor::from_vec(db)));
                }
                grads
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ones_sum_to_nine() {
        let mut g = Graph::new();
        let x = g.input(Tensor::full([1, 1, 3, 3], 1.0));
        let k = g.input(Tensor::full([1, 1, 3, 3], 1.0));
        let y = g.conv2d(x, k, None, 1, 0).unwrap();
        assert_eq!(g.shape(y), &[1, 1, 1, 1]);
        assert_eq!(g.value(y).item(), 9.0);
    }

    #[test]
    fn stride_two_halves() {
        let mut g = Graph::new();
        let x = g.input(Tensor::full([1, 1, 4, 4], 1.0));
        let k = g.input(Tensor::full([1, 1, 1, 1], 1.0));
        let y = g.conv2d(x, k, None, 2, 0).unwrap();
        assert_eq!(g.shape(y), &[1, 1, 2, 2]);
    }

    #[test]
    fn oversized_kernel_is_dimension_error() {
        let mut g = Graph::new();
        let x = g.input(Tensor::full([1, 1, 2, 2], 1.0));
        let k = g.input(Tensor::full([1, 1, 5, 5], 1.0));
        assert!(matches!(g.conv2d(x, k, None, 1, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn matches_direct_loops_with_padding() {
        let xs: Vec<f64> = (0..2 * 5 * 4).map(|i| ((i * 7 % 11) as f64) / 11.0 - 0.4).collect();
        let ks: Vec<f64> = (0..3 * 2 * 3 * 3).map(|i| ((i * 5 % 13) as f64) / 13.0 - 0.5).collect();
        let mut g = Graph::new();
        let x = g.input(Tensor::new([1, 2, 5, 4], xs.clone()).unwrap());
        let k = g.input(Tensor::new([3, 2, 3, 3], ks.clone()).unwrap());
        let y = g.conv2d(x, k, None, 2, 1).unwrap();
        let (ho, wo) = (3, 2);
        assert_eq!(g.shape(y), &[1, 3, ho, wo]);
        for o in 0..3 {
            for oi in 0..ho {
                for oj in 0..wo {
                    let mut acc = 0.0;
                    for c in 0..2 {
                        for ki in 0..3 {
                            for kj in 0..3 {
                                let ii = (oi * 2 + ki) as isize - 1;
                                let jj = (oj * 2 + kj) as isize - 1;
                                if (0..5).contains(&ii) && (0..4).contains(&jj) {
                                    acc += xs[(c * 5 + ii as usize) * 4 + jj as usize]
                                        * ks[((o * 2 + c) * 3 + ki) * 3 + kj];
                                }
                            }
                        }
                    }
                    let got = g.value(y).data()[(o * ho + oi) * wo + oj];
                    assert!((got - acc).abs() < 1e-14);
                }
            }
        }
    }
}
