use crate::error::{Error, Result};
use crate::numerics::{macs, Graph, Tensor, Var};

/// `c (+)= op(a) · op(b)` for row-major matrices, where `op` optionally transposes.
///
/// `op(a)` is `m×k`, `op(b)` is `k×n`, `c` is `m×n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    macs::add((m * k * n) as u64);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the strides above address exactly the m×k, k×n and m×n
    // row-major buffers whose lengths are checked by the debug assertions.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Graph<'_> {
    /// Matrix product of `M×K` and `K×N` operands.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(Error::dim(format!(
                "matmul inner dimensions differ: {m}×{k} · {k2}×{n}"
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut out, false);
        let value = Tensor::from_parts_unchecked(vec![m, n], out);
        Ok(self.custom(
            &[a, b],
            value,
            Box::new(move |ctx| {
                let g = ctx.grad.data();
                let ga = ctx.needs(0).then(|| {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g, false, ctx.inputs[1].data(), true, &mut da, false);
                    Tensor::from_parts_unchecked(vec![m, k], da)
                });
                let gb = ctx.needs(1).then(|| {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, ctx.inputs[0].data(), true, g, false, &mut db, false);
                    Tensor::from_parts_unchecked(vec![k, n], db)
                });
                vec![ga, gb]
            }),
        ))
    }

    /// `x · W + b` for `x: B×N_in`, `W: N_in×N_out`, `b: N_out`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let xw = self.matmul(x, weight)?;
        self.add_row(xw, bias)
    }
}
