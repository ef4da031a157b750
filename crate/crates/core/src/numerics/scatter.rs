use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};

impl Graph<'_> {
    /// Per-group, per-channel maximum of the rows of `x: N×D`.
    ///
    /// `group[i]` names the output row of input row `i`; every output row in
    /// `0..groups` must receive at least one input. The gradient of each output
    /// entry flows to the first input row attaining the maximum.
    pub fn scatter_max(&mut self, x: Var, group: &[usize], groups: usize) -> Result<Var> {
        let (n, d) = self.value(x).dims2()?;
        if group.len() != n {
            return Err(Error::dim(format!(
                "scatter_max: {} group labels for {n} rows",
                group.len()
            )));
        }
        if groups == 0 {
            return Err(Error::EmptyInput("scatter_max with zero groups".into()));
        }
        let src = self.value(x).data();
        let mut out = vec![f64::NEG_INFINITY; groups * d];
        let mut arg = vec![usize::MAX; groups * d];
        for (i, &gi) in group.iter().enumerate() {
            if gi >= groups {
                return Err(Error::dim(format!("scatter_max: group {gi} >= {groups}")));
            }
            for c in 0..d {
                let v = src[i * d + c];
                let slot = gi * d + c;
                if arg[slot] == usize::MAX || v > out[slot] {
                    out[slot] = v;
                    arg[slot] = i;
                }
            }
        }
        if arg.iter().any(|&a| a == usize::MAX) {
            return Err(Error::EmptyInput("scatter_max: a group received no rows".into()));
        }
        let value = Tensor::from_parts_unchecked(vec![groups, d], out);
        Ok(self.custom(
            &[x],
            value,
            Box::new(move |ctx| {
                let g = ctx.grad.data();
                let mut dx = vec![0.0; n * d];
                for (slot, &i) in arg.iter().enumerate() {
                    dx[i * d + slot % d] += g[slot];
                }
                vec![Some(Tensor::from_parts_unchecked(vec![n, d], dx))]
            }),
        ))
    }
}
