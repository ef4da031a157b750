//! Sparse 3D convolution over the cylindrical voxel grid.
//!
//! A convolution builds a rulebook: for every kernel offset, the list of
//! `(input row, output row)` pairs whose sites are both occupied. Each offset
//! then becomes one gather, one dense `P×C_in · C_in×C_out` product and one
//! scatter-add, so work is proportional to occupied neighbor pairs.
//!
//! Site `o` of a stride-`s` convolution reads input site `s·o + k - pad` for
//! kernel offset `k` and `pad = (k_size - 1) / 2`. Stride 1 keeps the input
//! coordinate set (submanifold); stride `s > 1` emits the deduplicated
//! `floor(c / s)` of the input sites.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::init::xavier_uniform;
use crate::numerics::linalg::gemm;
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};

/// Channel widths of the five backbone blocks before dividing by the scale divisor.
pub const BACKBONE_CHANNELS: [usize; 5] = [32, 64, 128, 256, 512];

/// Voxel features on a `(H, W, L)` grid; rows follow increasing linear index.
#[derive(Clone, Debug)]
pub struct SparseTensor3D {
    pub shape: [usize; 3],
    pub coords: Vec<[usize; 3]>,
    /// `M×C` features.
    pub features: Var,
}

pub fn linear_index(shape: [usize; 3], c: [usize; 3]) -> usize {
    (c[0] * shape[1] + c[1]) * shape[2] + c[2]
}

impl SparseTensor3D {
    /// Validates bounds, uniqueness and sort order of `coords` against `features`.
    pub fn new(g: &Graph<'_>, shape: [usize; 3], coords: Vec<[usize; 3]>, features: Var) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::EmptyCloud("sparse tensor has no occupied sites".into()));
        }
        if shape.contains(&0) {
            return Err(Error::dim(format!("sparse grid {shape:?} has an empty axis")));
        }
        let (rows, _) = g.value(features).dims2()?;
        if rows != coords.len() {
            return Err(Error::dim(format!("{rows} feature rows for {} sites", coords.len())));
        }
        let mut prev = None;
        for c in &coords {
            if (0..3).any(|a| c[a] >= shape[a]) {
                return Err(Error::dim(format!("site {c:?} outside grid {shape:?}")));
            }
            let li = linear_index(shape, *c);
            if prev.is_some_and(|p| p >= li) {
                return Err(Error::dim("sites must be unique and sorted by linear index"));
            }
            prev = Some(li);
        }
        Ok(SparseTensor3D {
            shape,
            coords,
            features,
        })
    }

    /// Sorts `(site, feature row)` entries and places them on the graph as an input.
    pub fn from_entries(g: &mut Graph<'_>, shape: [usize; 3], mut entries: Vec<([usize; 3], Vec<f64>)>) -> Result<Self> {
        entries.sort_by_key(|(c, _)| linear_index(shape, *c));
        let (coords, rows): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        if rows.is_empty() {
            return Err(Error::EmptyCloud("sparse tensor has no occupied sites".into()));
        }
        let features = g.input(Tensor::from_rows(&rows)?);
        SparseTensor3D::new(g, shape, coords, features)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn channels(&self, g: &Graph<'_>) -> usize {
        g.shape(self.features)[1]
    }

    fn index_map(&self) -> HashMap<usize, usize> {
        self.coords
            .iter()
            .enumerate()
            .map(|(row, c)| (linear_index(self.shape, *c), row))
            .collect()
    }
}

/// `(input row, output row)` pairs per kernel offset.
struct Rulebook {
    pairs: Vec<Vec<(usize, usize)>>,
}

#[derive(Clone, Debug)]
pub struct SparseConv3d {
    /// `(kh, kw, kl, C_in, C_out)`.
    pub kernel: ParamId,
    pub bias: ParamId,
    pub ksize: [usize; 3],
    pub c_in: usize,
    pub c_out: usize,
    pub stride: usize,
    pub azimuth_wrap: bool,
}

impl SparseConv3d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        ksize: [usize; 3],
        c_in: usize,
        c_out: usize,
        stride: usize,
        azimuth_wrap: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if ksize.iter().any(|k| k % 2 == 0) {
            return Err(Error::Config(format!("sparse kernel {ksize:?} must be odd on every axis")));
        }
        if stride == 0 || c_in == 0 || c_out == 0 {
            return Err(Error::Config("sparse conv needs stride and channels ≥ 1".into()));
        }
        let vol: usize = ksize.iter().product();
        let kernel = store.register(
            format!("{name}.kernel"),
            xavier_uniform(&[ksize[0], ksize[1], ksize[2], c_in, c_out], vol * c_in, vol * c_out, rng),
        )?;
        let bias = store.register(format!("{name}.bias"), Tensor::zeros([c_out]))?;
        Ok(SparseConv3d {
            kernel,
            bias,
            ksize,
            c_in,
            c_out,
            stride,
            azimuth_wrap,
        })
    }

    /// Output grid: `ceil(n / stride)` per axis.
    pub fn output_shape(&self, shape: [usize; 3]) -> [usize; 3] {
        shape.map(|n| n.div_ceil(self.stride))
    }

    fn output_coords(&self, x: &SparseTensor3D, out_shape: [usize; 3]) -> Vec<[usize; 3]> {
        if self.stride == 1 {
            return x.coords.clone();
        }
        let mut out: Vec<[usize; 3]> = x.coords.iter().map(|c| c.map(|v| v / self.stride)).collect();
        out.sort_by_key(|c| linear_index(out_shape, *c));
        out.dedup();
        out
    }

    fn rulebook(&self, x: &SparseTensor3D, out: &[[usize; 3]]) -> Rulebook {
        let index = x.index_map();
        let [kh, kw, kl] = self.ksize;
        let pad = self.ksize.map(|k| (k / 2) as isize);
        let s = self.stride as isize;
        let mut pairs = vec![Vec::new(); kh * kw * kl];
        for (orow, o) in out.iter().enumerate() {
            for a in 0..kh {
                for b in 0..kw {
                    for c in 0..kl {
                        let mut site = [0usize; 3];
                        let mut inside = true;
                        for (axis, k) in [a, b, c].into_iter().enumerate() {
                            let v = s * o[axis] as isize + k as isize - pad[axis];
                            let n = x.shape[axis] as isize;
                            site[axis] = if axis == 1 && self.azimuth_wrap {
                                v.rem_euclid(n) as usize
                            } else if (0..n).contains(&v) {
                                v as usize
                            } else {
                                inside = false;
                                break;
                            };
                        }
                        if !inside {
                            continue;
                        }
                        if let Some(&irow) = index.get(&linear_index(x.shape, site)) {
                            pairs[(a * kw + b) * kl + c].push((irow, orow));
                        }
                    }
                }
            }
        }
        Rulebook { pairs }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: &SparseTensor3D) -> Result<SparseTensor3D> {
        let c_in = x.channels(g);
        if c_in != self.c_in {
            return Err(Error::dim(format!(
                "sparse conv expects {} input channels, got {c_in}",
                self.c_in
            )));
        }
        let c_out = self.c_out;
        let out_shape = self.output_shape(x.shape);
        let out_coords = self.output_coords(x, out_shape);
        let book = self.rulebook(x, &out_coords);
        let m_in = x.len();
        let m_out = out_coords.len();
        let kernel = g.param(self.kernel);
        let bias = g.param(self.bias);

        let xin = g.value(x.features).data();
        let kdata = g.value(kernel).data();
        let bdata = g.value(bias).data();
        let mut out = Vec::with_capacity(m_out * c_out);
        for _ in 0..m_out {
            out.extend_from_slice(bdata);
        }
        let block = c_in * c_out;
        let mut gathered = Vec::new();
        let mut product = Vec::new();
        for (k, pairs) in book.pairs.iter().enumerate() {
            if pairs.is_empty() {
                continue;
            }
            gather_rows(xin, c_in, pairs.iter().map(|p| p.0), &mut gathered);
            product.resize(pairs.len() * c_out, 0.0);
            gemm(pairs.len(), c_in, c_out, &gathered, false, &kdata[k * block..(k + 1) * block], false, &mut product, false);
            scatter_add_rows(&product, c_out, pairs.iter().map(|p| p.1), &mut out);
        }
        let value = Tensor::from_parts_unchecked(vec![m_out, c_out], out);
        let kshape = g.shape(kernel).to_vec();
        let features = g.custom(
            &[x.features, kernel, bias],
            value,
            Box::new(move |ctx| {
                let grad = ctx.grad.data();
                let xin = ctx.inputs[0].data();
                let kdata = ctx.inputs[1].data();
                let mut dx = ctx.needs(0).then(|| vec![0.0; m_in * c_in]);
                let mut dk = ctx.needs(1).then(|| vec![0.0; kdata.len()]);
                let mut gg = Vec::new();
                let mut gx = Vec::new();
                let mut tmp = Vec::new();
                for (k, pairs) in book.pairs.iter().enumerate() {
                    if pairs.is_empty() {
                        continue;
                    }
                    gather_rows(grad, c_out, pairs.iter().map(|p| p.1), &mut gg);
                    if let Some(dx) = dx.as_mut() {
                        tmp.resize(pairs.len() * c_in, 0.0);
                        gemm(pairs.len(), c_out, c_in, &gg, false, &kdata[k * block..(k + 1) * block], true, &mut tmp, false);
                        scatter_add_rows(&tmp, c_in, pairs.iter().map(|p| p.0), dx);
                    }
                    if let Some(dk) = dk.as_mut() {
                        gather_rows(xin, c_in, pairs.iter().map(|p| p.0), &mut gx);
                        gemm(c_in, pairs.len(), c_out, &gx, true, &gg, false, &mut dk[k * block..(k + 1) * block], true);
                    }
                }
                let db = ctx.needs(2).then(|| {
                    let mut db = vec![0.0; c_out];
                    for row in grad.chunks_exact(c_out) {
                        db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                    }
                    Tensor::from_vec(db)
                });
                vec![
                    dx.map(|d| Tensor::from_parts_unchecked(vec![m_in, c_in], d)),
                    dk.map(|d| Tensor::from_parts_unchecked(kshape.clone(), d)),
                    db,
                ]
            }),
        );
        Ok(SparseTensor3D {
            shape: out_shape,
            coords: out_coords,
            features,
        })
    }
}

fn gather_rows(src: &[f64], width: usize, rows: impl Iterator<Item = usize>, dst: &mut Vec<f64>) {
    dst.clear();
    for r in rows {
        dst.extend_from_slice(&src[r * width..(r + 1) * width]);
    }
}

fn scatter_add_rows(src: &[f64], width: usize, rows: impl Iterator<Item = usize>, dst: &mut [f64]) {
    for (i, r) in rows.enumerate() {
        let d = &mut dst[r * width..(r + 1) * width];
        d.iter_mut().zip(&src[i * width..(i + 1) * width]).for_each(|(a, b)| *a += b);
    }
}

/// Two asymmetric submanifold streams summed and rectified.
///
/// Stream A is `(1,3,3)` then `(3,1,3)`; stream B applies the same kernels in
/// the opposite order.
#[derive(Clone, Debug)]
pub struct CbBlock {
    pub a1: SparseConv3d,
    pub a2: SparseConv3d,
    pub b1: SparseConv3d,
    pub b2: SparseConv3d,
}

const K133: [usize; 3] = [1, 3, 3];
const K313: [usize; 3] = [3, 1, 3];

impl CbBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        azimuth_wrap: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut conv = |suffix: &str, k, ci| {
            SparseConv3d::new(store, &format!("{name}.{suffix}"), k, ci, c_out, 1, azimuth_wrap, rng)
        };
        Ok(CbBlock {
            a1: conv("a1", K133, c_in)?,
            a2: conv("a2", K313, c_out)?,
            b1: conv("b1", K313, c_in)?,
            b2: conv("b2", K133, c_out)?,
        })
    }

    pub fn convs(&self) -> [&SparseConv3d; 4] {
        [&self.a1, &self.a2, &self.b1, &self.b2]
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: &SparseTensor3D) -> Result<SparseTensor3D> {
        let a = self.a1.forward(g, x)?;
        let a = self.a2.forward(g, &a)?;
        let b = self.b1.forward(g, x)?;
        let b = self.b2.forward(g, &b)?;
        let sum = g.add(a.features, b.features)?;
        Ok(SparseTensor3D {
            shape: x.shape,
            coords: x.coords.clone(),
            features: g.relu(sum),
        })
    }
}

/// [`CbBlock`] followed by a `(3,3,3)` stride-2 convolution.
#[derive(Clone, Debug)]
pub struct CbdBlock {
    pub cb: CbBlock,
    pub down: SparseConv3d,
}

impl CbdBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        azimuth_wrap: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(CbdBlock {
            cb: CbBlock::new(store, &format!("{name}.cb"), c_in, c_out, azimuth_wrap, rng)?,
            down: SparseConv3d::new(store, &format!("{name}.down"), [3, 3, 3], c_out, c_out, 2, azimuth_wrap, rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: &SparseTensor3D) -> Result<SparseTensor3D> {
        let y = self.cb.forward(g, x)?;
        self.down.forward(g, &y)
    }
}

/// One CB block and four CBD blocks.
#[derive(Clone, Debug)]
pub struct Backbone {
    pub cb: CbBlock,
    pub cbd: Vec<CbdBlock>,
}

impl Backbone {
    /// Channels are `BACKBONE_CHANNELS / divisor`.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        divisor: usize,
        azimuth_wrap: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let ch = Self::channels(divisor)?;
        let cb = CbBlock::new(store, &format!("{name}.cb"), c_in, ch[0], azimuth_wrap, rng)?;
        let cbd = (1..5)
            .map(|i| CbdBlock::new(store, &format!("{name}.cbd{i}"), ch[i - 1], ch[i], azimuth_wrap, rng))
            .collect::<Result<_>>()?;
        Ok(Backbone { cb, cbd })
    }

    pub fn channels(divisor: usize) -> Result<[usize; 5]> {
        if divisor == 0 || BACKBONE_CHANNELS.iter().any(|c| c % divisor != 0) {
            return Err(Error::Config(format!("channel divisor {divisor} must divide 32")));
        }
        Ok(BACKBONE_CHANNELS.map(|c| c / divisor))
    }

    pub fn out_channels(&self) -> usize {
        self.cbd.last().map_or(self.cb.a1.c_out, |b| b.down.c_out)
    }

    /// Grid after four ceil-halvings.
    pub fn output_shape(shape: [usize; 3]) -> [usize; 3] {
        shape.map(|n| (0..4).fold(n, |m, _| m.div_ceil(2)))
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: &SparseTensor3D) -> Result<SparseTensor3D> {
        let mut y = self.cb.forward(g, x)?;
        for block in &self.cbd {
            y = block.forward(g, &y)?;
        }
        Ok(y)
    }
}

/// Channelwise max over occupied sites concatenated with the channelwise mean.
pub fn pool_concat(g: &mut Graph<'_>, x: &SparseTensor3D) -> Result<Var> {
    if x.is_empty() {
        return Err(Error::EmptyCloud("cannot pool an empty sparse tensor".into()));
    }
    let mx = g.max_axis(x.features, 0)?;
    let mean = g.mean_axis(x.features, 0)?;
    g.concat(&[mx, mean])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::{gradient_check, random_tensor, GradCheckOptions};
    use crate::numerics::init::rng_from_seed;
    use crate::numerics::macs;

    fn zero_all(store: &mut ParamStore) {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let s = store.value(id).shape().to_vec();
            store.set_value(id, Tensor::zeros(s)).unwrap();
        }
    }

    #[test]
    fn isolated_site_sees_kernel_center() {
        let mut store = ParamStore::new();
        let conv = SparseConv3d::new(&mut store, "c", [3, 3, 3], 2, 1, 1, false, &mut rng_from_seed(0)).unwrap();
        store.set_value(conv.bias, Tensor::from_vec(vec![0.25])).unwrap();
        let k = store.value(conv.kernel).clone();
        let center = &k.data()[13 * 2..14 * 2];
        let mut g = Graph::with_params(&store);
        let x = SparseTensor3D::from_entries(&mut g, [4, 4, 4], vec![([1, 2, 3], vec![2.0, -1.0])]).unwrap();
        let y = conv.forward(&mut g, &x).unwrap();
        assert_eq!(y.coords, vec![[1, 2, 3]]);
        let want = 2.0 * center[0] - center[1] + 0.25;
        assert!((g.value(y.features).item() - want).abs() < 1e-15);
    }

    #[test]
    fn identity_kernel_passes_through() {
        let mut store = ParamStore::new();
        let conv = SparseConv3d::new(&mut store, "c", [3, 3, 3], 2, 2, 1, true, &mut rng_from_seed(0)).unwrap();
        let mut k = Tensor::zeros([3, 3, 3, 2, 2]);
        k.data_mut()[13 * 4] = 1.0;
        k.data_mut()[13 * 4 + 3] = 1.0;
        store.set_value(conv.kernel, k).unwrap();
        let mut g = Graph::with_params(&store);
        let x = SparseTensor3D::from_entries(
            &mut g,
            [3, 3, 3],
            vec![([0, 0, 0], vec![1.0, 2.0]), ([0, 1, 0], vec![3.0, 4.0]), ([2, 2, 2], vec![5.0, 6.0])],
        )
        .unwrap();
        let y = conv.forward(&mut g, &x).unwrap();
        assert_eq!(g.value(y.features).data(), g.value(x.features).data());
    }

    #[test]
    fn zero_cb_block_keeps_sites_with_zero_features() {
        let mut store = ParamStore::new();
        let cb = CbBlock::new(&mut store, "cb", 2, 3, true, &mut rng_from_seed(1)).unwrap();
        zero_all(&mut store);
        let mut g = Graph::with_params(&store);
        let x = SparseTensor3D::from_entries(&mut g, [5, 5, 3], vec![([1, 1, 1], vec![1.0, 1.0]), ([4, 0, 2], vec![-1.0, 2.0])]).unwrap();
        let y = cb.forward(&mut g, &x).unwrap();
        assert_eq!(y.coords, x.coords);
        assert!(g.value(y.features).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn downsample_halves_with_ceiling() {
        let mut store = ParamStore::new();
        let cbd = CbdBlock::new(&mut store, "cbd", 1, 2, true, &mut rng_from_seed(2)).unwrap();
        let mut g = Graph::with_params(&store);
        let x = SparseTensor3D::from_entries(&mut g, [48, 36, 16], vec![([5, 5, 5], vec![1.0])]).unwrap();
        let y = cbd.forward(&mut g, &x).unwrap();
        assert_eq!(y.shape, [24, 18, 8]);
        assert_eq!(y.coords, vec![[2, 2, 2]]);
        assert_eq!(Backbone::output_shape([48, 36, 16]), [3, 3, 1]);
        assert_eq!(Backbone::output_shape([480, 368, 128]), [30, 23, 8]);
    }

    #[test]
    fn backbone_channels_follow_divisor() {
        assert_eq!(Backbone::channels(8).unwrap(), [4, 8, 16, 32, 64]);
        assert!(Backbone::channels(3).is_err());
        let mut store = ParamStore::new();
        let bb = Backbone::new(&mut store, "bb", 4, 8, true, &mut rng_from_seed(3)).unwrap();
        assert_eq!(bb.out_channels(), 64);
    }

    #[test]
    fn channel_mismatch_is_dimension_error() {
        let mut store = ParamStore::new();
        let conv = SparseConv3d::new(&mut store, "c", [3, 3, 3], 3, 1, 1, false, &mut rng_from_seed(0)).unwrap();
        let mut g = Graph::with_params(&store);
        let x = SparseTensor3D::from_entries(&mut g, [2, 2, 2], vec![([0, 0, 0], vec![1.0])]).unwrap();
        assert!(matches!(conv.forward(&mut g, &x), Err(Error::Dimension(_))));
    }

    #[test]
    fn pool_concat_by_hand() {
        let mut g = Graph::new();
        let x = SparseTensor3D::from_entries(&mut g, [2, 2, 2], vec![([0, 0, 0], vec![1.0, -1.0]), ([1, 1, 1], vec![3.0, -5.0])]).unwrap();
        let p = pool_concat(&mut g, &x).unwrap();
        assert_eq!(g.value(p).data(), &[3.0, -1.0, 2.0, -3.0]);
        let single = SparseTensor3D::from_entries(&mut g, [2, 2, 2], vec![([1, 0, 1], vec![0.5, 7.0])]).unwrap();
        let p = pool_concat(&mut g, &single).unwrap();
        assert_eq!(g.value(p).data(), &[0.5, 7.0, 0.5, 7.0]);
    }

    #[test]
    fn empty_entries_rejected() {
        let mut g = Graph::new();
        assert!(matches!(
            SparseTensor3D::from_entries(&mut g, [2, 2, 2], vec![]),
            Err(Error::EmptyCloud(_))
        ));
    }

    fn random_sites(shape: [usize; 3], n: usize, c: usize, seed: u64) -> Vec<([usize; 3], Vec<f64>)> {
        let mut rng = rng_from_seed(seed);
        let total = shape.iter().product();
        rand::seq::index::sample(&mut rng, total, n)
            .into_iter()
            .map(|li| {
                let site = [li / (shape[1] * shape[2]), (li / shape[2]) % shape[1], li % shape[2]];
                (site, (0..c).map(|_| rng.random_range(-1.0..1.0)).collect())
            })
            .collect()
    }

    #[test]
    fn conv_gradient_check_both_strides() {
        for (stride, wrap) in [(1, true), (2, false), (2, true)] {
            let mut store = ParamStore::new();
            let mut rng = rng_from_seed(5);
            let conv = SparseConv3d::new(&mut store, "c", [3, 3, 3], 2, 3, stride, wrap, &mut rng).unwrap();
            store.set_value(conv.bias, random_tensor(&[3], &mut rng)).unwrap();
            let entries = random_sites([4, 5, 3], 14, 2, 6);
            let (coords, rows): (Vec<_>, Vec<_>) = {
                let mut e = entries;
                e.sort_by_key(|(c, _)| linear_index([4, 5, 3], *c));
                e.into_iter().unzip()
            };
            let feats = Tensor::from_rows(&rows).unwrap();
            let r = gradient_check(
                &mut store,
                &[feats],
                |g, v| {
                    let x = SparseTensor3D::new(g, [4, 5, 3], coords.clone(), v[0])?;
                    Ok(conv.forward(g, &x)?.features)
                },
                GradCheckOptions::default(),
            )
            .unwrap();
            assert!(r.max_rel_error < 1e-6, "stride {stride}: {r:?}");
        }
    }

    #[test]
    fn pool_gradient_check() {
        let mut rng = rng_from_seed(8);
        let feats = random_tensor(&[6, 3], &mut rng);
        let coords: Vec<[usize; 3]> = (0..6).map(|i| [i / 3, i % 3, 0]).collect();
        let r = crate::numerics::gradcheck::gradient_check_inputs(
            &[feats],
            |g, v| {
                let x = SparseTensor3D::new(g, [2, 3, 1], coords.clone(), v[0])?;
                pool_concat(g, &x)
            },
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-5, "{r:?}");
    }

    #[test]
    fn macs_scale_with_occupancy() {
        let mut store = ParamStore::new();
        let cb = CbBlock::new(&mut store, "cb", 4, 4, true, &mut rng_from_seed(1)).unwrap();
        let shape = [128, 128, 64];
        let count = |n: usize| {
            let mut g = Graph::with_params(&store);
            let x = SparseTensor3D::from_entries(&mut g, shape, random_sites(shape, n, 4, 11)).unwrap();
            macs::measure(|| cb.forward(&mut g, &x).unwrap()).1
        };
        let ratio = count(4000) as f64 / count(2000) as f64;
        assert!((ratio - 2.0).abs() <= 0.2 * 2.0, "ratio {ratio}");
    }
}
