//! Brute-force dense 3D convolution with occupancy masking, shared by the
//! sparse oracle tests and the acceptance run.

use polyloc::numerics::init::rng_from_seed;
use polyloc::numerics::{Graph, ParamStore, Tensor};
use polyloc::sparse3d::{Backbone, CbBlock, CbdBlock, SparseConv3d, SparseTensor3D};
use rand::Rng;

/// Dense `H×W×L×C` volume with an occupancy mask.
#[derive(Clone)]
pub struct Dense {
    pub shape: [usize; 3],
    pub c: usize,
    pub data: Vec<f64>,
    pub active: Vec<bool>,
}

impl Dense {
    pub fn at(&self, s: [usize; 3]) -> usize {
        (s[0] * self.shape[1] + s[1]) * self.shape[2] + s[2]
    }
}

pub fn dense_conv(x: &Dense, store: &ParamStore, conv: &SparseConv3d) -> Dense {
    let k = store.value(conv.kernel).data();
    let b = store.value(conv.bias).data();
    let s = conv.stride;
    let out_shape = x.shape.map(|n| (n + s - 1) / s);
    let mut out = Dense {
        shape: out_shape,
        c: conv.c_out,
        data: vec![0.0; out_shape.iter().product::<usize>() * conv.c_out],
        active: vec![false; out_shape.iter().product()],
    };
    for h in 0..x.shape[0] {
        for w in 0..x.shape[1] {
            for l in 0..x.shape[2] {
                if x.active[x.at([h, w, l])] {
                    let o = if s == 1 { [h, w, l] } else { [h / s, w / s, l / s] };
                    let i = out.at(o);
                    out.active[i] = true;
                }
            }
        }
    }
    let [kh, kw, kl] = conv.ksize;
    for oh in 0..out_shape[0] {
        for ow in 0..out_shape[1] {
            for ol in 0..out_shape[2] {
                let oi = out.at([oh, ow, ol]);
                for co in 0..conv.c_out {
                    let mut acc = b[co];
                    for a in 0..kh {
                        for bb in 0..kw {
                            for c in 0..kl {
                                let ih = (s * oh + a) as isize - (kh / 2) as isize;
                                let mut iw = (s * ow + bb) as isize - (kw / 2) as isize;
                                let il = (s * ol + c) as isize - (kl / 2) as isize;
                                if conv.azimuth_wrap {
                                    iw = iw.rem_euclid(x.shape[1] as isize);
                                }
                                let inside = |v: isize, n: usize| v >= 0 && v < n as isize;
                                if !inside(ih, x.shape[0]) || !inside(iw, x.shape[1]) || !inside(il, x.shape[2]) {
                                    continue;
                                }
                                let ii = x.at([ih as usize, iw as usize, il as usize]);
                                for ci in 0..x.c {
                                    let kidx = ((((a * kw + bb) * kl + c) * x.c + ci) * conv.c_out) + co;
                                    acc += x.data[ii * x.c + ci] * k[kidx];
                                }
                            }
                        }
                    }
                    out.data[oi * conv.c_out + co] = if out.active[oi] { acc } else { 0.0 };
                }
            }
        }
    }
    out
}

pub fn dense_cb(x: &Dense, store: &ParamStore, cb: &CbBlock) -> Dense {
    let a = dense_conv(&dense_conv(x, store, &cb.a1), store, &cb.a2);
    let b = dense_conv(&dense_conv(x, store, &cb.b1), store, &cb.b2);
    let mut out = a.clone();
    for (o, v) in out.data.iter_mut().zip(&b.data) {
        *o = (*o + v).max(0.0);
    }
    out
}

pub fn dense_cbd(x: &Dense, store: &ParamStore, cbd: &CbdBlock) -> Dense {
    dense_conv(&dense_cb(x, store, &cbd.cb), store, &cbd.down)
}

pub struct Case {
    pub shape: [usize; 3],
    pub entries: Vec<([usize; 3], Vec<f64>)>,
}

pub fn random_case(seed: u64, max: usize, c: usize) -> Case {
    let mut rng = rng_from_seed(seed);
    let shape = [0; 3].map(|_| rng.random_range(2..=max));
    let total: usize = shape.iter().product();
    let n = rng.random_range(1..=total.min(40));
    let entries = rand::seq::index::sample(&mut rng, total, n)
        .into_iter()
        .map(|li| {
            let site = [li / (shape[1] * shape[2]), (li / shape[2]) % shape[1], li % shape[2]];
            (site, (0..c).map(|_| rng.random_range(-1.0..1.0)).collect())
        })
        .collect();
    Case { shape, entries }
}

pub fn densify(case: &Case, c: usize) -> Dense {
    let total: usize = case.shape.iter().product();
    let mut d = Dense {
        shape: case.shape,
        c,
        data: vec![0.0; total * c],
        active: vec![false; total],
    };
    for (s, f) in &case.entries {
        let i = d.at(*s);
        d.active[i] = true;
        d.data[i * c..(i + 1) * c].copy_from_slice(f);
    }
    d
}

/// Largest absolute difference, or infinity when shapes or active sites differ.
pub fn compare(g: &Graph<'_>, y: &SparseTensor3D, dense: &Dense) -> f64 {
    if y.shape != dense.shape {
        return f64::INFINITY;
    }
    let active: Vec<[usize; 3]> = (0..dense.active.len())
        .filter(|&i| dense.active[i])
        .map(|i| [i / (dense.shape[1] * dense.shape[2]), (i / dense.shape[2]) % dense.shape[1], i % dense.shape[2]])
        .collect();
    if y.coords != active {
        return f64::INFINITY;
    }
    let f = g.value(y.features);
    let mut worst: f64 = 0.0;
    for (row, s) in y.coords.iter().enumerate() {
        let i = dense.at(*s);
        for ch in 0..dense.c {
            worst = worst.max((f.at2(row, ch) - dense.data[i * dense.c + ch]).abs());
        }
    }
    worst
}

pub fn randomize_biases(store: &mut ParamStore, seed: u64) {
    let mut rng = rng_from_seed(seed);
    let ids: Vec<_> = store.ids().filter(|&id| store.get(id).name.ends_with(".bias")).collect();
    for id in ids {
        let n = store.value(id).len();
        store
            .set_value(id, Tensor::from_vec((0..n).map(|_| rng.random_range(-0.5..0.5)).collect()))
            .unwrap();
    }
}

/// Dense forward pass through all five backbone blocks.
pub fn dense_backbone(x: &Dense, store: &ParamStore, bb: &Backbone) -> Dense {
    let mut d = dense_cb(x, store, &bb.cb);
    for block in &bb.cbd {
        d = dense_cbd(&d, store, block);
    }
    d
}
