//! Modality encoding, the two-branch regression head and pose fusion.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::init::normal;
use crate::numerics::nn::{LayerNorm, Linear};
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::pose::{circular_mean, wrap_angle, Modality, Pose6DoF, SensorId};

/// Standard deviation of the modality-encoding initialization.
pub const ENCODING_INIT_STD: f64 = 0.02;

/// One learnable vector per modality, added to that modality's features.
#[derive(Clone, Debug)]
pub struct ModalityEncoding {
    pub vectors: [ParamId; 3],
    pub dim: usize,
}

impl ModalityEncoding {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut reg = |m: Modality| {
            store.register(format!("{name}.{}", m.name()), normal(&[dim], ENCODING_INIT_STD, rng))
        };
        Ok(ModalityEncoding {
            vectors: [
                reg(Modality::PointCloud)?,
                reg(Modality::Image)?,
                reg(Modality::Radar)?,
            ],
            dim,
        })
    }

    pub fn vector(&self, m: Modality) -> ParamId {
        self.vectors[m.index()]
    }

    pub fn encode(&self, g: &mut Graph<'_>, feature: Var, sensor: SensorId) -> Result<Var> {
        if g.shape(feature) != [self.dim] {
            return Err(Error::dim(format!(
                "feature shape {:?} does not match encoding width {}",
                g.shape(feature),
                self.dim
            )));
        }
        let e = g.param(self.vector(sensor.modality()));
        g.add(feature, e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeadConfig {
    pub dim: usize,
    /// Layer normalization in front of the last rotation layer.
    pub rotation_layer_norm: bool,
    /// Rotation outputs are Euler angles divided by π.
    pub rotation_scaling: bool,
    /// Multiplier applied to the raw translation output, in meters.
    pub translation_scale: f64,
}

impl HeadConfig {
    pub fn new(dim: usize) -> Self {
        HeadConfig {
            dim,
            rotation_layer_norm: true,
            rotation_scaling: true,
            translation_scale: 1.0,
        }
    }

    /// Radians per unit of rotation output.
    pub fn rotation_unit(&self) -> f64 {
        if self.rotation_scaling {
            PI
        } else {
            1.0
        }
    }

    /// Output widths of each branch: `D, D/2, D/4, 3`.
    pub fn branch_sizes(&self) -> [usize; 4] {
        [self.dim, self.dim / 2, self.dim / 4, 3]
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 4 || self.dim % 4 != 0 {
            return Err(Error::Config(format!("head width {} must be a positive multiple of 4", self.dim)));
        }
        if !(self.translation_scale.is_finite() && self.translation_scale > 0.0) {
            return Err(Error::Config("translation scale must be positive".into()));
        }
        Ok(())
    }
}

/// Raw head outputs on a graph.
#[derive(Clone, Copy, Debug)]
pub struct HeadOutput {
    /// Meters, length 3.
    pub translation: Var,
    /// Euler angles in units of [`HeadConfig::rotation_unit`], length 3.
    pub rotation: Var,
}

#[derive(Clone, Debug)]
pub struct Branch {
    pub layers: Vec<Linear>,
    pub norm: Option<LayerNorm>,
}

impl Branch {
    fn new(store: &mut ParamStore, name: &str, cfg: &HeadConfig, norm: bool, rng: &mut impl Rng) -> Result<Self> {
        let mut n_in = cfg.dim;
        let mut layers = Vec::new();
        for (i, n_out) in cfg.branch_sizes().into_iter().enumerate() {
            layers.push(Linear::new(store, &format!("{name}.fc{i}"), n_in, n_out, rng)?);
            n_in = n_out;
        }
        let norm = if norm {
            Some(LayerNorm::new(store, &format!("{name}.norm"), cfg.dim / 4)?)
        } else {
            None
        };
        Ok(Branch { layers, norm })
    }

    fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let last = self.layers.len() - 1;
        let mut h = g.reshape(x, &[1, self.layers[0].n_in])?;
        for (i, layer) in self.layers.iter().enumerate() {
            if i == last {
                if let Some(norm) = &self.norm {
                    h = norm.forward(g, h)?;
                }
            }
            h = layer.forward(g, h)?;
            if i != last {
                h = g.relu(h);
            }
        }
        g.reshape(h, &[3])
    }
}

/// Two shared layers followed by separate translation and rotation branches.
#[derive(Clone, Debug)]
pub struct RegressionHead {
    pub config: HeadConfig,
    pub shared: [Linear; 2],
    pub translation: Branch,
    pub rotation: Branch,
}

impl RegressionHead {
    pub fn new(store: &mut ParamStore, name: &str, config: HeadConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        let shared = [
            Linear::new(store, &format!("{name}.shared0"), d, d, rng)?,
            Linear::new(store, &format!("{name}.shared1"), d, d, rng)?,
        ];
        Ok(RegressionHead {
            config,
            shared,
            translation: Branch::new(store, &format!("{name}.translation"), &config, false, rng)?,
            rotation: Branch::new(store, &format!("{name}.rotation"), &config, config.rotation_layer_norm, rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, feature: Var) -> Result<HeadOutput> {
        if g.shape(feature) != [self.config.dim] {
            return Err(Error::dim(format!(
                "head expects a length-{} feature, got {:?}",
                self.config.dim,
                g.shape(feature)
            )));
        }
        let mut h = feature;
        for layer in &self.shared {
            h = layer.forward_vec(g, h)?;
            h = g.relu(h);
        }
        let t = self.translation.forward(g, h)?;
        let translation = g.scale(t, self.config.translation_scale);
        let rotation = self.rotation.forward(g, h)?;
        Ok(HeadOutput { translation, rotation })
    }

    /// Reads a pose off evaluated head outputs.
    pub fn to_pose(&self, g: &Graph<'_>, out: &HeadOutput) -> Pose6DoF {
        let t = g.value(out.translation).data();
        let r = g.value(out.rotation).data();
        let unit = self.config.rotation_unit();
        Pose6DoF::new([t[0], t[1], t[2]], [0, 1, 2].map(|i| wrap_angle(r[i] * unit)))
    }
}

/// Where multi-sensor predictions are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// Average the per-sensor poses.
    #[default]
    Pose,
    /// Average the encoded features and regress once.
    Feature,
}

/// Mean translation and per-angle circular mean. One pose is returned unchanged.
pub fn fuse_poses(poses: &[Pose6DoF]) -> Result<Pose6DoF> {
    match poses {
        [] => Err(Error::Config("cannot fuse an empty set of poses".into())),
        [p] => Ok(*p),
        _ => {
            let n = poses.len() as f64;
            let translation = [0, 1, 2].map(|i| poses.iter().map(|p| p.translation[i]).sum::<f64>() / n);
            let rotation = [0, 1, 2].map(|i| circular_mean(&poses.iter().map(|p| p.rotation[i]).collect::<Vec<_>>()));
            Ok(Pose6DoF::new(translation, rotation))
        }
    }
}

/// Average of equally shaped feature vectors.
pub fn mean_features(g: &mut Graph<'_>, features: &[Var]) -> Result<Var> {
    if features.is_empty() {
        return Err(Error::Config("cannot average an empty set of features".into()));
    }
    let s = g.add_n(features)?;
    Ok(g.scale(s, 1.0 / features.len() as f64))
}

/// Zeros every value of `ids`.
pub fn zero_params(store: &mut ParamStore, ids: impl IntoIterator<Item = ParamId>) -> Result<()> {
    for id in ids {
        let shape = store.value(id).shape().to_vec();
        store.set_value(id, Tensor::zeros(shape))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::{gradient_check, random_tensor, GradCheckOptions};
    use crate::numerics::init::rng_from_seed;
    use proptest::prelude::{prop_assert, proptest};

    fn head(dim: usize) -> (ParamStore, RegressionHead) {
        let mut store = ParamStore::new();
        let h = RegressionHead::new(&mut store, "head", HeadConfig::new(dim), &mut rng_from_seed(1)).unwrap();
        (store, h)
    }

    #[test]
    fn zeroed_encodings_are_identity() {
        let mut store = ParamStore::new();
        let enc = ModalityEncoding::new(&mut store, "enc", 5, &mut rng_from_seed(0)).unwrap();
        zero_params(&mut store, enc.vectors).unwrap();
        let f = random_tensor(&[5], &mut rng_from_seed(1));
        let mut g = Graph::with_params(&store);
        let x = g.input(f.clone());
        let y = enc.encode(&mut g, x, SensorId::C2).unwrap();
        assert_eq!(g.value(y), &f);
    }

    #[test]
    fn same_modality_shares_the_vector() {
        let mut store = ParamStore::new();
        let enc = ModalityEncoding::new(&mut store, "enc", 4, &mut rng_from_seed(0)).unwrap();
        let mut rng = rng_from_seed(2);
        let (a, b) = (random_tensor(&[4], &mut rng), random_tensor(&[4], &mut rng));
        let mut g = Graph::with_params(&store);
        let (xa, xb) = (g.input(a.clone()), g.input(b.clone()));
        let ya = enc.encode(&mut g, xa, SensorId::L1).unwrap();
        let yb = enc.encode(&mut g, xb, SensorId::L2).unwrap();
        let e = store.value(enc.vector(Modality::PointCloud)).data();
        for i in 0..4 {
            assert_eq!(g.value(ya).data()[i] - a.data()[i], g.value(yb).data()[i] - b.data()[i]);
            assert_eq!(g.value(ya).data()[i], a.data()[i] + e[i]);
        }
    }

    #[test]
    fn gradient_reaches_only_the_used_encoding() {
        let mut store = ParamStore::new();
        let enc = ModalityEncoding::new(&mut store, "enc", 4, &mut rng_from_seed(0)).unwrap();
        let mut g = Graph::with_params(&store);
        let x = g.input(random_tensor(&[4], &mut rng_from_seed(3)));
        let y = enc.encode(&mut g, x, SensorId::R).unwrap();
        let sq = g.mul(y, y).unwrap();
        let l = g.sum(sq);
        let grads = g.backward(l).unwrap();
        assert!(grads.param(enc.vector(Modality::Radar)).unwrap().max_abs() > 0.0);
        for m in [Modality::PointCloud, Modality::Image] {
            assert!(grads.param(enc.vector(m)).is_none_or(|t| t.max_abs() == 0.0));
        }
    }

    #[test]
    fn encode_rejects_wrong_width() {
        let mut store = ParamStore::new();
        let enc = ModalityEncoding::new(&mut store, "enc", 4, &mut rng_from_seed(0)).unwrap();
        let mut g = Graph::with_params(&store);
        let x = g.input(Tensor::zeros([5]));
        assert!(matches!(enc.encode(&mut g, x, SensorId::L1), Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_last_layers_give_zero_pose() {
        let (mut store, h) = head(16);
        let last = |b: &Branch| b.layers.last().cloned().unwrap();
        let (lt, lr) = (last(&h.translation), last(&h.rotation));
        zero_params(&mut store, [lt.weight, lt.bias, lr.weight, lr.bias]).unwrap();
        let mut g = Graph::with_params(&store);
        let x = g.input(random_tensor(&[16], &mut rng_from_seed(4)));
        let out = h.forward(&mut g, x).unwrap();
        assert_eq!(h.to_pose(&g, &out), Pose6DoF::IDENTITY);
    }

    #[test]
    fn branch_widths_follow_the_feature_width() {
        let (store, h) = head(1024);
        assert_eq!(h.config.branch_sizes(), [1024, 512, 256, 3]);
        for b in [&h.translation, &h.rotation] {
            let outs: Vec<usize> = b.layers.iter().map(|l| l.n_out).collect();
            assert_eq!(outs, vec![1024, 512, 256, 3]);
            assert_eq!(b.layers[0].n_in, 1024);
        }
        assert_eq!(h.shared.each_ref().map(|l| (l.n_in, l.n_out)), [(1024, 1024); 2]);
        assert_eq!(store.value(h.translation.layers[3].weight).shape(), &[256, 3]);
    }

    #[test]
    fn head_gradient_check() {
        let (mut store, h) = head(16);
        let inputs = vec![random_tensor(&[16], &mut rng_from_seed(5))];
        let r = gradient_check(
            &mut store,
            &inputs,
            |g, v| {
                let out = h.forward(g, v[0])?;
                g.concat(&[out.translation, out.rotation])
            },
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-5, "{r:?}");
    }

    #[test]
    fn regression_is_deterministic() {
        let (store, h) = head(8);
        let f = random_tensor(&[8], &mut rng_from_seed(6));
        let run = || {
            let mut g = Graph::with_params(&store);
            let x = g.input(f.clone());
            let out = h.forward(&mut g, x).unwrap();
            h.to_pose(&g, &out)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn fusion_rules() {
        let p = Pose6DoF::new([1.0, 2.0, 3.0], [0.1, 0.2, 0.3]);
        assert_eq!(fuse_poses(&[p]).unwrap(), p);
        let a = Pose6DoF::new([0.0; 3], [179f64.to_radians(), 0.0, 0.0]);
        let b = Pose6DoF::new([2.0, 0.0, 0.0], [(-179f64).to_radians(), 0.0, 0.0]);
        let f = fuse_poses(&[a, b]).unwrap();
        assert_eq!(f.translation, [1.0, 0.0, 0.0]);
        assert!((f.rotation[0].abs() - PI).abs() < 1e-12);
        assert!(fuse_poses(&[]).is_err());
    }

    proptest! {
        #[test]
        fn fusion_ignores_order(v in proptest::collection::vec(-3.0f64..3.0, 18)) {
            let poses: Vec<Pose6DoF> = v.chunks(6)
                .map(|c| Pose6DoF::new([c[0], c[1], c[2]], [c[3], c[4], c[5]]))
                .collect();
            let mut rev = poses.clone();
            rev.reverse();
            let (a, b) = (fuse_poses(&poses).unwrap(), fuse_poses(&rev).unwrap());
            for i in 0..3 {
                prop_assert!((a.translation[i] - b.translation[i]).abs() < 1e-12);
                prop_assert!(crate::pose::angle_diff(a.rotation[i], b.rotation[i]).abs() < 1e-12);
            }
        }
    }
}
