//! Cylindrical voxelization of LiDAR point clouds.
//!
//! Points are converted to `(r, θ, z)`, binned uniformly on a
//! `radius × azimuth × height` grid, lifted to per-point features by a small
//! MLP and reduced to one feature row per occupied voxel by scatter-max.

mod io;

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::nn::Mlp;
use crate::numerics::{Graph, ParamStore, Tensor, Var};

pub use io::{decode_unlp, encode_unlp, read_unlp, write_unlp};

/// Number of scalars in the per-point input vector.
pub const POINT_INPUT_DIM: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<[f64; 3]>,
    intensity: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>, intensity: Option<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud("point cloud has no points".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("point cloud has non-finite coordinates".into()));
        }
        if let Some(i) = &intensity {
            if i.len() != points.len() {
                return Err(Error::dim(format!(
                    "{} intensities for {} points",
                    i.len(),
                    points.len()
                )));
            }
        }
        Ok(PointCloud { points, intensity })
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn intensity(&self) -> Option<&[f64]> {
        self.intensity.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Grid over `(radius, azimuth, height)`; the azimuth axis always spans `[-π, π)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CylGridConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    /// `(H, W, L)` bins for radius, azimuth and height.
    pub bins: [usize; 3],
}

impl Default for CylGridConfig {
    fn default() -> Self {
        CylGridConfig {
            r_min: 0.0,
            r_max: 40.0,
            z_min: -4.0,
            z_max: 8.0,
            bins: [48, 36, 16],
        }
    }
}

impl CylGridConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.r_min, self.r_max, self.z_min, self.z_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.r_min < 0.0 || self.r_max <= self.r_min || self.z_max <= self.z_min {
            return Err(Error::Config(format!("invalid cylindrical extents {self:?}")));
        }
        if self.bins.contains(&0) {
            return Err(Error::Config("cylindrical bin counts must be at least 1".into()));
        }
        Ok(())
    }

    fn extents(&self) -> [(f64, f64); 3] {
        [(self.r_min, self.r_max), (-PI, PI), (self.z_min, self.z_max)]
    }

    /// Bin widths along `(r, θ, z)`.
    pub fn bin_widths(&self) -> [f64; 3] {
        let e = self.extents();
        [0, 1, 2].map(|a| (e[a].1 - e[a].0) / self.bins[a] as f64)
    }

    /// Center of a voxel in `(r, θ, z)`.
    pub fn voxel_center(&self, v: [usize; 3]) -> [f64; 3] {
        let e = self.extents();
        let w = self.bin_widths();
        [0, 1, 2].map(|a| e[a].0 + (v[a] as f64 + 0.5) * w[a])
    }

    /// Voxel volume `Δθ/2 · (r₁² - r₀²) · Δz` for radial bin `h`.
    pub fn voxel_volume(&self, h: usize) -> f64 {
        let [wr, wt, wz] = self.bin_widths();
        let r0 = self.r_min + h as f64 * wr;
        let r1 = r0 + wr;
        0.5 * wt * (r1 * r1 - r0 * r0) * wz
    }

    /// Linear index `(h·W + w)·L + l`.
    pub fn linear_index(&self, v: [usize; 3]) -> usize {
        (v[0] * self.bins[1] + v[1]) * self.bins[2] + v[2]
    }
}

/// `(r, θ, z)` with `θ ∈ [-π, π)`.
pub fn to_cylindrical(p: [f64; 3]) -> [f64; 3] {
    let r = p[0].hypot(p[1]);
    let mut theta = p[1].atan2(p[0]);
    if theta >= PI {
        theta -= 2.0 * PI;
    }
    [r, theta, p[2]]
}

pub fn from_cylindrical(c: [f64; 3]) -> [f64; 3] {
    let (s, co) = c[1].sin_cos();
    [c[0] * co, c[0] * s, c[2]]
}

/// Uniform bin of `v` in `[min, max]`; `v == max` lands in the last bin.
pub fn uniform_bin(v: f64, min: f64, max: f64, bins: usize) -> Option<usize> {
    if !(min..=max).contains(&v) {
        return None;
    }
    let b = ((v - min) / (max - min) * bins as f64).floor() as usize;
    Some(b.min(bins - 1))
}

/// Voxel of one cylindrical point, or `None` when it falls outside the grid.
pub fn voxel_of(c: [f64; 3], cfg: &CylGridConfig) -> Option<[usize; 3]> {
    let h = uniform_bin(c[0], cfg.r_min, cfg.r_max, cfg.bins[0])?;
    let w = uniform_bin(c[1], -PI, PI, cfg.bins[1])?;
    let l = uniform_bin(c[2], cfg.z_min, cfg.z_max, cfg.bins[2])?;
    Some([h, w, l])
}

/// Result of binning a cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    /// Occupied voxels in increasing linear-index order.
    pub coords: Vec<[usize; 3]>,
    /// Indices of kept points in the original cloud.
    pub kept: Vec<usize>,
    /// Row of `coords` for each kept point.
    pub groups: Vec<usize>,
    pub dropped: usize,
}

pub fn partition(cyl: &[[f64; 3]], cfg: &CylGridConfig) -> Partition {
    let mut keyed: Vec<(usize, usize, [usize; 3])> = Vec::new();
    let mut dropped = 0;
    for (i, c) in cyl.iter().enumerate() {
        match voxel_of(*c, cfg) {
            Some(v) => keyed.push((cfg.linear_index(v), i, v)),
            None => dropped += 1,
        }
    }
    let mut order: Vec<usize> = (0..keyed.len()).collect();
    order.sort_by_key(|&j| keyed[j].0);
    let mut coords = Vec::new();
    let mut slot = vec![0; keyed.len()];
    let mut last = None;
    for j in order {
        if last != Some(keyed[j].0) {
            coords.push(keyed[j].2);
            last = Some(keyed[j].0);
        }
        slot[j] = coords.len() - 1;
    }
    Partition {
        coords,
        kept: keyed.iter().map(|k| k.1).collect(),
        groups: slot,
        dropped,
    }
}

/// Builds the `K×8` input matrix for kept points.
///
/// Row layout: `r/r_max, θ/π, z/Δz, x/r_max, y/r_max` and the residual of
/// `(r, θ, z)` to the voxel center divided by the bin width.
pub fn point_inputs(cloud: &PointCloud, cyl: &[[f64; 3]], part: &Partition, cfg: &CylGridConfig) -> Tensor {
    let widths = cfg.bin_widths();
    let z_span = cfg.z_max - cfg.z_min;
    let mut data = Vec::with_capacity(part.kept.len() * POINT_INPUT_DIM);
    for (&i, &g) in part.kept.iter().zip(&part.groups) {
        let c = cyl[i];
        let p = cloud.points()[i];
        let center = cfg.voxel_center(part.coords[g]);
        data.extend_from_slice(&[
            c[0] / cfg.r_max,
            c[1] / PI,
            c[2] / z_span,
            p[0] / cfg.r_max,
            p[1] / cfg.r_max,
        ]);
        data.extend((0..3).map(|a| (c[a] - center[a]) / widths[a]));
    }
    Tensor::from_parts_unchecked(vec![part.kept.len(), POINT_INPUT_DIM], data)
}

/// Occupied voxels with their feature rows on a graph.
#[derive(Clone, Debug)]
pub struct VoxelizedCloud {
    pub coords: Vec<[usize; 3]>,
    /// `M×D` features, row `i` for `coords[i]`.
    pub features: Var,
    pub dropped: usize,
}

/// Per-point MLP `8 → 32 → D` followed by scatter-max into voxels.
#[derive(Clone, Debug)]
pub struct PointFeatureNet {
    pub mlp: Mlp,
    pub grid: CylGridConfig,
    pub dim: usize,
}

impl PointFeatureNet {
    pub const HIDDEN: usize = 32;

    pub fn new(
        store: &mut ParamStore,
        name: &str,
        grid: CylGridConfig,
        dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        grid.validate()?;
        Ok(PointFeatureNet {
            mlp: Mlp::new(store, name, POINT_INPUT_DIM, Self::HIDDEN, dim, rng)?,
            grid,
            dim,
        })
    }

    /// Per-point features `K×D` for an input matrix from [`point_inputs`].
    pub fn point_features(&self, g: &mut Graph<'_>, inputs: Var) -> Result<Var> {
        self.mlp.forward(g, inputs)
    }

    pub fn forward(&self, g: &mut Graph<'_>, cloud: &PointCloud) -> Result<VoxelizedCloud> {
        let cyl: Vec<[f64; 3]> = cloud.points().iter().map(|p| to_cylindrical(*p)).collect();
        let part = partition(&cyl, &self.grid);
        if part.coords.is_empty() {
            return Err(Error::EmptyCloud(format!(
                "all {} points fall outside the cylindrical grid",
                cloud.len()
            )));
        }
        let inputs = g.constant(point_inputs(cloud, &cyl, &part, &self.grid));
        let feats = self.point_features(g, inputs)?;
        let features = g.scatter_max(feats, &part.groups, part.coords.len())?;
        Ok(VoxelizedCloud {
            coords: part.coords,
            features,
            dropped: part.dropped,
        })
    }
}
