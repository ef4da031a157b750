//! Synthetic landmark world, loop trajectory and simple sensor renderers.
//!
//! There is no occlusion or multipath. Every landmark is a point with a
//! reflectivity and a color. LiDAR returns a small fixed cluster per
//! landmark, radar splats reflectivity into polar bins, and cameras draw
//! Gaussian blobs through a pinhole model.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::cylindrical::{write_unlp, PointCloud};
use crate::error::{Error, Result};
use crate::imaging::{write_unri, ImageFrame, RadarPolarScan};
use crate::numerics::init::{mix_seed, rng_from_seed};
use crate::pose::{wrap_angle, Modality, Pose6DoF, SensorId};
use crate::sync::{frame_file_name, write_gt_csv, write_odometry_csv, GroundTruthStream, OdometryStep, GT_FILE, ODOMETRY_FILE};

/// Points emitted per landmark.
pub const CLUSTER_SIZE: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub landmarks: Vec<[f64; 3]>,
    pub reflectivity: Vec<f64>,
    /// RGB weights in `[0, 1]`.
    pub colors: Vec<[f64; 3]>,
    /// Zero-mean offsets of each landmark's LiDAR cluster.
    pub clusters: Vec<[[f64; 3]; CLUSTER_SIZE]>,
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl World {
    /// Uniformly scattered landmarks in `[-h, h]² × [z0, z1]`.
    pub fn random(count: usize, half_extent: f64, z_range: (f64, f64), seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::Config("world needs at least one landmark".into()));
        }
        let mut rng = rng_from_seed(seed);
        let mut w = World {
            landmarks: Vec::with_capacity(count),
            reflectivity: Vec::with_capacity(count),
            colors: Vec::with_capacity(count),
            clusters: Vec::with_capacity(count),
            min: [-half_extent, -half_extent, z_range.0],
            max: [half_extent, half_extent, z_range.1],
        };
        for _ in 0..count {
            let p = [0, 1, 2].map(|k| rng.random_range(w.min[k]..=w.max[k]));
            w.landmarks.push(p);
            w.reflectivity.push(rng.random_range(0.3..=1.0));
            w.colors.push([0, 1, 2].map(|_| rng.random_range(0.2..=1.0)));
            let mut c = [[0.0; 3]; CLUSTER_SIZE];
            for o in c.iter_mut() {
                *o = [0, 1, 2].map(|_| rng.random_range(-0.2..=0.2));
            }
            let mean = [0, 1, 2].map(|k| c.iter().map(|o| o[k]).sum::<f64>() / CLUSTER_SIZE as f64);
            for o in c.iter_mut() {
                for k in 0..3 {
                    o[k] -= mean[k];
                }
            }
            w.clusters.push(c);
        }
        Ok(w)
    }

    /// Single landmark with an exact five-point cross cluster, for tests and examples.
    pub fn single(p: [f64; 3], reflectivity: f64) -> Self {
        let d = 0.1;
        World {
            landmarks: vec![p],
            reflectivity: vec![reflectivity],
            colors: vec![[1.0; 3]],
            clusters: vec![[[0.0; 3], [d, 0.0, 0.0], [-d, 0.0, 0.0], [0.0, d, 0.0], [0.0, -d, 0.0]]],
            min: p.map(|v| v - 1.0),
            max: p.map(|v| v + 1.0),
        }
    }

    /// Length of the bounding box diagonal.
    pub fn diameter(&self) -> f64 {
        (0..3).map(|k| (self.max[k] - self.min[k]).powi(2)).sum::<f64>().sqrt()
    }
}

/// Closed elliptical loop with heading along the velocity and small roll and pitch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Trajectory {
    pub radii: (f64, f64),
    pub height: f64,
    /// Seconds per loop.
    pub period: f64,
}

impl Trajectory {
    pub fn phase(&self, t_ns: i64) -> f64 {
        2.0 * PI * (t_ns as f64 * 1e-9) / self.period
    }

    pub fn pose_at(&self, t_ns: i64) -> Pose6DoF {
        let phi = self.phase(t_ns);
        let (s, c) = phi.sin_cos();
        let (rx, ry) = self.radii;
        let yaw = (ry * c).atan2(-rx * s);
        Pose6DoF::new(
            [rx * c, ry * s, self.height],
            [wrap_angle(yaw), 0.03 * (2.0 * phi).sin(), 0.02 * (3.0 * phi).cos()],
        )
    }

    /// Largest horizontal speed in m/s.
    pub fn max_speed(&self) -> f64 {
        2.0 * PI * self.radii.0.max(self.radii.1) / self.period
    }
}

/// Mounting pose of each sensor on the vehicle.
pub fn extrinsic(sensor: SensorId) -> Pose6DoF {
    match sensor {
        SensorId::L1 => Pose6DoF::new([0.0, 0.5, 0.0], [0.0; 3]),
        SensorId::L2 => Pose6DoF::new([0.0, -0.5, 0.0], [0.0; 3]),
        SensorId::C1 => Pose6DoF::new([0.5, 0.0, 0.0], [0.0; 3]),
        SensorId::C2 => Pose6DoF::new([0.0, 0.5, 0.0], [PI / 2.0, 0.0, 0.0]),
        SensorId::C3 => Pose6DoF::new([0.0, -0.5, 0.0], [-PI / 2.0, 0.0, 0.0]),
        SensorId::R => Pose6DoF::IDENTITY,
    }
}

/// Landmark clusters within `max_range` of the sensor, in the sensor frame.
pub fn render_pointcloud(
    world: &World,
    pose: &Pose6DoF,
    max_range: f64,
    noise_sigma: f64,
    rng: &mut impl Rng,
) -> Result<PointCloud> {
    if !(max_range > 0.0) {
        return Err(Error::Config("LiDAR range must be positive".into()));
    }
    let noise = Normal::new(0.0, noise_sigma.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let mut points = Vec::new();
    let mut intensity = Vec::new();
    for (i, l) in world.landmarks.iter().enumerate() {
        let local = pose.inverse_transform_point(*l);
        if local.iter().map(|v| v * v).sum::<f64>().sqrt() > max_range {
            continue;
        }
        for o in &world.clusters[i] {
            let p = pose.inverse_transform_point([0, 1, 2].map(|k| l[k] + o[k]));
            points.push(p.map(|v| if noise_sigma > 0.0 { v + noise.sample(rng) } else { v }));
            intensity.push(world.reflectivity[i]);
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud(format!("no landmark within {max_range} m")));
    }
    PointCloud::new(points, Some(intensity))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadarSpec {
    pub azimuths: usize,
    pub range_bins: usize,
    pub range_res: f64,
    /// Upper bound of the uniform speckle added to every bin.
    pub speckle: f64,
}

/// Bilinear splat of landmark reflectivity into `(azimuth, range)` bins.
pub fn render_radar(world: &World, pose: &Pose6DoF, spec: &RadarSpec, rng: &mut impl Rng) -> Result<RadarPolarScan> {
    let mut scan = RadarPolarScan::zeros(spec.azimuths, spec.range_bins, spec.range_res)?;
    let (na, nr) = (spec.azimuths, spec.range_bins);
    for (i, l) in world.landmarks.iter().enumerate() {
        let p = pose.inverse_transform_point(*l);
        let range = p[0].hypot(p[1]);
        let rb = range / spec.range_res;
        if rb > (nr - 1) as f64 {
            continue;
        }
        let ab = p[1].atan2(p[0]).rem_euclid(2.0 * PI) / scan.azimuth_width();
        let (a0, fa) = (ab.floor() as usize % na, ab - ab.floor());
        let (r0, fr) = (rb.floor() as usize, rb - rb.floor());
        let a1 = (a0 + 1) % na;
        let r1 = (r0 + 1).min(nr - 1);
        let v = world.reflectivity[i];
        for (a, wa) in [(a0, 1.0 - fa), (a1, fa)] {
            for (r, wr) in [(r0, 1.0 - fr), (r1, fr)] {
                scan.power[a * nr + r] += v * wa * wr;
            }
        }
    }
    for p in scan.power.iter_mut() {
        let s = if spec.speckle > 0.0 { rng.random_range(0.0..spec.speckle) } else { 0.0 };
        *p = (*p + s).clamp(0.0, 1.0);
    }
    Ok(scan)
}

/// Pinhole camera looking along the sensor `+x` axis, `+y` left, `+z` up.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub rows: usize,
    pub cols: usize,
    pub focal: f64,
    /// Principal point `(row, col)`.
    pub center: (f64, f64),
    pub blob_sigma: f64,
    /// Landmarks farther than this are not drawn.
    pub max_depth: f64,
}

impl Intrinsics {
    pub fn centered(rows: usize, cols: usize, focal: f64) -> Self {
        Intrinsics {
            rows,
            cols,
            focal,
            center: (rows as f64 / 2.0, cols as f64 / 2.0),
            blob_sigma: 1.2,
            max_depth: 60.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows % 32 != 0 || self.cols % 32 != 0 || self.rows == 0 || self.cols == 0 {
            return Err(Error::Config(format!("camera {}×{} must be a multiple of 32", self.rows, self.cols)));
        }
        if !(self.focal > 0.0 && self.blob_sigma > 0.0) {
            return Err(Error::Config("focal length and blob size must be positive".into()));
        }
        Ok(())
    }

    /// Pixel `(row, col)` of a sensor-frame point in front of the camera.
    pub fn project(&self, p: [f64; 3]) -> Option<(f64, f64)> {
        if p[0] <= 0.1 || p[0] > self.max_depth {
            return None;
        }
        Some((self.center.0 - self.focal * p[2] / p[0], self.center.1 - self.focal * p[1] / p[0]))
    }
}

pub fn render_camera(world: &World, pose: &Pose6DoF, k: &Intrinsics) -> Result<ImageFrame> {
    k.validate()?;
    let mut img = ImageFrame::zeros(3, k.rows, k.cols);
    let reach = (3.0 * k.blob_sigma).ceil() as i64;
    let inv = 1.0 / (2.0 * k.blob_sigma * k.blob_sigma);
    let plane = k.rows * k.cols;
    for (i, l) in world.landmarks.iter().enumerate() {
        let Some((u, v)) = k.project(pose.inverse_transform_point(*l)) else {
            continue;
        };
        let (ui, vi) = (u.round() as i64, v.round() as i64);
        for r in (ui - reach).max(0)..=(ui + reach).min(k.rows as i64 - 1) {
            for c in (vi - reach).max(0)..=(vi + reach).min(k.cols as i64 - 1) {
                let d2 = (r as f64 - u).powi(2) + (c as f64 - v).powi(2);
                let w = world.reflectivity[i] * (-d2 * inv).exp();
                let idx = r as usize * k.cols + c as usize;
                for ch in 0..3 {
                    img.data[ch * plane + idx] += w * world.colors[i][ch];
                }
            }
        }
    }
    for v in img.data.iter_mut() {
        *v = v.min(1.0);
    }
    Ok(img)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub duration_s: f64,
    pub lidar_hz: f64,
    pub camera_hz: f64,
    pub radar_hz: f64,
    pub gt_hz: f64,
    pub landmarks: usize,
    pub half_extent: f64,
    pub z_range: (f64, f64),
    pub trajectory: Trajectory,
    pub lidar_range: f64,
    pub lidar_noise: f64,
    pub radar: RadarSpec,
    pub camera: Intrinsics,
    /// Ground-truth rows strictly inside this window (seconds) are left out.
    pub gt_gap: Option<(f64, f64)>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            duration_s: 10.0,
            lidar_hz: 20.0,
            camera_hz: 16.0,
            radar_hz: 4.0,
            gt_hz: 10.0,
            landmarks: 400,
            half_extent: 40.0,
            z_range: (-1.0, 6.0),
            trajectory: Trajectory {
                radii: (25.0, 18.0),
                height: 0.0,
                period: 60.0,
            },
            lidar_range: 30.0,
            lidar_noise: 0.02,
            radar: RadarSpec {
                azimuths: 64,
                range_bins: 64,
                range_res: 0.5,
                speckle: 0.05,
            },
            camera: Intrinsics::centered(64, 64, 32.0),
            gt_gap: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, hz) in [
            ("lidar", self.lidar_hz),
            ("camera", self.camera_hz),
            ("radar", self.radar_hz),
            ("ground truth", self.gt_hz),
        ] {
            if !(hz.is_finite() && hz > 0.0) {
                return Err(Error::Config(format!("{name} rate must be positive, got {hz}")));
            }
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::Config("duration must be positive".into()));
        }
        if self.radar.azimuths < 4 || self.radar.range_bins < 4 {
            return Err(Error::Config("radar needs at least 4 azimuths and 4 range bins".into()));
        }
        self.camera.validate()
    }

    pub fn rate(&self, sensor: SensorId) -> f64 {
        match sensor.modality() {
            Modality::PointCloud => self.lidar_hz,
            Modality::Image => self.camera_hz,
            Modality::Radar => self.radar_hz,
        }
    }

    /// Frame timestamps: `k / rate` plus a small per-sensor phase, for `k / rate < duration`.
    pub fn timestamps(&self, sensor: SensorId) -> Vec<i64> {
        let period = 1e9 / self.rate(sensor);
        let phase = if sensor == SensorId::R { 0 } else { 1_000_000 * (1 + sensor.index() as i64) };
        let n = (self.duration_s * self.rate(sensor)).round() as i64;
        (0..n).map(|k| (k as f64 * period).round() as i64 + phase).collect()
    }

    /// Ground-truth timestamps covering `[0, duration + 10 ms]`.
    pub fn gt_timestamps(&self) -> Vec<i64> {
        let period = 1e9 / self.gt_hz;
        let end = (self.duration_s * 1e9) as i64 + 10_000_000;
        let n = (end as f64 / period).ceil() as i64;
        (0..=n).map(|k| (k as f64 * period).round() as i64).collect()
    }

    pub fn world(&self) -> Result<World> {
        World::random(self.landmarks, self.half_extent, self.z_range, mix_seed(&[self.seed, 0x3017d]))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmitReport {
    pub frames: BTreeMap<SensorId, usize>,
    /// LiDAR frames skipped because no landmark was in range.
    pub skipped_empty: usize,
    pub gt_rows: usize,
    pub world_diameter: f64,
}

enum Rendered {
    Cloud(PointCloud),
    Raster(ImageFrame),
    Empty,
}

fn render(cfg: &SynthConfig, world: &World, sensor: SensorId, t: i64) -> Result<Rendered> {
    let pose = cfg.trajectory.pose_at(t).compose(&extrinsic(sensor));
    let mut rng = rng_from_seed(mix_seed(&[cfg.seed, sensor.index() as u64, t as u64]));
    Ok(match sensor.modality() {
        Modality::PointCloud => match render_pointcloud(world, &pose, cfg.lidar_range, cfg.lidar_noise, &mut rng) {
            Ok(c) => Rendered::Cloud(c),
            Err(Error::EmptyCloud(_)) => Rendered::Empty,
            Err(e) => return Err(e),
        },
        Modality::Image => Rendered::Raster(render_camera(world, &pose, &cfg.camera)?),
        Modality::Radar => {
            let scan = render_radar(world, &pose, &cfg.radar, &mut rng)?;
            Rendered::Raster(ImageFrame::new(1, scan.azimuths, scan.range_bins, scan.power)?)
        }
    })
}

/// Writes `gt.csv`, `odometry.csv` and one directory of frames per sensor under `root`.
pub fn emit_dataset(root: &Path, cfg: &SynthConfig) -> Result<EmitReport> {
    cfg.validate()?;
    let world = cfg.world()?;
    let mut report = EmitReport {
        world_diameter: world.diameter(),
        ..EmitReport::default()
    };
    let all_ts = cfg.gt_timestamps();
    let all_poses: Vec<Pose6DoF> = all_ts.iter().map(|&t| cfg.trajectory.pose_at(t)).collect();
    let odometry: Vec<OdometryStep> = all_ts
        .windows(2)
        .zip(all_poses.windows(2))
        .map(|(t, p)| OdometryStep {
            t0: t[0],
            t1: t[1],
            delta: p[0].relative_to(&p[1]),
        })
        .collect();
    let keep = |t: i64| {
        cfg.gt_gap
            .is_none_or(|(a, b)| !((a * 1e9) as i64 <= t && t <= (b * 1e9) as i64))
    };
    let (gt_ts, gt_poses): (Vec<i64>, Vec<Pose6DoF>) = all_ts
        .iter()
        .zip(&all_poses)
        .filter(|(t, _)| keep(**t))
        .map(|(t, p)| (*t, *p))
        .unzip();
    report.gt_rows = gt_ts.len();
    write_gt_csv(&root.join(GT_FILE), &GroundTruthStream::new(gt_ts, gt_poses)?)?;
    write_odometry_csv(&root.join(ODOMETRY_FILE), &odometry)?;

    for sensor in SensorId::ALL {
        let ts = cfg.timestamps(sensor);
        let rendered = ts
            .par_iter()
            .map(|&t| render(cfg, &world, sensor, t))
            .collect::<Result<Vec<_>>>()?;
        let mut written = 0;
        for (&t, r) in ts.iter().zip(rendered) {
            let path: PathBuf = root.join(frame_file_name(sensor, t));
            match r {
                Rendered::Cloud(c) => write_unlp(&path, &c)?,
                Rendered::Raster(img) => write_unri(&path, &img)?,
                Rendered::Empty => {
                    report.skipped_empty += 1;
                    continue;
                }
            }
            written += 1;
        }
        report.frames.insert(sensor, written);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Vector3};

    #[test]
    fn identity_render_centers_cluster() {
        let w = World::single([1.0, 0.0, 0.0], 0.8);
        let c = render_pointcloud(&w, &Pose6DoF::IDENTITY, 10.0, 0.0, &mut rng_from_seed(0)).unwrap();
        assert_eq!(c.len(), CLUSTER_SIZE);
        let mean = [0, 1, 2].map(|k| c.points().iter().map(|p| p[k]).sum::<f64>() / 5.0);
        assert!((mean[0] - 1.0).abs() < 1e-15 && mean[1].abs() < 1e-15 && mean[2].abs() < 1e-15);
    }

    #[test]
    fn moving_forward_shifts_points_back() {
        let w = World::random(50, 10.0, (-1.0, 1.0), 3).unwrap();
        let a = render_pointcloud(&w, &Pose6DoF::IDENTITY, 100.0, 0.0, &mut rng_from_seed(0)).unwrap();
        let moved = Pose6DoF::new([1.0, 0.0, 0.0], [0.0; 3]);
        let b = render_pointcloud(&w, &moved, 100.0, 0.0, &mut rng_from_seed(0)).unwrap();
        for (p, q) in a.points().iter().zip(b.points()) {
            assert!((q[0] - (p[0] - 1.0)).abs() < 1e-12 && (q[1] - p[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_world_is_empty() {
        let w = World::single([100.0, 0.0, 0.0], 1.0);
        assert!(matches!(
            render_pointcloud(&w, &Pose6DoF::IDENTITY, 10.0, 0.0, &mut rng_from_seed(0)),
            Err(Error::EmptyCloud(_))
        ));
    }

    /// Rigid transform mapping `a` onto `b` by the SVD of the cross-covariance.
    fn register(a: &[[f64; 3]], b: &[[f64; 3]]) -> (Matrix3<f64>, Vector3<f64>) {
        let n = a.len() as f64;
        let ca: Vector3<f64> = a.iter().map(|p| Vector3::from(*p)).sum::<Vector3<f64>>() / n;
        let cb: Vector3<f64> = b.iter().map(|p| Vector3::from(*p)).sum::<Vector3<f64>>() / n;
        let mut h = Matrix3::zeros();
        for (p, q) in a.iter().zip(b) {
            h += (Vector3::from(*p) - ca) * (Vector3::from(*q) - cb).transpose();
        }
        let svd = h.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut d = Matrix3::identity();
        d[(2, 2)] = (vt.transpose() * u.transpose()).determinant().signum();
        let r = vt.transpose() * d * u.transpose();
        (r, cb - r * ca)
    }

    #[test]
    fn registration_recovers_relative_pose() {
        let w = World::random(30, 15.0, (-2.0, 4.0), 9).unwrap();
        let pa = Pose6DoF::new([1.0, -2.0, 0.3], [0.4, 0.05, -0.03]);
        let pb = Pose6DoF::new([3.5, 0.5, 0.1], [1.1, -0.02, 0.04]);
        let a = render_pointcloud(&w, &pa, 1e3, 0.0, &mut rng_from_seed(0)).unwrap();
        let b = render_pointcloud(&w, &pb, 1e3, 0.0, &mut rng_from_seed(0)).unwrap();
        // points in frame b map to frame a by pa⁻¹∘pb
        let (r, t) = register(b.points(), a.points());
        let rel = pa.relative_to(&pb);
        let dr = r - rel.rotation_matrix();
        assert!(dr.abs().max() < 1e-6);
        for k in 0..3 {
            assert!((t[k] - rel.translation[k]).abs() < 1e-6);
        }
    }

    fn radar_spec() -> RadarSpec {
        RadarSpec {
            azimuths: 36,
            range_bins: 40,
            range_res: 0.5,
            speckle: 0.0,
        }
    }

    fn hottest(scan: &RadarPolarScan) -> (usize, usize) {
        let i = (0..scan.power.len())
            .max_by(|&a, &b| scan.power[a].total_cmp(&scan.power[b]))
            .unwrap();
        (i / scan.range_bins, i % scan.range_bins)
    }

    #[test]
    fn radar_dead_ahead_lands_in_first_azimuth() {
        let w = World::single([7.3, 0.0, 0.0], 0.9);
        let s = render_radar(&w, &Pose6DoF::IDENTITY, &radar_spec(), &mut rng_from_seed(0)).unwrap();
        assert_eq!(hottest(&s), (0, (7.3f64 / 0.5).round() as usize));
        let empty = World {
            landmarks: vec![],
            reflectivity: vec![],
            colors: vec![],
            clusters: vec![],
            min: [0.0; 3],
            max: [1.0; 3],
        };
        let s = render_radar(&empty, &Pose6DoF::IDENTITY, &radar_spec(), &mut rng_from_seed(0)).unwrap();
        assert!(s.power.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn turning_shifts_the_hot_azimuth() {
        let w = World::single([0.0, 8.0, 0.0], 1.0);
        let spec = radar_spec();
        let width = 2.0 * PI / spec.azimuths as f64;
        let base = hottest(&render_radar(&w, &Pose6DoF::IDENTITY, &spec, &mut rng_from_seed(0)).unwrap()).0;
        for turn in [3.0 * width, 7.2 * width, -5.0 * width] {
            let pose = Pose6DoF::new([0.0; 3], [turn, 0.0, 0.0]);
            let a = hottest(&render_radar(&w, &pose, &spec, &mut rng_from_seed(0)).unwrap()).0;
            let shift = (base as i64 - (turn / width).round() as i64).rem_euclid(spec.azimuths as i64);
            assert_eq!(a as i64, shift, "turn {turn}");
        }
    }

    fn brightest(img: &ImageFrame) -> (usize, usize) {
        let plane = img.rows * img.cols;
        let i = (0..plane).max_by(|&a, &b| img.data[a].total_cmp(&img.data[b])).unwrap();
        (i / img.cols, i % img.cols)
    }

    #[test]
    fn camera_axis_and_frustum() {
        let k = Intrinsics::centered(64, 64, 32.0);
        let w = World::single([10.0, 0.0, 0.0], 1.0);
        let img = render_camera(&w, &Pose6DoF::IDENTITY, &k).unwrap();
        assert_eq!(brightest(&img), (32, 32));
        let behind = World::single([-10.0, 0.0, 0.0], 1.0);
        let img = render_camera(&behind, &Pose6DoF::IDENTITY, &k).unwrap();
        assert!(img.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parallax_matches_projection() {
        let k = Intrinsics::centered(64, 64, 32.0);
        let l = [12.0, 2.0, 1.0];
        let w = World::single(l, 1.0);
        for pose in [Pose6DoF::new([0.0, 1.0, 0.0], [0.0; 3]), Pose6DoF::new([3.0, -1.0, 0.5], [0.1, 0.0, 0.0])] {
            let img = render_camera(&w, &pose, &k).unwrap();
            let (r, c) = brightest(&img);
            let (u, v) = k.project(pose.inverse_transform_point(l)).unwrap();
            assert!((r as f64 - u).abs() <= 1.0 && (c as f64 - v).abs() <= 1.0);
        }
    }

    #[test]
    fn renders_agree_on_the_nearest_landmark() {
        let w = World::single([6.0, 1.0, 0.0], 1.0);
        let pose = Pose6DoF::new([0.0; 3], [0.0; 3]);
        let spec = radar_spec();
        let a = hottest(&render_radar(&w, &pose, &spec, &mut rng_from_seed(0)).unwrap()).0;
        let bearing = a as f64 * 2.0 * PI / spec.azimuths as f64;
        let cloud = render_pointcloud(&w, &pose, 50.0, 0.0, &mut rng_from_seed(0)).unwrap();
        let p = cloud.points()[0];
        assert!(crate::pose::angle_diff(bearing, p[1].atan2(p[0])).abs() <= 2.0 * PI / spec.azimuths as f64);
        let k = Intrinsics::centered(64, 64, 32.0);
        let (_, col) = brightest(&render_camera(&w, &pose, &k).unwrap());
        let cam_bearing = ((k.center.1 - col as f64) / k.focal).atan();
        assert!((cam_bearing - p[1].atan2(p[0])).abs() < 2.0 / k.focal);
    }

    #[test]
    fn rate_arithmetic() {
        let cfg = SynthConfig::default();
        assert_eq!(cfg.timestamps(SensorId::R).len(), 40);
        assert_eq!(cfg.timestamps(SensorId::C2).len(), 160);
        assert_eq!(cfg.timestamps(SensorId::L1).len(), 200);
        let mut bad = cfg.clone();
        bad.radar_hz = 0.0;
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn trajectory_is_smooth_and_bounded() {
        let tr = SynthConfig::default().trajectory;
        let dt = 1_000_000;
        for k in 0..1000 {
            let (a, b) = (tr.pose_at(k * dt * 50), tr.pose_at(k * dt * 50 + dt));
            let d = (0..3).map(|i| (a.translation[i] - b.translation[i]).powi(2)).sum::<f64>().sqrt();
            assert!(d / 1e-3 <= tr.max_speed() + 1e-6);
        }
    }

    #[test]
    fn emission_is_deterministic() {
        let cfg = SynthConfig {
            duration_s: 1.0,
            landmarks: 100,
            ..SynthConfig::default()
        };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ra = emit_dataset(a.path(), &cfg).unwrap();
        emit_dataset(b.path(), &cfg).unwrap();
        assert_eq!(ra.frames[&SensorId::R], 4);
        for s in SensorId::ALL {
            for t in cfg.timestamps(s) {
                let f = frame_file_name(s, t);
                assert_eq!(std::fs::read(a.path().join(&f)).unwrap(), std::fs::read(b.path().join(&f)).unwrap());
            }
        }
        assert_eq!(
            std::fs::read(a.path().join(GT_FILE)).unwrap(),
            std::fs::read(b.path().join(GT_FILE)).unwrap()
        );
        let gt = crate::sync::read_gt_csv(&a.path().join(GT_FILE)).unwrap();
        for (t, p) in gt.timestamps().iter().zip(gt.poses()) {
            assert_eq!(*p, cfg.trajectory.pose_at(*t));
        }
    }

    #[test]
    fn emitted_dataset_aligns_cleanly() {
        let cfg = SynthConfig {
            duration_s: 2.0,
            landmarks: 150,
            seed: 4,
            ..SynthConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let report = emit_dataset(dir.path(), &cfg).unwrap();
        let streams: Vec<_> = SensorId::ALL
            .iter()
            .map(|&s| crate::sync::scan_stream(dir.path(), s).unwrap())
            .collect();
        let gt = crate::sync::read_gt_csv(&dir.path().join(GT_FILE)).unwrap();
        let aligned = crate::sync::align(&streams, &gt, 200_000_000).unwrap();
        assert_eq!(aligned.samples.len() + aligned.dropped_radar, report.frames[&SensorId::R]);
        assert_eq!(aligned.dropped_radar, 0);
        for s in &aligned.samples {
            assert_eq!(s.frames.len(), 6);
            for f in s.frames.values() {
                assert!(dir.path().join(&f.path).is_file());
            }
        }
    }
}
