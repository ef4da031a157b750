//! 6DoF poses, sensor identities and angle helpers.
//!
//! Rotations are Euler angles `(yaw, roll, pitch)` in the intrinsic Z-X-Y
//! order, so the rotation matrix is `Rz(yaw) · Rx(roll) · Ry(pitch)`. A pose
//! maps sensor-frame points into the world frame: `p_w = R p_s + t`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Signed shortest-arc difference `b - a`, wrapped into `(-π, π]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(b - a)
}

/// Interpolates from `a` toward `b` along the shorter arc.
pub fn lerp_angle(a: f64, b: f64, s: f64) -> f64 {
    wrap_angle(a + s * angle_diff(a, b))
}

/// `atan2` of the averaged sines and cosines.
pub fn circular_mean(angles: &[f64]) -> f64 {
    let (s, c) = angles
        .iter()
        .fold((0.0, 0.0), |(s, c), a| (s + a.sin(), c + a.cos()));
    wrap_angle(s.atan2(c))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose6DoF {
    /// Meters.
    pub translation: [f64; 3],
    /// Radians, `(yaw, roll, pitch)`.
    pub rotation: [f64; 3],
}

impl Pose6DoF {
    pub const IDENTITY: Pose6DoF = Pose6DoF {
        translation: [0.0; 3],
        rotation: [0.0; 3],
    };

    pub fn new(translation: [f64; 3], rotation: [f64; 3]) -> Self {
        Pose6DoF {
            translation,
            rotation,
        }
    }

    pub fn yaw(&self) -> f64 {
        self.rotation[0]
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().chain(&self.rotation).all(|v| v.is_finite())
    }

    /// Same pose with every angle wrapped into `(-π, π]`.
    pub fn wrapped(&self) -> Self {
        Pose6DoF {
            translation: self.translation,
            rotation: self.rotation.map(wrap_angle),
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        euler_to_matrix(self.rotation)
    }

    pub fn translation_vector(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    fn from_parts(r: &Matrix3<f64>, t: &Vector3<f64>) -> Self {
        Pose6DoF {
            translation: [t.x, t.y, t.z],
            rotation: matrix_to_euler(r),
        }
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose6DoF) -> Pose6DoF {
        let r = self.rotation_matrix();
        let t = r * other.translation_vector() + self.translation_vector();
        Pose6DoF::from_parts(&(r * other.rotation_matrix()), &t)
    }

    pub fn inverse(&self) -> Pose6DoF {
        let rt = self.rotation_matrix().transpose();
        Pose6DoF::from_parts(&rt, &(-(rt * self.translation_vector())))
    }

    /// Increment `Δ` with `self ∘ Δ = to`, expressed in this pose's frame.
    pub fn relative_to(&self, to: &Pose6DoF) -> Pose6DoF {
        self.inverse().compose(to)
    }

    /// Maps a sensor-frame point into the world frame.
    pub fn transform_point(&self, p: [f64; 3]) -> [f64; 3] {
        let v = self.rotation_matrix() * Vector3::from(p) + self.translation_vector();
        [v.x, v.y, v.z]
    }

    /// Maps a world-frame point into the sensor frame.
    pub fn inverse_transform_point(&self, p: [f64; 3]) -> [f64; 3] {
        let v = self.rotation_matrix().transpose() * (Vector3::from(p) - self.translation_vector());
        [v.x, v.y, v.z]
    }

    /// Relative rotation angle between two orientations, in radians.
    pub fn geodesic_angle(&self, other: &Pose6DoF) -> f64 {
        let r = self.rotation_matrix().transpose() * other.rotation_matrix();
        ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

impl Default for Pose6DoF {
    fn default() -> Self {
        Pose6DoF::IDENTITY
    }
}

/// `Rz(yaw) · Rx(roll) · Ry(pitch)`.
pub fn euler_to_matrix([yaw, roll, pitch]: [f64; 3]) -> Matrix3<f64> {
    let (sy, cy) = yaw.sin_cos();
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    Matrix3::new(
        cy * cp - sy * sr * sp,
        -sy * cr,
        cy * sp + sy * sr * cp,
        sy * cp + cy * sr * sp,
        cy * cr,
        sy * sp - cy * sr * cp,
        -cr * sp,
        sr,
        cr * cp,
    )
}

/// Inverse of [`euler_to_matrix`] with roll in `[-π/2, π/2]`.
pub fn matrix_to_euler(r: &Matrix3<f64>) -> [f64; 3] {
    let roll = r[(2, 1)].clamp(-1.0, 1.0).asin();
    let yaw = (-r[(0, 1)]).atan2(r[(1, 1)]);
    let pitch = (-r[(2, 0)]).atan2(r[(2, 2)]);
    [wrap_angle(yaw), wrap_angle(roll), wrap_angle(pitch)]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    PointCloud,
    Image,
    Radar,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::PointCloud, Modality::Image, Modality::Radar];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::PointCloud => "pointcloud",
            Modality::Image => "image",
            Modality::Radar => "radar",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SensorId {
    L1,
    L2,
    C1,
    C2,
    C3,
    R,
}

impl SensorId {
    pub const ALL: [SensorId; 6] = [
        SensorId::L1,
        SensorId::L2,
        SensorId::C1,
        SensorId::C2,
        SensorId::C3,
        SensorId::R,
    ];

    pub fn modality(self) -> Modality {
        match self {
            SensorId::L1 | SensorId::L2 => Modality::PointCloud,
            SensorId::C1 | SensorId::C2 | SensorId::C3 => Modality::Image,
            SensorId::R => Modality::Radar,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SensorId::L1 => "L1",
            SensorId::L2 => "L2",
            SensorId::C1 => "C1",
            SensorId::C2 => "C2",
            SensorId::C3 => "C3",
            SensorId::R => "R",
        }
    }
}

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SensorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SensorId::ALL
            .into_iter()
            .find(|id| id.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown sensor `{s}`")))
    }
}

/// Parses a comma-separated sensor list like `L1,C1,R`, sorted and deduplicated.
pub fn parse_sensor_list(s: &str) -> Result<Vec<SensorId>> {
    let mut out = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<SensorId>>>()?;
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(Error::Config("sensor list is empty".into()));
    }
    Ok(out)
}

/// Formats sensors as `L1,C1,R`.
pub fn sensor_list_label(s: &[SensorId]) -> String {
    s.iter().map(|id| id.name()).collect::<Vec<_>>().join(",")
}
