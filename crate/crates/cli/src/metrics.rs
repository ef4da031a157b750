//! Pose error statistics over an evaluation split.

use std::fmt::Write as _;

use polyloc::pose::{angle_diff, Pose6DoF};
use polyloc::{Error, Result};

/// Errors of one sensor subset. Angles are in degrees, computed from wrapped differences.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub label: String,
    pub samples: usize,
    /// Mean Euclidean translation error in meters.
    pub mean_translation_m: f64,
    /// Mean over samples and axes of the absolute wrapped Euler difference.
    pub mean_rotation_deg: f64,
    /// Mean geodesic angle between predicted and true orientation.
    pub mean_geodesic_deg: f64,
    /// Per-axis `x, y, z` absolute error in meters.
    pub mae_translation_m: [f64; 3],
    /// Per-axis `yaw, roll, pitch` absolute error.
    pub mae_rotation_deg: [f64; 3],
    pub rmse_translation_cm: [f64; 3],
    pub rmse_rotation_deg: [f64; 3],
}

impl MetricsReport {
    /// Statistics over `(truth, prediction)` pairs.
    pub fn compute(label: &str, pairs: &[(Pose6DoF, Pose6DoF)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyInput("no samples to evaluate".into()));
        }
        let n = pairs.len() as f64;
        let mut r = MetricsReport {
            label: label.to_string(),
            samples: pairs.len(),
            mean_translation_m: 0.0,
            mean_rotation_deg: 0.0,
            mean_geodesic_deg: 0.0,
            mae_translation_m: [0.0; 3],
            mae_rotation_deg: [0.0; 3],
            rmse_translation_cm: [0.0; 3],
            rmse_rotation_deg: [0.0; 3],
        };
        for (gt, p) in pairs {
            let dt: [f64; 3] = std::array::from_fn(|k| p.translation[k] - gt.translation[k]);
            let dr: [f64; 3] = std::array::from_fn(|k| angle_diff(gt.rotation[k], p.rotation[k]).to_degrees());
            r.mean_translation_m += dt.iter().map(|v| v * v).sum::<f64>().sqrt() / n;
            r.mean_rotation_deg += dr.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n);
            r.mean_geodesic_deg += gt.geodesic_angle(p).to_degrees() / n;
            for k in 0..3 {
                r.mae_translation_m[k] += dt[k].abs() / n;
                r.mae_rotation_deg[k] += dr[k].abs() / n;
                r.rmse_translation_cm[k] += (100.0 * dt[k]).powi(2) / n;
                r.rmse_rotation_deg[k] += dr[k].powi(2) / n;
            }
        }
        for k in 0..3 {
            r.rmse_translation_cm[k] = r.rmse_translation_cm[k].sqrt();
            r.rmse_rotation_deg[k] = r.rmse_rotation_deg[k].sqrt();
        }
        Ok(r)
    }

    pub const CSV_HEADER: &'static str = "sensors,samples,mean_translation_m,mean_rotation_deg,mean_geodesic_deg,\
mae_x_m,mae_y_m,mae_z_m,mae_yaw_deg,mae_roll_deg,mae_pitch_deg,\
rmse_x_cm,rmse_y_cm,rmse_z_cm,rmse_yaw_deg,rmse_roll_deg,rmse_pitch_deg";

    pub fn csv_row(&self) -> String {
        let mut vals = vec![self.mean_translation_m, self.mean_rotation_deg, self.mean_geodesic_deg];
        vals.extend(self.mae_translation_m);
        vals.extend(self.mae_rotation_deg);
        vals.extend(self.rmse_translation_cm);
        vals.extend(self.rmse_rotation_deg);
        let nums: Vec<String> = vals.iter().map(|v| format!("{v:?}")).collect();
        format!("\"{}\",{},{}", self.label, self.samples, nums.join(","))
    }
}

/// Reports as an aligned plain-text table, one row per subset.
pub fn text_table(reports: &[MetricsReport]) -> String {
    let width = reports.iter().map(|r| r.label.len()).max().unwrap_or(0).max(7);
    let mut s = String::new();
    writeln!(
        s,
        "{:<width$}  {:>7}  {:>9}  {:>9}  {:>9}  {:>26}  {:>26}",
        "sensors", "samples", "trans [m]", "rot [deg]", "geo [deg]", "RMSE x/y/z [cm]", "RMSE yaw/roll/pitch [deg]"
    )
    .unwrap();
    for r in reports {
        let t = r.rmse_translation_cm.map(|v| format!("{v:.2}")).join("/");
        let a = r.rmse_rotation_deg.map(|v| format!("{v:.3}")).join("/");
        writeln!(
            s,
            "{:<width$}  {:>7}  {:>9.3}  {:>9.3}  {:>9.3}  {:>26}  {:>26}",
            r.label, r.samples, r.mean_translation_m, r.mean_rotation_deg, r.mean_geodesic_deg, t, a
        )
        .unwrap();
    }
    s
}
