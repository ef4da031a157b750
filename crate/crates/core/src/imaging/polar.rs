//! Polar radar scans resampled onto a Cartesian pixel grid.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::imaging::ImageFrame;

/// `A×R` power returns, azimuth-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RadarPolarScan {
    pub azimuths: usize,
    pub range_bins: usize,
    pub power: Vec<f64>,
    /// Bearing of azimuth row 0, radians counterclockwise from +x.
    pub azimuth_0: f64,
    /// Meters per range bin; bin `k` sits at range `k · range_res`.
    pub range_res: f64,
}

impl RadarPolarScan {
    pub fn new(azimuths: usize, range_bins: usize, power: Vec<f64>, azimuth_0: f64, range_res: f64) -> Result<Self> {
        if azimuths < 4 || range_bins < 2 {
            return Err(Error::dim(format!(
                "radar scan needs at least 4 azimuths and 2 range bins, got {azimuths}×{range_bins}"
            )));
        }
        if power.len() != azimuths * range_bins {
            return Err(Error::dim(format!(
                "{} power values for a {azimuths}×{range_bins} scan",
                power.len()
            )));
        }
        if !(range_res > 0.0) || power.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("radar scan has non-finite values or resolution".into()));
        }
        Ok(RadarPolarScan {
            azimuths,
            range_bins,
            power,
            azimuth_0,
            range_res,
        })
    }

    pub fn zeros(azimuths: usize, range_bins: usize, range_res: f64) -> Result<Self> {
        Self::new(azimuths, range_bins, vec![0.0; azimuths * range_bins], 0.0, range_res)
    }

    pub fn at(&self, a: usize, k: usize) -> f64 {
        self.power[a * self.range_bins + k]
    }

    pub fn azimuth_width(&self) -> f64 {
        2.0 * PI / self.azimuths as f64
    }

    pub fn max_range(&self) -> f64 {
        (self.range_bins - 1) as f64 * self.range_res
    }

    /// Scan rotated by `k` whole azimuth bins toward increasing bearing.
    pub fn rotated_bins(&self, k: usize) -> Self {
        let mut out = self.clone();
        for a in 0..self.azimuths {
            let dst = (a + k) % self.azimuths;
            let r = self.range_bins;
            out.power[dst * r..(dst + 1) * r].copy_from_slice(&self.power[a * r..(a + 1) * r]);
        }
        out
    }
}

/// Output raster geometry. The image center is pixel `(rows/2, cols/2)`,
/// `+u` points right and `+v` points up.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CartesianGrid {
    pub rows: usize,
    pub cols: usize,
    pub meters_per_pixel: f64,
}

impl CartesianGrid {
    /// Square grid whose half-width equals the scan's maximum range.
    pub fn covering(scan: &RadarPolarScan, size: usize) -> Self {
        CartesianGrid {
            rows: size,
            cols: size,
            meters_per_pixel: scan.max_range() / (size as f64 / 2.0),
        }
    }

    /// Metric `(u, v)` of a pixel center.
    pub fn pixel_to_metric(&self, i: usize, j: usize) -> (f64, f64) {
        let u = (j as f64 - (self.cols / 2) as f64) * self.meters_per_pixel;
        let v = ((self.rows / 2) as f64 - i as f64) * self.meters_per_pixel;
        (u, v)
    }
}

/// Bilinear polar lookup per pixel; azimuth wraps and pixels beyond the last
/// range bin are 0.
pub fn polar_to_cartesian(scan: &RadarPolarScan, grid: &CartesianGrid) -> Result<ImageFrame> {
    if grid.rows == 0 || grid.cols == 0 || !(grid.meters_per_pixel > 0.0) {
        return Err(Error::dim(format!("invalid Cartesian grid {grid:?}")));
    }
    let mut out = ImageFrame::zeros(1, grid.rows, grid.cols);
    let a_n = scan.azimuths;
    let r_n = scan.range_bins;
    for i in 0..grid.rows {
        for j in 0..grid.cols {
            let (u, v) = grid.pixel_to_metric(i, j);
            let fr = u.hypot(v) / scan.range_res;
            if fr > (r_n - 1) as f64 {
                continue;
            }
            let k0 = (fr.floor() as usize).min(r_n - 2);
            let t = fr - k0 as f64;
            let fa = ((v.atan2(u) - scan.azimuth_0) / scan.azimuth_width()).rem_euclid(a_n as f64);
            let a0 = (fa.floor() as usize) % a_n;
            let a1 = (a0 + 1) % a_n;
            let s = fa - fa.floor();
            let near = (1.0 - t) * scan.at(a0, k0) + t * scan.at(a0, k0 + 1);
            let far = (1.0 - t) * scan.at(a1, k0) + t * scan.at(a1, k0 + 1);
            out.data[i * grid.cols + j] = (1.0 - s) * near + s * far;
        }
    }
    Ok(out)
}
