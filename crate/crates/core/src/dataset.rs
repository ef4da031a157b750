//! Loading aligned samples from a dataset root into network inputs.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::cylindrical::read_unlp;
use crate::error::{Error, Result};
use crate::imaging::read_unri;
use crate::model::{ModelConfig, SensorFrame, SensorSample};
use crate::pose::{Modality, SensorId};
use crate::sync::AlignedSample;

/// Reads and converts one frame file.
pub fn load_frame(path: &Path, sensor: SensorId, config: &ModelConfig) -> Result<SensorFrame> {
    let bad = |detail: String| Error::Format {
        path: path.to_path_buf(),
        detail,
    };
    match sensor.modality() {
        Modality::PointCloud => Ok(SensorFrame::Cloud(read_unlp(path)?)),
        Modality::Image => {
            let img = read_unri(path)?;
            if img.channels != 3 || (img.rows, img.cols) != config.image {
                return Err(bad(format!(
                    "camera frame is {}×{}×{}, expected 3×{}×{}",
                    img.channels, img.rows, img.cols, config.image.0, config.image.1
                )));
            }
            Ok(SensorFrame::Image(img))
        }
        Modality::Radar => {
            let polar = read_unri(path)?;
            if polar.channels != 1 {
                return Err(bad(format!("radar scan has {} channels", polar.channels)));
            }
            Ok(SensorFrame::Radar(config.radar_raster(&polar)?))
        }
    }
}

/// Loads the frames of `sensors` for one aligned sample.
pub fn load_sample(root: &Path, sample: &AlignedSample, sensors: &[SensorId], config: &ModelConfig) -> Result<SensorSample> {
    let mut frames = BTreeMap::new();
    for &s in sensors {
        let f = sample.frames.get(&s).ok_or_else(|| Error::MissingSensor {
            sensor: s.name().into(),
            detail: format!("manifest sample at {} ns has no frame", sample.timestamp_ns),
        })?;
        frames.insert(s, load_frame(&root.join(&f.path), s, config)?);
    }
    Ok(SensorSample {
        timestamp_ns: sample.timestamp_ns,
        frames,
        pose: sample.pose,
    })
}

/// Loads many samples in parallel, keeping manifest order.
pub fn load_samples(
    root: &Path,
    samples: &[AlignedSample],
    sensors: &[SensorId],
    config: &ModelConfig,
) -> Result<Vec<SensorSample>> {
    samples
        .par_iter()
        .map(|s| load_sample(root, s, sensors, config))
        .collect()
}
