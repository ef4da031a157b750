//! Run configuration, read from a flat TOML table.
//!
//! Every key is optional and falls back to the desk-scale default; unknown
//! keys are errors.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use polyloc::cylindrical::CylGridConfig;
use polyloc::fusion::FusionMode;
use polyloc::model::ModelConfig;
use polyloc::numerics::adam::AdamConfig;
use polyloc::objective::SignMode;
use polyloc::pose::SensorId;
use polyloc::slotfilter::SoftmaxAxis;
use polyloc::synth::{Intrinsics, SynthConfig};
use polyloc::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    /// The first `train_samples` samples.
    Train,
    /// Samples after the training prefix.
    Rest,
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    /// Default sensor subset for `eval`, written like `"L1,C1,R"`.
    #[serde(with = "sensor_list")]
    pub sensors: Vec<SensorId>,
    pub seed: u64,

    pub synth_duration_s: f64,
    pub synth_landmarks: usize,
    pub lidar_hz: f64,
    pub camera_hz: f64,
    pub radar_hz: f64,
    pub gt_hz: f64,
    /// Seconds of ground truth removed by `synth-gen`, with odometry left intact.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gt_gap: Option<(f64, f64)>,
    pub max_gap_ms: f64,

    pub grid_bins: [usize; 3],
    pub grid_radius: (f64, f64),
    pub grid_height: (f64, f64),
    pub point_dim: usize,
    pub backbone_divisor: usize,
    pub azimuth_wrap: bool,
    pub image_size: (usize, usize),
    pub image_channels: usize,
    pub feature_dim: usize,
    pub slots: usize,
    pub slot_iters: usize,
    pub softmax_axis: SoftmaxAxis,
    pub radar_range_res: f64,
    pub rotation_layer_norm: bool,
    pub rotation_scaling: bool,
    pub translation_scale: f64,
    pub fusion: FusionMode,

    pub sign_mode: SignMode,
    /// Initial translation and rotation balance factors `(α₀, β₀)`.
    pub balance_init: (f64, f64),
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many optimizer steps; 0 means no cap.
    pub max_steps: u64,
    /// Use only the first N manifest samples for training; 0 means all.
    pub train_samples: usize,
    pub eval_split: EvalSplit,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::desk();
        let s = SynthConfig::default();
        let a = AdamConfig::default();
        RunConfig {
            dataset: PathBuf::from("data"),
            sensors: SensorId::ALL.to_vec(),
            seed: 0,
            synth_duration_s: s.duration_s,
            synth_landmarks: s.landmarks,
            lidar_hz: s.lidar_hz,
            camera_hz: s.camera_hz,
            radar_hz: s.radar_hz,
            gt_hz: s.gt_hz,
            gt_gap: None,
            max_gap_ms: 250.0,
            grid_bins: m.grid.bins,
            grid_radius: (m.grid.r_min, m.grid.r_max),
            grid_height: (m.grid.z_min, m.grid.z_max),
            point_dim: m.point_dim,
            backbone_divisor: m.backbone_divisor,
            azimuth_wrap: m.azimuth_wrap,
            image_size: m.image,
            image_channels: m.image_channels,
            feature_dim: m.feature_dim,
            slots: m.slots,
            slot_iters: m.slot_iters,
            softmax_axis: m.softmax_axis,
            radar_range_res: m.radar_range_res,
            rotation_layer_norm: m.rotation_layer_norm,
            rotation_scaling: m.rotation_scaling,
            translation_scale: m.translation_scale,
            fusion: m.fusion,
            sign_mode: SignMode::Stable,
            balance_init: (0.0, 0.0),
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            weight_decay: a.weight_decay,
            batch_size: 6,
            epochs: 40,
            max_steps: 0,
            train_samples: 0,
            eval_split: EvalSplit::All,
        }
    }
}

mod sensor_list {
    use polyloc::pose::{parse_sensor_list, sensor_list_label, SensorId};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[SensorId], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&sensor_list_label(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<SensorId>, D::Error> {
        let text = String::deserialize(d)?;
        parse_sensor_list(&text).map_err(serde::de::Error::custom)
    }
}

impl RunConfig {
    /// Parses TOML text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text)
    }

    /// Every key, as TOML that [`RunConfig::parse`] reads back unchanged.
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("configuration fields are plain TOML values")
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            grid: CylGridConfig {
                r_min: self.grid_radius.0,
                r_max: self.grid_radius.1,
                z_min: self.grid_height.0,
                z_max: self.grid_height.1,
                bins: self.grid_bins,
            },
            point_dim: self.point_dim,
            backbone_divisor: self.backbone_divisor,
            azimuth_wrap: self.azimuth_wrap,
            image: self.image_size,
            image_channels: self.image_channels,
            feature_dim: self.feature_dim,
            slots: self.slots,
            slot_iters: self.slot_iters,
            softmax_axis: self.softmax_axis,
            radar_range_res: self.radar_range_res,
            rotation_layer_norm: self.rotation_layer_norm,
            rotation_scaling: self.rotation_scaling,
            translation_scale: self.translation_scale,
            fusion: self.fusion,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        let base = SynthConfig::default();
        let (rows, cols) = self.image_size;
        SynthConfig {
            seed: self.seed,
            duration_s: self.synth_duration_s,
            lidar_hz: self.lidar_hz,
            camera_hz: self.camera_hz,
            radar_hz: self.radar_hz,
            gt_hz: self.gt_hz,
            landmarks: self.synth_landmarks,
            radar: polyloc::synth::RadarSpec {
                range_res: self.radar_range_res,
                ..base.radar
            },
            camera: Intrinsics::centered(rows, cols, cols as f64 / 2.0),
            gt_gap: self.gt_gap,
            ..base
        }
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn max_gap_ns(&self) -> i64 {
        (self.max_gap_ms * 1e6).round() as i64
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        self.synth_config().validate()?;
        if self.synth_landmarks == 0 {
            return Err(Error::Config("synth_landmarks must be positive".into()));
        }
        if !(self.max_gap_ms > 0.0) {
            return Err(Error::Config("max_gap_ms must be positive".into()));
        }
        if let Some((a, b)) = self.gt_gap {
            if !(a < b) {
                return Err(Error::Config(format!("gt_gap {a},{b} is empty")));
            }
        }
        if !(self.lr >= 0.0 && self.eps > 0.0 && (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2))
        {
            return Err(Error::Config("optimizer needs lr ≥ 0, eps > 0 and betas in [0, 1)".into()));
        }
        if !(self.balance_init.0.is_finite() && self.balance_init.1.is_finite()) {
            return Err(Error::Config("balance_init must be finite".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config(format!("seed {} exceeds {}", self.seed, i64::MAX)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}
