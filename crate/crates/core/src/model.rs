//! The full multi-sensor network: three streams, modality encoding and the
//! shared regression head.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::cylindrical::{CylGridConfig, PointCloud, PointFeatureNet};
use crate::error::{Error, Result};
use crate::fusion::{fuse_poses, mean_features, FusionMode, HeadConfig, HeadOutput, ModalityEncoding, RegressionHead};
use crate::imaging::{polar_to_cartesian, CartesianGrid, ImageFrame, ImageStream, RadarPolarScan, RadarStream};
use crate::numerics::init::{mix_seed, rng_from_seed};
use crate::numerics::{Graph, ParamStore, Var};
use crate::pose::{Modality, Pose6DoF, SensorId};
use crate::slotfilter::{SlotConfig, SlotFilter, SoftmaxAxis};
use crate::sparse3d::{pool_concat, Backbone, SparseTensor3D, BACKBONE_CHANNELS};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub grid: CylGridConfig,
    /// Width of the per-point features entering the sparse backbone.
    pub point_dim: usize,
    /// Sparse backbone channels are `BACKBONE_CHANNELS` divided by this.
    pub backbone_divisor: usize,
    pub azimuth_wrap: bool,
    /// `(rows, cols)` of camera images and Cartesian radar rasters.
    pub image: (usize, usize),
    /// Output channels of the residual image stack.
    pub image_channels: usize,
    /// Token width, slot width and final feature width.
    pub feature_dim: usize,
    pub slots: usize,
    pub slot_iters: usize,
    pub softmax_axis: SoftmaxAxis,
    /// Meters per polar range bin of radar scans.
    pub radar_range_res: f64,
    pub rotation_layer_norm: bool,
    pub rotation_scaling: bool,
    pub translation_scale: f64,
    pub fusion: FusionMode,
}

impl ModelConfig {
    /// Dimensions small enough to train on a laptop.
    pub fn desk() -> Self {
        ModelConfig {
            grid: CylGridConfig::default(),
            point_dim: 16,
            backbone_divisor: 8,
            azimuth_wrap: true,
            image: (64, 64),
            image_channels: 32,
            feature_dim: 128,
            slots: 8,
            slot_iters: 3,
            softmax_axis: SoftmaxAxis::Slots,
            radar_range_res: 0.5,
            rotation_layer_norm: true,
            rotation_scaling: true,
            translation_scale: 40.0,
            fusion: FusionMode::Pose,
        }
    }

    /// Full-size dimensions: 512×512 images and 1024-wide features.
    pub fn full_scale() -> Self {
        ModelConfig {
            point_dim: 32,
            backbone_divisor: 1,
            image: (512, 512),
            image_channels: 512,
            feature_dim: 1024,
            slots: 20,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let pooled = 2 * Backbone::channels(self.backbone_divisor)?[4];
        if pooled != self.feature_dim {
            return Err(Error::Config(format!(
                "pooled LiDAR width {pooled} (divisor {}) differs from feature width {}",
                self.backbone_divisor, self.feature_dim
            )));
        }
        if self.image.0 % 32 != 0 || self.image.1 % 32 != 0 || self.image.0 == 0 || self.image.1 == 0 {
            return Err(Error::Config(format!("image {}×{} must be a multiple of 32", self.image.0, self.image.1)));
        }
        if self.point_dim == 0 || !(self.radar_range_res > 0.0) {
            return Err(Error::Config("point feature width and radar resolution must be positive".into()));
        }
        self.slot_config().validate()?;
        self.head_config().validate()
    }

    pub fn slot_config(&self) -> SlotConfig {
        SlotConfig {
            slots: self.slots,
            dim: self.feature_dim,
            iters: self.slot_iters,
            softmax_axis: self.softmax_axis,
        }
    }

    pub fn head_config(&self) -> HeadConfig {
        HeadConfig {
            dim: self.feature_dim,
            rotation_layer_norm: self.rotation_layer_norm,
            rotation_scaling: self.rotation_scaling,
            translation_scale: self.translation_scale,
        }
    }

    /// Converts a polar radar scan (azimuth rows, range columns) to the Cartesian model input.
    pub fn radar_raster(&self, polar: &ImageFrame) -> Result<ImageFrame> {
        if polar.channels != 1 {
            return Err(Error::dim(format!("radar scan has {} channels", polar.channels)));
        }
        let scan = RadarPolarScan::new(polar.rows, polar.cols, polar.data.clone(), 0.0, self.radar_range_res)?;
        let half = self.image.0.min(self.image.1) as f64 / 2.0;
        let grid = CartesianGrid {
            rows: self.image.0,
            cols: self.image.1,
            meters_per_pixel: scan.max_range() / half,
        };
        polar_to_cartesian(&scan, &grid)
    }
}

/// Sensor data ready for the network.
#[derive(Clone, Debug, PartialEq)]
pub enum SensorFrame {
    Cloud(PointCloud),
    /// `3×H×W` camera image.
    Image(ImageFrame),
    /// `1×H×W` Cartesian radar raster.
    Radar(ImageFrame),
}

impl SensorFrame {
    pub fn modality(&self) -> Modality {
        match self {
            SensorFrame::Cloud(_) => Modality::PointCloud,
            SensorFrame::Image(_) => Modality::Image,
            SensorFrame::Radar(_) => Modality::Radar,
        }
    }
}

/// Frames of every sensor sharing one ground-truth pose.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorSample {
    pub timestamp_ns: i64,
    pub frames: BTreeMap<SensorId, SensorFrame>,
    pub pose: Pose6DoF,
}

impl SensorSample {
    pub fn frame(&self, sensor: SensorId) -> Result<&SensorFrame> {
        self.frames.get(&sensor).ok_or_else(|| Error::MissingSensor {
            sensor: sensor.name().into(),
            detail: format!("sample at {} ns has no frame", self.timestamp_ns),
        })
    }
}

/// Point features, sparse backbone and max/mean pooling.
#[derive(Clone, Debug)]
pub struct PointStream {
    pub net: PointFeatureNet,
    pub backbone: Backbone,
}

impl PointStream {
    pub fn forward(&self, g: &mut Graph<'_>, cloud: &PointCloud) -> Result<Var> {
        let vox = self.net.forward(g, cloud)?;
        let x = SparseTensor3D::new(g, self.net.grid.bins, vox.coords, vox.features)?;
        let y = self.backbone.forward(g, &x)?;
        pool_concat(g, &y)
    }

    pub fn output_dim(&self) -> usize {
        2 * self.backbone.out_channels()
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub point: PointStream,
    pub image: ImageStream,
    pub image_filter: SlotFilter,
    pub radar: RadarStream,
    pub radar_filter: SlotFilter,
    pub encoding: ModalityEncoding,
    pub head: RegressionHead,
}

/// Per-sensor and fused predictions for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub per_sensor: BTreeMap<SensorId, Pose6DoF>,
    pub fused: Pose6DoF,
}

impl Model {
    /// Registers every parameter in `store`, initialized from `seed`.
    pub fn new(store: &mut ParamStore, config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let rng = &mut rng_from_seed(seed);
        let d = config.feature_dim;
        let net = PointFeatureNet::new(store, "point.mlp", config.grid, config.point_dim, rng)?;
        let backbone = Backbone::new(
            store,
            "point.backbone",
            config.point_dim,
            config.backbone_divisor,
            config.azimuth_wrap,
            rng,
        )?;
        let image = ImageStream::new(store, "image", config.image_channels, d, config.image, rng)?;
        let image_filter = SlotFilter::new(store, "image.slots", config.slot_config(), rng)?;
        let radar = RadarStream::new(store, "radar", config.image_channels, d, config.image, rng)?;
        let radar_filter = SlotFilter::new(store, "radar.slots", config.slot_config(), rng)?;
        let encoding = ModalityEncoding::new(store, "encoding", d, rng)?;
        let head = RegressionHead::new(store, "head", config.head_config(), rng)?;
        Ok(Model {
            config,
            point: PointStream { net, backbone },
            image,
            image_filter,
            radar,
            radar_filter,
            encoding,
            head,
        })
    }

    /// Stream output before modality encoding, length `feature_dim`.
    pub fn feature(&self, g: &mut Graph<'_>, sensor: SensorId, frame: &SensorFrame, noise_seed: u64) -> Result<Var> {
        if frame.modality() != sensor.modality() {
            return Err(Error::Config(format!(
                "sensor {sensor} expects {} data, got {}",
                sensor.modality().name(),
                frame.modality().name()
            )));
        }
        match frame {
            SensorFrame::Cloud(cloud) => self.point.forward(g, cloud),
            SensorFrame::Image(img) => {
                let x = g.constant(img.to_tensor());
                let tokens = self.image.forward(g, x)?;
                self.image_filter.filter(g, tokens, noise_seed)
            }
            SensorFrame::Radar(img) => {
                let x = g.constant(img.to_tensor());
                let tokens = self.radar.forward(g, x)?;
                self.radar_filter.filter(g, tokens, noise_seed)
            }
        }
    }

    /// Encoded feature of one sensor.
    pub fn encoded(&self, g: &mut Graph<'_>, sensor: SensorId, frame: &SensorFrame, noise_seed: u64) -> Result<Var> {
        let f = self.feature(g, sensor, frame, noise_seed)?;
        self.encoding.encode(g, f, sensor)
    }

    /// Head outputs for one sensor.
    pub fn sensor_output(
        &self,
        g: &mut Graph<'_>,
        sensor: SensorId,
        frame: &SensorFrame,
        noise_seed: u64,
    ) -> Result<HeadOutput> {
        let f = self.encoded(g, sensor, frame, noise_seed)?;
        self.head.forward(g, f)
    }

    /// Slot-noise seed used for a sensor at inference time.
    pub fn inference_seed(seed: u64, sensor: SensorId) -> u64 {
        mix_seed(&[seed, sensor.index() as u64])
    }

    /// Pose predicted from one sensor alone.
    pub fn predict_sensor(&self, store: &ParamStore, sensor: SensorId, frame: &SensorFrame, seed: u64) -> Result<Pose6DoF> {
        let mut g = Graph::with_params(store);
        let out = self.sensor_output(&mut g, sensor, frame, Self::inference_seed(seed, sensor))?;
        let pose = self.head.to_pose(&g, &out);
        if !pose.is_finite() {
            return Err(Error::Numeric(format!("non-finite pose from sensor {sensor}")));
        }
        Ok(pose)
    }

    /// Runs the requested sensors of `sample` and fuses their poses.
    pub fn predict(&self, store: &ParamStore, sample: &SensorSample, active: &[SensorId], seed: u64) -> Result<Prediction> {
        let mut active = active.to_vec();
        active.sort();
        active.dedup();
        if active.is_empty() {
            return Err(Error::Config("no active sensors".into()));
        }
        let frames = active
            .iter()
            .map(|&s| sample.frame(s).map(|f| (s, f)))
            .collect::<Result<Vec<_>>>()?;
        let per_sensor: BTreeMap<SensorId, Pose6DoF> = frames
            .par_iter()
            .map(|&(s, f)| self.predict_sensor(store, s, f, seed).map(|p| (s, p)))
            .collect::<Result<_>>()?;
        let fused = match self.config.fusion {
            FusionMode::Pose => fuse_poses(&per_sensor.values().copied().collect::<Vec<_>>())?,
            FusionMode::Feature => {
                let mut g = Graph::with_params(store);
                let feats = frames
                    .iter()
                    .map(|&(s, f)| self.encoded(&mut g, s, f, Self::inference_seed(seed, s)))
                    .collect::<Result<Vec<_>>>()?;
                let mean = mean_features(&mut g, &feats)?;
                let out = self.head.forward(&mut g, mean)?;
                self.head.to_pose(&g, &out)
            }
        };
        Ok(Prediction { per_sensor, fused })
    }
}

/// Pooled LiDAR width at divisor 1.
pub const POOLED_LIDAR_WIDTH: usize = 2 * BACKBONE_CHANNELS[4];
