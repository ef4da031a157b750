//! Shared ground truth for sensors running at different rates.
//!
//! Ground-truth poses are interpolated to every frame timestamp. Each radar
//! frame defines one sample; for every other sensor the frame whose
//! interpolated position is closest to the radar frame's position joins the
//! sample, and all frames of a sample share the radar frame's pose.

mod io;
mod kdtree;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{angle_diff, lerp_angle, wrap_angle, Pose6DoF, SensorId};

pub use io::{
    frame_file_name, read_gt_csv, read_manifest, read_odometry_csv, scan_stream, write_gt_csv, write_manifest,
    write_odometry_csv, GT_FILE, MANIFEST_FILE, ODOMETRY_FILE,
};
pub use kdtree::{nearest_linear, KdTree};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoseSource {
    Primary,
    OdometryFilled,
}

/// Timestamped poses with strictly increasing timestamps.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthStream {
    timestamps: Vec<i64>,
    poses: Vec<Pose6DoF>,
    sources: Vec<PoseSource>,
}

impl GroundTruthStream {
    pub fn new(timestamps: Vec<i64>, poses: Vec<Pose6DoF>) -> Result<Self> {
        let n = timestamps.len();
        Self::with_sources(timestamps, poses, vec![PoseSource::Primary; n])
    }

    pub fn with_sources(timestamps: Vec<i64>, poses: Vec<Pose6DoF>, sources: Vec<PoseSource>) -> Result<Self> {
        if timestamps.is_empty() {
            return Err(Error::EmptyInput("ground truth has no poses".into()));
        }
        if timestamps.len() != poses.len() || timestamps.len() != sources.len() {
            return Err(Error::dim("ground truth timestamps, poses and sources differ in length"));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("ground-truth timestamps must be strictly increasing".into()));
        }
        if poses.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("ground truth contains a non-finite pose".into()));
        }
        Ok(GroundTruthStream {
            timestamps,
            poses,
            sources,
        })
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn poses(&self) -> &[Pose6DoF] {
        &self.poses
    }

    pub fn sources(&self) -> &[PoseSource] {
        &self.sources
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn start(&self) -> i64 {
        self.timestamps[0]
    }

    pub fn end(&self) -> i64 {
        self.timestamps[self.timestamps.len() - 1]
    }

    pub fn contains(&self, t: i64) -> bool {
        (self.start()..=self.end()).contains(&t)
    }

    /// Pose at `t`: linear in translation, shorter-arc per Euler angle.
    pub fn interpolate(&self, t: i64) -> Result<Pose6DoF> {
        if !self.contains(t) {
            return Err(Error::OutOfRange {
                t,
                start: self.start(),
                end: self.end(),
            });
        }
        let i = self.timestamps.partition_point(|&k| k <= t) - 1;
        if self.timestamps[i] == t {
            return Ok(self.poses[i]);
        }
        let (t0, t1) = (self.timestamps[i], self.timestamps[i + 1]);
        let s = (t - t0) as f64 / (t1 - t0) as f64;
        Ok(interpolate_between(&self.poses[i], &self.poses[i + 1], s))
    }

    /// Index pairs `(i, i+1)` whose spacing exceeds `max_gap_ns`.
    pub fn gaps(&self, max_gap_ns: i64) -> Vec<usize> {
        (0..self.len().saturating_sub(1))
            .filter(|&i| self.timestamps[i + 1] - self.timestamps[i] > max_gap_ns)
            .collect()
    }
}

pub fn interpolate_between(a: &Pose6DoF, b: &Pose6DoF, s: f64) -> Pose6DoF {
    Pose6DoF::new(
        [0, 1, 2].map(|k| a.translation[k] + s * (b.translation[k] - a.translation[k])),
        [0, 1, 2].map(|k| lerp_angle(a.rotation[k], b.rotation[k], s)),
    )
}

/// Relative motion `from t0 to t1`, expressed in the frame at `t0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdometryStep {
    pub t0: i64,
    pub t1: i64,
    pub delta: Pose6DoF,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GapFillReport {
    pub filled: usize,
    /// Gaps between two anchors that odometry could not bridge, as `(start, end)`.
    pub unbridged: Vec<(i64, i64)>,
    /// Set when poses were dead-reckoned past the first or last anchor.
    pub boundary_warning: bool,
}

/// Finds steps chaining `from` to `to` exactly, following `t0 → t1`.
fn chain(odometry: &[OdometryStep], from: i64, to: i64) -> Option<Vec<OdometryStep>> {
    let by_start: BTreeMap<i64, &OdometryStep> = odometry.iter().map(|o| (o.t0, o)).collect();
    let mut out = Vec::new();
    let mut t = from;
    while t < to {
        let step = by_start.get(&t)?;
        if step.t1 > to || step.t1 <= t {
            return None;
        }
        out.push(**step);
        t = step.t1;
    }
    Some(out)
}

/// Fills ground-truth gaps longer than `max_gap_ns` from odometry.
///
/// Inside a gap, increments are composed forward from the left anchor and the
/// closure error against the right anchor is spread linearly in time. Before
/// the first and after the last anchor, odometry is dead-reckoned from the
/// single anchor and `boundary_warning` is set. Existing entries are kept
/// unchanged.
pub fn gap_fill(
    gt: &GroundTruthStream,
    odometry: &[OdometryStep],
    max_gap_ns: i64,
) -> Result<(GroundTruthStream, GapFillReport)> {
    let mut report = GapFillReport::default();
    let mut entries: Vec<(i64, Pose6DoF, PoseSource)> = gt
        .timestamps
        .iter()
        .zip(&gt.poses)
        .zip(&gt.sources)
        .map(|((&t, &p), &s)| (t, p, s))
        .collect();
    for i in gt.gaps(max_gap_ns) {
        let (ta, tb) = (gt.timestamps[i], gt.timestamps[i + 1]);
        let Some(steps) = chain(odometry, ta, tb) else {
            report.unbridged.push((ta, tb));
            continue;
        };
        let mut composed = Vec::with_capacity(steps.len());
        let mut p = gt.poses[i];
        for s in &steps {
            p = p.compose(&s.delta);
            composed.push((s.t1, p));
        }
        let (_, end) = composed[composed.len() - 1];
        let anchor = gt.poses[i + 1];
        let dt = [0, 1, 2].map(|k| anchor.translation[k] - end.translation[k]);
        let dr = [0, 1, 2].map(|k| angle_diff(end.rotation[k], anchor.rotation[k]));
        for &(t, p) in &composed[..composed.len() - 1] {
            let s = (t - ta) as f64 / (tb - ta) as f64;
            let fixed = Pose6DoF::new(
                [0, 1, 2].map(|k| p.translation[k] + s * dt[k]),
                [0, 1, 2].map(|k| wrap_angle(p.rotation[k] + s * dr[k])),
            );
            entries.push((t, fixed, PoseSource::OdometryFilled));
            report.filled += 1;
        }
    }
    // dead reckoning past the last anchor
    let mut t = gt.end();
    let mut p = gt.poses[gt.len() - 1];
    let by_start: BTreeMap<i64, &OdometryStep> = odometry.iter().map(|o| (o.t0, o)).collect();
    while let Some(step) = by_start.get(&t).filter(|s| s.t1 > t) {
        p = p.compose(&step.delta);
        t = step.t1;
        entries.push((t, p.wrapped(), PoseSource::OdometryFilled));
        report.filled += 1;
        report.boundary_warning = true;
    }
    // and backward before the first anchor
    let by_end: BTreeMap<i64, &OdometryStep> = odometry.iter().map(|o| (o.t1, o)).collect();
    let mut t = gt.start();
    let mut p = gt.poses[0];
    while let Some(step) = by_end.get(&t).filter(|s| s.t0 < t) {
        p = p.compose(&step.delta.inverse());
        t = step.t0;
        entries.push((t, p.wrapped(), PoseSource::OdometryFilled));
        report.filled += 1;
        report.boundary_warning = true;
    }
    if report.boundary_warning {
        log::warn!("ground truth extended past its anchors by dead reckoning");
    }
    entries.sort_by_key(|e| e.0);
    let (ts, rest): (Vec<i64>, Vec<(Pose6DoF, PoseSource)>) = entries.into_iter().map(|(t, p, s)| (t, (p, s))).unzip();
    let (poses, sources) = rest.into_iter().unzip();
    Ok((GroundTruthStream::with_sources(ts, poses, sources)?, report))
}

/// Frames of one sensor in timestamp order.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorStream {
    pub sensor: SensorId,
    timestamps: Vec<i64>,
    paths: Vec<PathBuf>,
}

impl SensorStream {
    pub fn new(sensor: SensorId, timestamps: Vec<i64>, paths: Vec<PathBuf>) -> Result<Self> {
        if timestamps.len() != paths.len() {
            return Err(Error::dim("stream timestamps and paths differ in length"));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("{sensor} timestamps must be strictly increasing")));
        }
        Ok(SensorStream {
            sensor,
            timestamps,
            paths,
        })
    }

    /// Stream whose paths are the zero-padded timestamp file names.
    pub fn from_timestamps(sensor: SensorId, timestamps: Vec<i64>) -> Result<Self> {
        let paths = timestamps.iter().map(|&t| frame_file_name(sensor, t)).collect();
        Self::new(sensor, timestamps, paths)
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// Reference to one frame of a stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRef {
    pub timestamp_ns: i64,
    pub path: PathBuf,
}

/// One radar frame with its matched frames and the shared pose.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignedSample {
    pub timestamp_ns: i64,
    pub pose: Pose6DoF,
    pub frames: BTreeMap<SensorId, FrameRef>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AlignedDataset {
    pub samples: Vec<AlignedSample>,
    /// Radar frames outside the ground-truth time range.
    pub dropped_radar: usize,
}

/// Matches each radar frame to the positionally nearest frame of every other sensor.
///
/// Radar frames outside the ground-truth range are dropped and counted. Radar
/// frames inside a ground-truth gap longer than `max_gap_ns` are a coverage
/// error. Non-radar frames without a ground-truth position are not candidates.
pub fn align(streams: &[SensorStream], gt: &GroundTruthStream, max_gap_ns: i64) -> Result<AlignedDataset> {
    let by_sensor: BTreeMap<SensorId, &SensorStream> = streams.iter().map(|s| (s.sensor, s)).collect();
    for s in SensorId::ALL {
        match by_sensor.get(&s) {
            Some(st) if !st.is_empty() => {}
            _ => {
                return Err(Error::MissingSensor {
                    sensor: s.name().into(),
                    detail: "stream is empty or absent".into(),
                })
            }
        }
    }
    let gaps: Vec<(i64, i64)> = gt
        .gaps(max_gap_ns)
        .into_iter()
        .map(|i| (gt.timestamps[i], gt.timestamps[i + 1]))
        .collect();
    let in_gap = |t: i64| gaps.iter().any(|&(a, b)| a < t && t < b);
    let covered = |t: i64| gt.contains(t) && !in_gap(t);

    let mut trees = BTreeMap::new();
    for s in SensorId::ALL.into_iter().filter(|&s| s != SensorId::R) {
        let st = by_sensor[&s];
        let mut idx = Vec::new();
        let mut pos = Vec::new();
        for (i, &t) in st.timestamps.iter().enumerate() {
            if covered(t) {
                idx.push(i);
                pos.push(gt.interpolate(t)?.translation);
            }
        }
        if idx.is_empty() {
            return Err(Error::MissingSensor {
                sensor: s.name().into(),
                detail: "no frame lies within ground-truth coverage".into(),
            });
        }
        trees.insert(s, (KdTree::build(pos)?, idx));
    }

    let radar = by_sensor[&SensorId::R];
    let mut out = AlignedDataset::default();
    let mut uncovered = Vec::new();
    for (i, &t) in radar.timestamps.iter().enumerate() {
        if !gt.contains(t) {
            out.dropped_radar += 1;
            continue;
        }
        if in_gap(t) {
            uncovered.push(t);
            continue;
        }
        let pose = gt.interpolate(t)?;
        let mut frames = BTreeMap::new();
        frames.insert(
            SensorId::R,
            FrameRef {
                timestamp_ns: t,
                path: radar.paths[i].clone(),
            },
        );
        for (&s, (tree, idx)) in &trees {
            let j = idx[tree.nearest(pose.translation)];
            let st = by_sensor[&s];
            frames.insert(
                s,
                FrameRef {
                    timestamp_ns: st.timestamps[j],
                    path: st.paths[j].clone(),
                },
            );
        }
        out.samples.push(AlignedSample {
            timestamp_ns: t,
            pose,
            frames,
        });
    }
    if !uncovered.is_empty() {
        return Err(Error::Coverage(uncovered));
    }
    if out.dropped_radar > 0 {
        log::info!("dropped {} radar frames outside ground-truth coverage", out.dropped_radar);
    }
    Ok(out)
}
