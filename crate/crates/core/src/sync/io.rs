//! Ground-truth and odometry CSVs, the sample manifest and frame directories.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{Modality, Pose6DoF, SensorId};
use crate::sync::{AlignedSample, GroundTruthStream, OdometryStep, SensorStream};

pub const GT_FILE: &str = "gt.csv";
pub const ODOMETRY_FILE: &str = "odometry.csv";
pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Serialize, Deserialize)]
struct GtRow {
    timestamp_ns: i64,
    x: f64,
    y: f64,
    z: f64,
    yaw: f64,
    roll: f64,
    pitch: f64,
}

#[derive(Serialize, Deserialize)]
struct OdoRow {
    t0_ns: i64,
    t1_ns: i64,
    dx: f64,
    dy: f64,
    dz: f64,
    dyaw: f64,
    droll: f64,
    dpitch: f64,
}

fn format_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        detail: e.to_string(),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(f)
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| format_err(path, e))
}

pub fn write_gt_csv(path: &Path, gt: &GroundTruthStream) -> Result<()> {
    let mut w = csv_writer(path)?;
    for (&t, p) in gt.timestamps().iter().zip(gt.poses()) {
        let [x, y, z] = p.translation;
        let [yaw, roll, pitch] = p.rotation;
        w.serialize(GtRow {
            timestamp_ns: t,
            x,
            y,
            z,
            yaw,
            roll,
            pitch,
        })
        .map_err(|e| format_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_gt_csv(path: &Path) -> Result<GroundTruthStream> {
    let rows: Vec<GtRow> = read_rows(path)?;
    let ts = rows.iter().map(|r| r.timestamp_ns).collect();
    let poses = rows
        .iter()
        .map(|r| Pose6DoF::new([r.x, r.y, r.z], [r.yaw, r.roll, r.pitch]))
        .collect();
    GroundTruthStream::new(ts, poses).map_err(|e| format_err(path, e))
}

pub fn write_odometry_csv(path: &Path, steps: &[OdometryStep]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for s in steps {
        let [dx, dy, dz] = s.delta.translation;
        let [dyaw, droll, dpitch] = s.delta.rotation;
        w.serialize(OdoRow {
            t0_ns: s.t0,
            t1_ns: s.t1,
            dx,
            dy,
            dz,
            dyaw,
            droll,
            dpitch,
        })
        .map_err(|e| format_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_odometry_csv(path: &Path) -> Result<Vec<OdometryStep>> {
    let rows: Vec<OdoRow> = read_rows(path)?;
    rows.into_iter()
        .map(|r| {
            if r.t1_ns <= r.t0_ns {
                return Err(format_err(path, format!("odometry step {}→{} is not forward", r.t0_ns, r.t1_ns)));
            }
            Ok(OdometryStep {
                t0: r.t0_ns,
                t1: r.t1_ns,
                delta: Pose6DoF::new([r.dx, r.dy, r.dz], [r.dyaw, r.droll, r.dpitch]),
            })
        })
        .collect()
}

fn extension(sensor: SensorId) -> &'static str {
    match sensor.modality() {
        Modality::PointCloud => "unlp",
        Modality::Image | Modality::Radar => "unri",
    }
}

/// `SENSOR/TTTTTTTTTTTTTTTTTTT.ext`, relative to the dataset root.
pub fn frame_file_name(sensor: SensorId, t: i64) -> PathBuf {
    PathBuf::from(sensor.name()).join(format!("{t:019}.{}", extension(sensor)))
}

/// Lists a sensor directory; file stems are timestamps in nanoseconds.
pub fn scan_stream(root: &Path, sensor: SensorId) -> Result<SensorStream> {
    let dir = root.join(sensor.name());
    if !dir.is_dir() {
        return Err(Error::MissingSensor {
            sensor: sensor.name().into(),
            detail: format!("directory {} does not exist", dir.display()),
        });
    }
    let mut frames = Vec::new();
    for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
        let path = entry.map_err(|e| Error::io(&dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(extension(sensor)) {
            continue;
        }
        let t: i64 = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err(&path, "file name is not a timestamp"))?;
        frames.push((t, frame_file_name(sensor, t)));
    }
    frames.sort();
    let (ts, paths) = frames.into_iter().unzip();
    SensorStream::new(sensor, ts, paths)
}

/// One JSON record per line.
pub fn write_manifest(path: &Path, samples: &[AlignedSample]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for s in samples {
        serde_json::to_writer(&mut w, s).map_err(|e| format_err(path, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<AlignedSample>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| format_err(path, format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}
