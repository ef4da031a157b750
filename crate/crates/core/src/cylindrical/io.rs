//! `UNLP` point-cloud files.
//!
//! Layout, little-endian: magic `UNLP`, `u32` point count, `u8` intensity
//! flag, `N×3 f32` coordinates, then `N f32` intensities when flagged.

use std::path::Path;

use crate::binio::{push_f32s, read_file, write_file, Reader};
use crate::cylindrical::PointCloud;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"UNLP";

pub fn encode_unlp(cloud: &PointCloud) -> Vec<u8> {
    let n = cloud.len();
    let mut out = Vec::with_capacity(9 + 16 * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.push(cloud.intensity().is_some() as u8);
    push_f32s(&mut out, cloud.points().iter().flatten().copied());
    if let Some(i) = cloud.intensity() {
        push_f32s(&mut out, i.iter().copied());
    }
    out
}

pub fn decode_unlp(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    let mut r = Reader::new(bytes, path);
    r.magic(MAGIC)?;
    let n = r.u32()? as usize;
    let flag = r.u8()?;
    if flag > 1 {
        return Err(r.fail(format!("intensity flag must be 0 or 1, got {flag}")));
    }
    let coords = r.f32s(n * 3)?;
    let intensity = if flag == 1 {
        Some(r.f32s(n)?.into_iter().map(f64::from).collect())
    } else {
        None
    };
    r.finish()?;
    let points = coords
        .chunks_exact(3)
        .map(|c| [c[0] as f64, c[1] as f64, c[2] as f64])
        .collect();
    PointCloud::new(points, intensity).map_err(|e| match e {
        Error::EmptyCloud(_) | Error::Numeric(_) => r.fail(e.to_string()),
        other => other,
    })
}

pub fn write_unlp(path: &Path, cloud: &PointCloud) -> Result<()> {
    write_file(path, &encode_unlp(cloud))
}

pub fn read_unlp(path: &Path) -> Result<PointCloud> {
    decode_unlp(&read_file(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_intensity() {
        let c = PointCloud::new(vec![[1.5, -2.0, 0.25], [3.0, 4.0, 5.0]], Some(vec![0.5, 1.0])).unwrap();
        let bytes = encode_unlp(&c);
        assert_eq!(&bytes[..4], b"UNLP");
        assert_eq!(bytes.len(), 4 + 4 + 1 + 2 * 12 + 2 * 4);
        assert_eq!(decode_unlp(&bytes, Path::new("x")).unwrap(), c);
    }

    #[test]
    fn rejects_truncation_and_magic() {
        let c = PointCloud::new(vec![[1.0, 2.0, 3.0]], None).unwrap();
        let bytes = encode_unlp(&c);
        assert!(matches!(decode_unlp(&bytes[..bytes.len() - 1], Path::new("x")), Err(Error::Format { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_unlp(&bad, Path::new("x")), Err(Error::Format { .. })));
    }
}
