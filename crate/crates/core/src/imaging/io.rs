//! `UNRI` image and radar files.
//!
//! Layout, little-endian: magic `UNRI`, `u32` rows, `u32` cols, `u8`
//! channels, then `rows × cols × channels` `f32` values in row-major order
//! with the channel index fastest.

use std::path::Path;

use crate::binio::{push_f32s, read_file, write_file, Reader};
use crate::error::Result;
use crate::imaging::ImageFrame;

const MAGIC: &[u8; 4] = b"UNRI";

pub fn encode_unri(frame: &ImageFrame) -> Vec<u8> {
    let mut out = Vec::with_capacity(13 + 4 * frame.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(frame.rows as u32).to_le_bytes());
    out.extend_from_slice(&(frame.cols as u32).to_le_bytes());
    out.push(frame.channels as u8);
    let interleaved = (0..frame.rows).flat_map(|i| {
        (0..frame.cols).flat_map(move |j| (0..frame.channels).map(move |c| frame.at(c, i, j)))
    });
    push_f32s(&mut out, interleaved);
    out
}

pub fn decode_unri(bytes: &[u8], path: &Path) -> Result<ImageFrame> {
    let mut r = Reader::new(bytes, path);
    r.magic(MAGIC)?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let channels = r.u8()? as usize;
    if rows * cols * channels == 0 {
        return Err(r.fail(format!("empty raster {rows}×{cols}×{channels}")));
    }
    let vals = r.f32s(rows * cols * channels)?;
    r.finish()?;
    let mut data = vec![0.0; vals.len()];
    for (idx, v) in vals.into_iter().enumerate() {
        let c = idx % channels;
        let pix = idx / channels;
        data[c * rows * cols + pix] = v as f64;
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(r.fail("raster contains non-finite values"));
    }
    ImageFrame::new(channels, rows, cols, data)
}

pub fn write_unri(path: &Path, frame: &ImageFrame) -> Result<()> {
    write_file(path, &encode_unri(frame))
}

pub fn read_unri(path: &Path) -> Result<ImageFrame> {
    decode_unri(&read_file(path)?, path)
}
