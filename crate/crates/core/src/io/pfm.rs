//! PFM depth interchange: grayscale `Pf`, three ASCII header lines (magic,
//! `width height`, scale), float32 rasters stored bottom-to-top per the PFM
//! convention. We write scale -1.0 (little-endian); readers accept either
//! endianness. Depth 0 marks invalid pixels; values outside the target range
//! are sanitized to invalid on read.

use super::IoError;
use crate::render::{DepthFrame, DepthRange};
use std::path::Path;

pub fn encode(frame: &DepthFrame) -> Vec<u8> {
    let (w, h) = (frame.width(), frame.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for row in (0..h).rev() {
        for col in 0..w {
            let v = frame.get(row, col) as f32;
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write(path: &Path, frame: &DepthFrame) -> Result<(), IoError> {
    super::atomic_write(path, &encode(frame))
}

pub fn decode(path: &Path, bytes: &[u8], range: DepthRange) -> Result<DepthFrame, IoError> {
    let mut pos = 0usize;
    let mut line = || -> Result<String, IoError> {
        let start = pos;
        while pos < bytes.len() && bytes[pos] != b'\n' {
            pos += 1;
        }
        if pos >= bytes.len() {
            return Err(IoError::format(path, "truncated header"));
        }
        let s = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| IoError::format(path, "non-ascii header"))?
            .to_string();
        pos += 1;
        Ok(s)
    };

    let magic = line()?;
    if magic.trim() != "Pf" {
        return Err(IoError::format(path, format!("bad magic '{magic}', expected 'Pf'")));
    }
    let dims = line()?;
    let mut it = dims.split_whitespace();
    let w: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| IoError::format(path, "bad width"))?;
    let h: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| IoError::format(path, "bad height"))?;
    let scale: f64 = line()?
        .trim()
        .parse()
        .map_err(|_| IoError::format(path, "bad scale"))?;
    let little_endian = scale < 0.0;

    let body = &bytes[pos..];
    if body.len() != w * h * 4 {
        return Err(IoError::format(
            path,
            format!("payload is {} bytes, expected {}", body.len(), w * h * 4),
        ));
    }
    let mut data = vec![0.0f64; w * h];
    for file_row in 0..h {
        let row = h - 1 - file_row; // PFM stores bottom-up
        for col in 0..w {
            let off = (file_row * w + col) * 4;
            let raw: [u8; 4] = body[off..off + 4].try_into().unwrap();
            let v = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            data[row * w + col] = v as f64;
        }
    }
    Ok(DepthFrame::from_raw_sanitized(w, h, data, range))
}

pub fn read(path: &Path, range: DepthRange) -> Result<DepthFrame, IoError> {
    let bytes = super::read_bytes(path)?;
    decode(path, &bytes, range)
}
