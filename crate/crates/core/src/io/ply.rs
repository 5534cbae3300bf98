//! Binary little-endian PLY for point clouds: positions as float32, optional
//! red/green/blue and label as uchar, and a mandatory source tag as uchar.

use super::IoError;
use crate::cloud::{PointCloud, PointSource};
use nalgebra::Point3;
use std::path::Path;

pub fn encode(cloud: &PointCloud) -> Vec<u8> {
    let n = cloud.len();
    let mut header = String::new();
    header.push_str("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {n}\n"));
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if cloud.colors.is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    if cloud.labels.is_some() {
        header.push_str("property uchar label\n");
    }
    header.push_str("property uchar source\nend_header\n");

    let mut out = header.into_bytes();
    for i in 0..n {
        let p = cloud.positions[i];
        out.extend_from_slice(&(p.x as f32).to_le_bytes());
        out.extend_from_slice(&(p.y as f32).to_le_bytes());
        out.extend_from_slice(&(p.z as f32).to_le_bytes());
        if let Some(colors) = &cloud.colors {
            out.extend_from_slice(&colors[i]);
        }
        if let Some(labels) = &cloud.labels {
            out.push(labels[i]);
        }
        out.push(cloud.sources[i] as u8);
    }
    out
}

pub fn write(path: &Path, cloud: &PointCloud) -> Result<(), IoError> {
    super::atomic_write(path, &encode(cloud))
}

#[derive(Clone, Copy, PartialEq)]
enum Prop {
    X,
    Y,
    Z,
    Red,
    Green,
    Blue,
    Label,
    Source,
}

pub fn read(path: &Path) -> Result<PointCloud, IoError> {
    let bytes = super::read_bytes(path)?;
    decode(path, &bytes)
}

pub fn decode(path: &Path, bytes: &[u8]) -> Result<PointCloud, IoError> {
    let header_end = find_header_end(bytes)
        .ok_or_else(|| IoError::format(path, "missing end_header"))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| IoError::format(path, "non-ascii header"))?;

    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(IoError::format(path, "missing ply magic"));
    }
    let mut count: Option<usize> = None;
    let mut props: Vec<(Prop, usize)> = Vec::new(); // (property, byte width)
    let mut format_seen = false;
    for line in lines {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                if tok.next() != Some("binary_little_endian") {
                    return Err(IoError::format(path, "only binary_little_endian supported"));
                }
                format_seen = true;
            }
            Some("comment") => {}
            Some("element") => {
                if tok.next() != Some("vertex") {
                    return Err(IoError::format(path, "only vertex elements supported"));
                }
                count = tok.next().and_then(|t| t.parse().ok());
                if count.is_none() {
                    return Err(IoError::format(path, "bad vertex count"));
                }
            }
            Some("property") => {
                let ty = tok.next().unwrap_or("");
                let name = tok.next().unwrap_or("");
                let (prop, width) = match (ty, name) {
                    ("float" | "float32", "x") => (Prop::X, 4),
                    ("float" | "float32", "y") => (Prop::Y, 4),
                    ("float" | "float32", "z") => (Prop::Z, 4),
                    ("uchar" | "uint8", "red") => (Prop::Red, 1),
                    ("uchar" | "uint8", "green") => (Prop::Green, 1),
                    ("uchar" | "uint8", "blue") => (Prop::Blue, 1),
                    ("uchar" | "uint8", "label") => (Prop::Label, 1),
                    ("uchar" | "uint8", "source") => (Prop::Source, 1),
                    _ => {
                        return Err(IoError::format(
                            path,
                            format!("unsupported property '{ty} {name}'"),
                        ))
                    }
                };
                props.push((prop, width));
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(IoError::format(path, format!("unexpected header line '{other}'")))
            }
            None => {}
        }
    }
    if !format_seen {
        return Err(IoError::format(path, "missing format line"));
    }
    let count = count.ok_or_else(|| IoError::format(path, "missing vertex element"))?;
    for needed in [Prop::X, Prop::Y, Prop::Z, Prop::Source] {
        if !props.iter().any(|(p, _)| *p == needed) {
            return Err(IoError::format(path, "missing required property"));
        }
    }
    let has_color = props.iter().any(|(p, _)| *p == Prop::Red);
    let has_label = props.iter().any(|(p, _)| *p == Prop::Label);
    let stride: usize = props.iter().map(|(_, w)| w).sum();

    let body = &bytes[header_end..];
    if body.len() != count * stride {
        return Err(IoError::format(
            path,
            format!("payload is {} bytes, expected {}", body.len(), count * stride),
        ));
    }

    let mut positions = Vec::with_capacity(count);
    let mut colors = has_color.then(|| Vec::with_capacity(count));
    let mut labels = has_label.then(|| Vec::with_capacity(count));
    let mut sources = Vec::with_capacity(count);
    for rec in 0..count {
        let base = rec * stride;
        let mut off = 0usize;
        let (mut x, mut y, mut z) = (0.0f32, 0.0f32, 0.0f32);
        let mut rgb = [0u8; 3];
        let mut label = 0u8;
        let mut source = 0u8;
        for (prop, width) in &props {
            let field = &body[base + off..base + off + width];
            match prop {
                Prop::X => x = f32::from_le_bytes(field.try_into().unwrap()),
                Prop::Y => y = f32::from_le_bytes(field.try_into().unwrap()),
                Prop::Z => z = f32::from_le_bytes(field.try_into().unwrap()),
                Prop::Red => rgb[0] = field[0],
                Prop::Green => rgb[1] = field[0],
                Prop::Blue => rgb[2] = field[0],
                Prop::Label => label = field[0],
                Prop::Source => source = field[0],
            }
            off += width;
        }
        positions.push(Point3::new(x as f64, y as f64, z as f64));
        if let Some(c) = colors.as_mut() {
            c.push(rgb);
        }
        if let Some(l) = labels.as_mut() {
            l.push(label);
        }
        sources.push(PointSource::from_u8(source).ok_or_else(|| {
            IoError::invalid(path, format!("unknown source tag {source} at record {rec}"))
        })?);
    }
    PointCloud::new(positions, colors, labels, sources)
        .map_err(|e| IoError::invalid(path, e.to_string()))
}

fn find_header_end(bytes: &[u8]) -> Option<usize> {
    let needle = b"end_header\n";
    bytes
        .windows(needle.len())
        .position(|w| w == needle)
        .map(|p| p + needle.len())
}
