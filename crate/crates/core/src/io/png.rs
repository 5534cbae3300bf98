//! PNG helpers: 8-bit RGB images, 0/255 masks, 8-bit tag rasters, and the
//! lossy 16-bit millimeter depth export (values above 65.535 m saturate).

use super::IoError;
use crate::render::{DepthFrame, Mask, RgbRaster};
use image::{GrayImage, ImageBuffer, Luma, RgbImage};
use std::io::Cursor;
use std::path::Path;

fn encode_png<P, C>(path: &Path, img: &ImageBuffer<P, C>) -> Result<Vec<u8>, IoError>
where
    P: image::Pixel + image::PixelWithColorType,
    C: std::ops::Deref<Target = [P::Subpixel]>,
    [P::Subpixel]: image::EncodableLayout,
{
    let mut bytes = Vec::new();
    img.write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| IoError::Png { path: path.display().to_string(), source: e })?;
    Ok(bytes)
}

pub fn write_rgb(path: &Path, raster: &RgbRaster) -> Result<(), IoError> {
    let mut img = RgbImage::new(raster.width as u32, raster.height as u32);
    for (i, px) in raster.data.iter().enumerate() {
        let (x, y) = ((i % raster.width) as u32, (i / raster.width) as u32);
        img.put_pixel(x, y, image::Rgb(*px));
    }
    super::atomic_write(path, &encode_png(path, &img)?)
}

pub fn read_rgb(path: &Path) -> Result<RgbRaster, IoError> {
    let img = image::open(path)
        .map_err(|e| IoError::Png { path: path.display().to_string(), source: e })?
        .into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.pixels().map(|p| p.0).collect();
    Ok(RgbRaster { width: w, height: h, data })
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<(), IoError> {
    let mut img = GrayImage::new(mask.width as u32, mask.height as u32);
    for (i, &b) in mask.bits.iter().enumerate() {
        let (x, y) = ((i % mask.width) as u32, (i / mask.width) as u32);
        img.put_pixel(x, y, Luma([if b { 255 } else { 0 }]));
    }
    super::atomic_write(path, &encode_png(path, &img)?)
}

pub fn read_mask(path: &Path) -> Result<Mask, IoError> {
    let img = image::open(path)
        .map_err(|e| IoError::Png { path: path.display().to_string(), source: e })?
        .into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let bits = img.pixels().map(|p| p.0[0] != 0).collect();
    Ok(Mask { width: w, height: h, bits })
}

pub fn write_gray8(path: &Path, width: usize, height: usize, data: &[u8]) -> Result<(), IoError> {
    assert_eq!(data.len(), width * height);
    let img = GrayImage::from_raw(width as u32, height as u32, data.to_vec())
        .expect("raster dimensions match data length");
    super::atomic_write(path, &encode_png(path, &img)?)
}

pub fn read_gray8(path: &Path) -> Result<(usize, usize, Vec<u8>), IoError> {
    let img = image::open(path)
        .map_err(|e| IoError::Png { path: path.display().to_string(), source: e })?
        .into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok((w, h, img.into_raw()))
}

/// Export depth as 16-bit grayscale millimeters. Lossy and export-only:
/// invalid pixels become 0 and depths above 65.535 m saturate.
pub fn write_depth16(path: &Path, frame: &DepthFrame) -> Result<(), IoError> {
    let mut img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::new(frame.width() as u32, frame.height() as u32);
    for row in 0..frame.height() {
        for col in 0..frame.width() {
            let mm = if frame.is_valid(row, col) {
                (frame.get(row, col) * 1000.0).round().clamp(0.0, 65535.0) as u16
            } else {
                0
            };
            img.put_pixel(col as u32, row as u32, Luma([mm]));
        }
    }
    super::atomic_write(path, &encode_png(path, &img)?)
}
