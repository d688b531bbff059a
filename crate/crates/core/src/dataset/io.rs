//! Raster decoding and encoding (PNG-class files via the `image` crate).

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb as RgbPixel};

use super::image::{Gray, Mask, Raster};
use super::DatasetError;
use crate::scalar::Scalar;

fn open(path: &Path) -> Result<DynamicImage, DatasetError> {
    image::open(path).map_err(|e| DatasetError::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Decodes 8/16-bit gray or color rasters into `[0, 1]` intensities. Alpha is
/// dropped.
pub fn read_raster<T: Scalar>(path: &Path) -> Result<Raster<T>, DatasetError> {
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let scale8 = |v: u8| T::of(f64::from(v) / 255.0);
    let scale16 = |v: u16| T::of(f64::from(v) / 65535.0);
    let raster = match img {
        DynamicImage::ImageLuma8(b) => {
            Raster::Gray(Gray::new(h, w, b.into_raw().into_iter().map(scale8).collect()))
        }
        DynamicImage::ImageLumaA8(b) => Raster::Gray(Gray::new(
            h,
            w,
            b.pixels().map(|p| scale8(p.0[0])).collect(),
        )),
        DynamicImage::ImageLuma16(b) => {
            Raster::Gray(Gray::new(h, w, b.into_raw().into_iter().map(scale16).collect()))
        }
        DynamicImage::ImageLumaA16(b) => Raster::Gray(Gray::new(
            h,
            w,
            b.pixels().map(|p| scale16(p.0[0])).collect(),
        )),
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => {
            let b = img.to_rgb16();
            let samples: Vec<T> = b.into_raw().into_iter().map(scale16).collect();
            Raster::from_interleaved(h, w, 3, &samples)?
        }
        other => {
            let b = other.to_rgb8();
            let samples: Vec<T> = b.into_raw().into_iter().map(scale8).collect();
            Raster::from_interleaved(h, w, 3, &samples)?
        }
    };
    Ok(raster)
}

/// Raw mask samples and their full-scale value (255 or 65535). Color masks
/// use the per-pixel channel maximum.
pub fn read_mask_raw(path: &Path) -> Result<(usize, usize, Vec<u16>, u16), DatasetError> {
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let out = match img {
        DynamicImage::ImageLuma8(b) => (b.into_raw().into_iter().map(u16::from).collect(), 255),
        DynamicImage::ImageLuma16(b) => (b.into_raw(), u16::MAX),
        DynamicImage::ImageLumaA8(b) => (b.pixels().map(|p| u16::from(p.0[0])).collect(), 255),
        DynamicImage::ImageLumaA16(b) => (b.pixels().map(|p| p.0[0]).collect(), u16::MAX),
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => (
            img.to_rgb16()
                .pixels()
                .map(|p| p.0.iter().copied().max().unwrap_or(0))
                .collect(),
            u16::MAX,
        ),
        other => (
            other
                .to_rgb8()
                .pixels()
                .map(|p| u16::from(p.0.iter().copied().max().unwrap_or(0)))
                .collect(),
            255,
        ),
    };
    Ok((h, w, out.0, out.1))
}

pub fn read_mask(path: &Path) -> Result<Mask, DatasetError> {
    let (h, w, raw, full) = read_mask_raw(path)?;
    Ok(Mask::binarize(h, w, &raw, full))
}

fn write_err(path: &Path, e: image::ImageError) -> DatasetError {
    DatasetError::Encode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// Writes intensities as 16-bit grayscale PNG (values clamped to `[0, 1]`).
pub fn write_gray16<T: Scalar>(path: &Path, img: &Gray<T>) -> Result<(), DatasetError> {
    let data: Vec<u16> = img
        .data
        .iter()
        .map(|v| (v.as_f64().clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, _> =
        ImageBuffer::from_raw(img.width as u32, img.height as u32, data).expect("buffer size");
    buf.save(path).map_err(|e| write_err(path, e))
}

/// Writes intensities as 8-bit grayscale PNG.
pub fn write_gray8<T: Scalar>(path: &Path, img: &Gray<T>) -> Result<(), DatasetError> {
    let data: Vec<u8> = img
        .data
        .iter()
        .map(|v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf: ImageBuffer<Luma<u8>, _> =
        ImageBuffer::from_raw(img.width as u32, img.height as u32, data).expect("buffer size");
    buf.save(path).map_err(|e| write_err(path, e))
}

/// Writes a mask as 8-bit PNG with foreground 255.
pub fn write_mask(path: &Path, mask: &Mask) -> Result<(), DatasetError> {
    let data: Vec<u8> = mask.data.iter().map(|&v| v * 255).collect();
    let buf: ImageBuffer<Luma<u8>, _> =
        ImageBuffer::from_raw(mask.width as u32, mask.height as u32, data).expect("buffer size");
    buf.save(path).map_err(|e| write_err(path, e))
}

/// Writes interleaved 8-bit RGB.
pub fn write_rgb8(path: &Path, width: usize, height: usize, rgb: Vec<u8>) -> Result<(), DatasetError> {
    let buf: ImageBuffer<RgbPixel<u8>, _> =
        ImageBuffer::from_raw(width as u32, height as u32, rgb).expect("buffer size");
    buf.save(path).map_err(|e| write_err(path, e))
}
