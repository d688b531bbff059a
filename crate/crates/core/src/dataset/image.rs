//! Intensity images, binary masks, and the preprocessing primitives.

use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::scalar::Scalar;

/// Smallest side length a crop may leave behind.
pub const MIN_CROPPED_SIDE: usize = 32;

/// Single-channel intensity image, row-major, nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gray<T> {
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

/// Interleaved three-channel (RGB) image.
#[derive(Clone, Debug, PartialEq)]
pub struct Rgb<T> {
    pub height: usize,
    pub width: usize,
    pub data: Vec<[T; 3]>,
}

/// Decoded raster before grayscale conversion.
#[derive(Clone, Debug, PartialEq)]
pub enum Raster<T> {
    Gray(Gray<T>),
    Rgb(Rgb<T>),
}

impl<T: Scalar> Raster<T> {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Raster::Gray(g) => (g.height, g.width),
            Raster::Rgb(c) => (c.height, c.width),
        }
    }

    /// Builds a raster from interleaved samples with `channels` per pixel.
    pub fn from_interleaved(
        height: usize,
        width: usize,
        channels: usize,
        samples: &[T],
    ) -> Result<Self, DatasetError> {
        if samples.len() != height * width * channels {
            return Err(DatasetError::Shape(format!(
                "{} samples for {height}x{width}x{channels}",
                samples.len()
            )));
        }
        match channels {
            1 => Ok(Raster::Gray(Gray::new(height, width, samples.to_vec()))),
            3 => Ok(Raster::Rgb(Rgb {
                height,
                width,
                data: samples.chunks(3).map(|c| [c[0], c[1], c[2]]).collect(),
            })),
            n => Err(DatasetError::UnsupportedChannels(n)),
        }
    }
}

impl<T: Scalar> Gray<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), height * width, "image data length");
        Self {
            height,
            width,
            data,
        }
    }

    pub fn filled(height: usize, width: usize, v: T) -> Self {
        Self::new(height, width, vec![v; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self::new(height, width, data)
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

/// Binary mask with values in `{0, 1}`, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl Mask {
    /// Fails when any value is outside `{0, 1}`.
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self, DatasetError> {
        if data.len() != height * width {
            return Err(DatasetError::Shape(format!(
                "{} mask values for {height}x{width}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(DatasetError::NonBinaryMask(*v));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(u8::from(f(y, x)));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn foreground(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.width, self.height, |y, x| self.get(x, y) == 1)
    }

    /// Binarizes raw label samples. Label-style rasters (max ≤ 1) keep their
    /// nonzero pixels; intensity-style rasters are thresholded at half of
    /// `full_scale + 1` (128 for 8-bit, 32768 for 16-bit).
    pub fn binarize(height: usize, width: usize, raw: &[u16], full_scale: u16) -> Self {
        let max = raw.iter().copied().max().unwrap_or(0);
        let threshold = if max <= 1 {
            1
        } else {
            ((u32::from(full_scale) + 1) / 2) as u16
        };
        Self {
            height,
            width,
            data: raw.iter().map(|&v| u8::from(v >= threshold)).collect(),
        }
    }
}

/// Pixels removed from each border.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropSpec {
    pub left: usize,
    pub top: usize,
    pub right: usize,
    pub bottom: usize,
}

impl CropSpec {
    pub fn new(left: usize, top: usize, right: usize, bottom: usize) -> Self {
        Self {
            left,
            top,
            right,
            bottom,
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }

    /// Output `(height, width)` for an input of the given size.
    pub fn output_dims(&self, height: usize, width: usize) -> Result<(usize, usize), DatasetError> {
        let h = height.checked_sub(self.top + self.bottom);
        let w = width.checked_sub(self.left + self.right);
        match (h, w) {
            (Some(h), Some(w)) if h >= MIN_CROPPED_SIDE && w >= MIN_CROPPED_SIDE => Ok((h, w)),
            _ => Err(DatasetError::CropOutOfBounds {
                spec: *self,
                height,
                width,
            }),
        }
    }

    /// Combined crop of applying `self` and then `next`.
    pub fn then(&self, next: &CropSpec) -> CropSpec {
        CropSpec::new(
            self.left + next.left,
            self.top + next.top,
            self.right + next.right,
            self.bottom + next.bottom,
        )
    }
}

fn crop_window<P: Copy>(
    data: &[P],
    height: usize,
    width: usize,
    spec: &CropSpec,
) -> Result<(usize, usize, Vec<P>), DatasetError> {
    let (h, w) = spec.output_dims(height, width)?;
    let mut out = Vec::with_capacity(h * w);
    for y in spec.top..spec.top + h {
        out.extend_from_slice(&data[y * width + spec.left..y * width + spec.left + w]);
    }
    Ok((h, w, out))
}

/// Removes the border described by `spec`; the result is an exact subwindow.
pub fn crop_periphery<T: Scalar>(image: &Gray<T>, spec: &CropSpec) -> Result<Gray<T>, DatasetError> {
    let (h, w, data) = crop_window(&image.data, image.height, image.width, spec)?;
    Ok(Gray::new(h, w, data))
}

pub fn crop_raster<T: Scalar>(raster: &Raster<T>, spec: &CropSpec) -> Result<Raster<T>, DatasetError> {
    match raster {
        Raster::Gray(g) => crop_periphery(g, spec).map(Raster::Gray),
        Raster::Rgb(c) => {
            let (h, w, data) = crop_window(&c.data, c.height, c.width, spec)?;
            Ok(Raster::Rgb(Rgb {
                height: h,
                width: w,
                data,
            }))
        }
    }
}

pub fn crop_mask(mask: &Mask, spec: &CropSpec) -> Result<Mask, DatasetError> {
    let (h, w, data) = crop_window(&mask.data, mask.height, mask.width, spec)?;
    Ok(Mask {
        height: h,
        width: w,
        data,
    })
}

pub const LUMA_R: f64 = 0.299;
pub const LUMA_G: f64 = 0.587;
pub const LUMA_B: f64 = 0.114;

/// BT.601 luma for color input; grayscale input passes through untouched.
pub fn to_grayscale<T: Scalar>(raster: &Raster<T>) -> Gray<T> {
    match raster {
        Raster::Gray(g) => g.clone(),
        Raster::Rgb(c) => {
            // r + wg(g - r) + wb(b - r) equals the weighted sum (weights add to 1)
            // and keeps neutral gray an exact fixed point
            let (wg, wb) = (T::of(LUMA_G), T::of(LUMA_B));
            Gray::new(
                c.height,
                c.width,
                c.data
                    .iter()
                    .map(|p| p[0] + wg * (p[1] - p[0]) + wb * (p[2] - p[0]))
                    .collect(),
            )
        }
    }
}

/// Bicubic convolution kernel parameter (Keys, a = -0.5).
pub const BICUBIC_A: f64 = -0.5;

/// Keys cubic convolution kernel.
pub fn cubic_kernel<T: Scalar>(x: T) -> T {
    let a = T::of(BICUBIC_A);
    let x = x.abs();
    let one = T::one();
    let two = T::of(2.0);
    if x <= one {
        ((a + two) * x - (a + T::of(3.0))) * x * x + one
    } else if x < two {
        ((a * x - T::of(5.0) * a) * x + T::of(8.0) * a) * x - T::of(4.0) * a
    } else {
        T::zero()
    }
}

/// Half-pixel-centre source coordinate of output index `i`.
#[inline]
pub fn source_coord<T: Scalar>(i: usize, in_len: usize, out_len: usize) -> T {
    let scale = T::from_usize(in_len).unwrap() / T::from_usize(out_len).unwrap();
    (T::from_usize(i).unwrap() + T::of(0.5)) * scale - T::of(0.5)
}

/// Four (index, weight) taps along one axis, edge-replicated.
fn cubic_taps<T: Scalar>(i: usize, in_len: usize, out_len: usize) -> [(usize, T); 4] {
    let src = source_coord::<T>(i, in_len, out_len);
    let base = src.floor();
    let frac = src - base;
    let base = base.to_i64().unwrap();
    let last = in_len as i64 - 1;
    let mut taps = [(0usize, T::zero()); 4];
    for (k, tap) in taps.iter_mut().enumerate() {
        let off = k as i64 - 1;
        let idx = (base + off).clamp(0, last) as usize;
        *tap = (idx, cubic_kernel(frac - T::from_i64(off).unwrap()));
    }
    taps
}

/// Separable bicubic resize with clamping of the output to `[0, 1]`.
pub fn resize_bicubic<T: Scalar>(
    image: &Gray<T>,
    out_h: usize,
    out_w: usize,
) -> Result<Gray<T>, DatasetError> {
    if out_h < 4 || out_w < 4 {
        return Err(DatasetError::DegenerateSize(out_h, out_w));
    }
    if image.height == 0 || image.width == 0 {
        return Err(DatasetError::DegenerateSize(image.height, image.width));
    }
    let (in_h, in_w) = image.dims();
    let x_taps: Vec<_> = (0..out_w).map(|x| cubic_taps::<T>(x, in_w, out_w)).collect();
    let y_taps: Vec<_> = (0..out_h).map(|y| cubic_taps::<T>(y, in_h, out_h)).collect();

    // horizontal pass: in_h x out_w
    let mut tmp = vec![T::zero(); in_h * out_w];
    for y in 0..in_h {
        let src = &image.data[y * in_w..(y + 1) * in_w];
        for (x, taps) in x_taps.iter().enumerate() {
            tmp[y * out_w + x] = taps.iter().map(|&(i, w)| w * src[i]).sum();
        }
    }
    let mut out = Vec::with_capacity(out_h * out_w);
    for taps in &y_taps {
        for x in 0..out_w {
            let v: T = taps.iter().map(|&(i, w)| w * tmp[i * out_w + x]).sum();
            out.push(v.max(T::zero()).min(T::one()));
        }
    }
    Ok(Gray::new(out_h, out_w, out))
}

/// Nearest source index for output index `i` under half-pixel centres.
#[inline]
pub fn nearest_index(i: usize, in_len: usize, out_len: usize) -> usize {
    // floor((i + 0.5) * in / out), computed exactly in integers
    (((2 * i + 1) * in_len) / (2 * out_len)).min(in_len - 1)
}

pub fn resize_mask_nearest(mask: &Mask, out_h: usize, out_w: usize) -> Result<Mask, DatasetError> {
    if let Some(v) = mask.data.iter().find(|&&v| v > 1) {
        return Err(DatasetError::NonBinaryMask(*v));
    }
    if out_h == 0 || out_w == 0 || mask.height == 0 || mask.width == 0 {
        return Err(DatasetError::DegenerateSize(out_h, out_w));
    }
    let xs: Vec<usize> = (0..out_w).map(|x| nearest_index(x, mask.width, out_w)).collect();
    let mut data = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let sy = nearest_index(y, mask.height, out_h);
        let row = &mask.data[sy * mask.width..(sy + 1) * mask.width];
        data.extend(xs.iter().map(|&sx| row[sx]));
    }
    Ok(Mask {
        height: out_h,
        width: out_w,
        data,
    })
}
