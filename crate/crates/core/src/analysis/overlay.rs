//! Three-panel review raster: input, ground truth, prediction overlay.

use super::AnalysisError;
use crate::dataset::{Gray, Mask};
use crate::scalar::Scalar;

/// Weight of the overlay color in the prediction panel.
pub const OVERLAY_BLEND: f64 = 0.5;
pub const OVERLAY_COLOR: [f64; 3] = [1.0, 0.0, 0.0];

const GLYPH_W: usize = 5;
const GLYPH_H: usize = 7;
const BAND_PAD: usize = 2;

/// Interleaved 8-bit RGB raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Overlay {
    pub raster: RgbImage,
    /// Height of the image panels; the text band sits below.
    pub panel_height: usize,
    pub panel_width: usize,
    pub label: String,
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// DSC label as drawn on the band, three decimals.
pub fn dsc_label(dsc: f64) -> String {
    format!("DSC {dsc:.3}")
}

pub fn render_overlay<T: Scalar>(
    image: &Gray<T>,
    gt: &Mask,
    pred: &Mask,
    dsc: f64,
) -> Result<Overlay, AnalysisError> {
    if image.dims() != gt.dims() || gt.dims() != pred.dims() {
        return Err(AnalysisError::ShapeMismatch(format!(
            "image {:?}, gt {:?}, pred {:?}",
            image.dims(),
            gt.dims(),
            pred.dims()
        )));
    }
    let (h, w) = image.dims();
    let scale = (h / 64).clamp(1, 4);
    let band = GLYPH_H * scale + 2 * BAND_PAD;
    let mut out = RgbImage::new(3 * w, h + band);
    for y in 0..h {
        for x in 0..w {
            let g = image.get(y, x).as_f64();
            let gray = to_u8(g);
            out.put(x, y, [gray; 3]);
            let m = gt.get(y, x) * 255;
            out.put(w + x, y, [m; 3]);
            let px = if pred.get(y, x) == 1 {
                let mix = |c: f64| to_u8((1.0 - OVERLAY_BLEND) * g + OVERLAY_BLEND * c);
                [mix(OVERLAY_COLOR[0]), mix(OVERLAY_COLOR[1]), mix(OVERLAY_COLOR[2])]
            } else {
                [gray; 3]
            };
            out.put(2 * w + x, y, px);
        }
    }
    let label = dsc_label(dsc);
    draw_text(&mut out, 2 * w + BAND_PAD, h + BAND_PAD, &label, scale);
    Ok(Overlay {
        raster: out,
        panel_height: h,
        panel_width: w,
        label,
    })
}

fn glyph(c: char) -> Option<[u8; GLYPH_H]> {
    Some(match c {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        'D' => [0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'N' => [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
        'a' => [0x00, 0x00, 0x0E, 0x01, 0x0F, 0x11, 0x0F],
        ' ' => [0; GLYPH_H],
        _ => return None,
    })
}

/// Draws white text; characters without a glyph are skipped.
fn draw_text(img: &mut RgbImage, x0: usize, y0: usize, text: &str, scale: usize) {
    let advance = (GLYPH_W + 1) * scale;
    for (i, c) in text.chars().enumerate() {
        let Some(rows) = glyph(c) else { continue };
        for (gy, bits) in rows.iter().enumerate() {
            for gx in 0..GLYPH_W {
                if bits & (1 << (GLYPH_W - 1 - gx)) == 0 {
                    continue;
                }
                for sy in 0..scale {
                    for sx in 0..scale {
                        let x = x0 + i * advance + gx * scale + sx;
                        let y = y0 + gy * scale + sy;
                        if x < img.width && y < img.height {
                            img.put(x, y, [255; 3]);
                        }
                    }
                }
            }
        }
    }
}

/// Reads text back from a band drawn by [`draw_text`] (used to verify
/// annotations).
pub fn read_text(img: &RgbImage, x0: usize, y0: usize, len: usize, scale: usize) -> String {
    let charset = "0123456789.DSCNa ";
    let advance = (GLYPH_W + 1) * scale;
    (0..len)
        .map(|i| {
            let mut rows = [0u8; GLYPH_H];
            for (gy, row) in rows.iter_mut().enumerate() {
                for gx in 0..GLYPH_W {
                    let x = x0 + i * advance + gx * scale;
                    let y = y0 + gy * scale;
                    if x < img.width && y < img.height && img.pixel(x, y) == [255; 3] {
                        *row |= 1 << (GLYPH_W - 1 - gx);
                    }
                }
            }
            charset
                .chars()
                .find(|&c| glyph(c) == Some(rows))
                .unwrap_or('?')
        })
        .collect()
}

impl Overlay {
    /// Text scale used for the band.
    pub fn text_scale(&self) -> usize {
        (self.panel_height / 64).clamp(1, 4)
    }

    /// Decodes the drawn label from the raster.
    pub fn drawn_label(&self) -> String {
        read_text(
            &self.raster,
            2 * self.panel_width + BAND_PAD,
            self.panel_height + BAND_PAD,
            self.label.chars().count(),
            self.text_scale(),
        )
    }
}
