use std::io::Cursor;

use image::{ImageFormat, RgbImage};
use thiserror::Error;

use super::{CompiledCppn, CppnError, Genome};

/// One pixel in HSB, each component in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixel {
    pub h: f64,
    pub s: f64,
    pub b: f64,
}

/// A rendered raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<Pixel>,
}

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("png encoding failed: {0}")]
    Encode(String),
    #[error("png decoding failed: {0}")]
    Decode(String),
}

/// Fractional part, with the half-open convention `1.0 -> 0.0`. Non-finite
/// activations map to 0.
pub fn wrap_hue(h: f64) -> f64 {
    if !h.is_finite() {
        return 0.0;
    }
    let w = h - h.floor();
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

pub fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Pixel-center coordinate in `[-1, 1]` for index `i` of `n`.
#[inline]
pub fn pixel_coordinate(i: u32, n: u32) -> f64 {
    2.0 * (i as f64 + 0.5) / n as f64 - 1.0
}

/// Renders a genome. Grayscale mode forces hue and saturation to zero; the
/// brightness channel is computed identically in both modes.
pub fn render(
    genome: &Genome,
    width: u32,
    height: u32,
    color_mode: bool,
) -> Result<ImageBuffer, CppnError> {
    if width == 0 || height == 0 {
        return Err(CppnError::Integrity(format!(
            "render size must be positive, got {width}x{height}"
        )));
    }
    let compiled = CompiledCppn::compile(genome)?;
    let mut scratch = compiled.scratch();
    let mut pixels = Vec::with_capacity(width as usize * height as usize);
    for row in 0..height {
        let y = pixel_coordinate(row, height);
        for col in 0..width {
            let x = pixel_coordinate(col, width);
            let r = (x * x + y * y).sqrt();
            let (b, h, s) = compiled.eval_with(&mut scratch, x, y, r);
            let b = clamp_unit(b);
            pixels.push(if color_mode {
                Pixel {
                    h: wrap_hue(h),
                    s: clamp_unit(s),
                    b,
                }
            } else {
                Pixel { h: 0.0, s: 0.0, b }
            });
        }
    }
    Ok(ImageBuffer {
        width,
        height,
        pixels,
    })
}

#[inline]
fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// HSV -> RGB for one pixel, quantised with `round(v * 255)`.
pub fn hsv_to_rgb(p: Pixel) -> [u8; 3] {
    let Pixel { h, s, b: v } = p;
    let h6 = h * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let lo = v * (1.0 - s);
    let falling = v * (1.0 - s * f);
    let rising = v * (1.0 - s * (1.0 - f));
    let (r, g, b) = match sector as i64 % 6 {
        0 => (v, rising, lo),
        1 => (falling, v, lo),
        2 => (lo, v, rising),
        3 => (lo, falling, v),
        4 => (rising, lo, v),
        _ => (v, lo, falling),
    };
    [quantize(r), quantize(g), quantize(b)]
}

pub fn to_rgb(buffer: &ImageBuffer) -> RgbImage {
    let mut data = Vec::with_capacity(buffer.pixels.len() * 3);
    for p in &buffer.pixels {
        data.extend_from_slice(&hsv_to_rgb(*p));
    }
    RgbImage::from_raw(buffer.width, buffer.height, data).expect("buffer size matches")
}

impl ImageBuffer {
    /// Brightness channel, row-major.
    pub fn brightness(&self) -> Vec<f64> {
        self.pixels.iter().map(|p| p.b).collect()
    }

    pub fn to_rgb(&self) -> RgbImage {
        to_rgb(self)
    }

    pub fn to_png(&self) -> Result<Vec<u8>, ImageError> {
        encode_png(&self.to_rgb())
    }
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>, ImageError> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| ImageError::Encode(e.to_string()))?;
    Ok(out.into_inner())
}

pub fn decode_png(bytes: &[u8]) -> Result<RgbImage, ImageError> {
    image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map(|img| img.to_rgb8())
        .map_err(|e| ImageError::Decode(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng as _;

    /// Chroma-based conversion, written independently of [`hsv_to_rgb`].
    fn reference_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
        let c = v * s;
        let hp = (h * 360.0) / 60.0;
        let x = c * (1.0 - ((hp % 2.0) - 1.0).abs());
        let (r, g, b) = if hp < 1.0 {
            (c, x, 0.0)
        } else if hp < 2.0 {
            (x, c, 0.0)
        } else if hp < 3.0 {
            (0.0, c, x)
        } else if hp < 4.0 {
            (0.0, x, c)
        } else if hp < 5.0 {
            (x, 0.0, c)
        } else {
            (c, 0.0, x)
        };
        let m = v - c;
        [(r + m) * 255.0, (g + m) * 255.0, (b + m) * 255.0]
    }

    #[test]
    fn hsv_corner_cases() {
        assert_eq!(hsv_to_rgb(Pixel { h: 0.0, s: 0.0, b: 0.5 }), [128, 128, 128]);
        assert_eq!(hsv_to_rgb(Pixel { h: 0.0, s: 1.0, b: 1.0 }), [255, 0, 0]);
        assert_eq!(hsv_to_rgb(Pixel { h: 1.0 / 3.0, s: 1.0, b: 1.0 }), [0, 255, 0]);
        assert_eq!(hsv_to_rgb(Pixel { h: 0.0, s: 0.0, b: 0.0 }), [0, 0, 0]);
    }

    #[test]
    fn hsv_matches_reference_converter() {
        let mut rng = seeded(5);
        for _ in 0..20_000 {
            let p = Pixel {
                h: rng.random_range(0.0..1.0),
                s: rng.random(),
                b: rng.random(),
            };
            let got = hsv_to_rgb(p);
            let want = reference_rgb(p.h, p.s, p.b);
            for c in 0..3 {
                assert!(
                    (got[c] as f64 - want[c]).abs() <= 1.0,
                    "{p:?}: {got:?} vs {want:?}"
                );
            }
        }
    }

    #[test]
    fn wrap_and_clamp() {
        assert_eq!(wrap_hue(1.25), 0.25);
        assert_eq!(wrap_hue(-0.25), 0.75);
        assert_eq!(wrap_hue(1.0), 0.0);
        assert_eq!(wrap_hue(-1e-18), 0.0);
        assert_eq!(wrap_hue(f64::NAN), 0.0);
        assert_eq!(clamp_unit(-0.3), 0.0);
        assert_eq!(clamp_unit(2.0), 1.0);
        assert_eq!(clamp_unit(0.4), 0.4);
    }

    #[test]
    fn zero_weight_grayscale_is_mid_gray() {
        let mut g = Genome::init(&mut seeded(2));
        g.connections_mut().for_each(|c| c.weight = 0.0);
        let img = render(&g, 128, 128, false).unwrap();
        assert_eq!(img.pixels.len(), 128 * 128);
        assert!(img.pixels.iter().all(|p| *p == Pixel { h: 0.0, s: 0.0, b: 0.5 }));
        let rgb = img.to_rgb();
        assert!(rgb.pixels().all(|p| p.0 == [128, 128, 128]));
    }

    #[test]
    fn pixel_centers_span_unit_square() {
        assert_eq!(pixel_coordinate(0, 2), -0.5);
        assert_eq!(pixel_coordinate(1, 2), 0.5);
        assert_eq!(pixel_coordinate(0, 1), 0.0);
    }

    #[test]
    fn grayscale_channel_independent_of_color_mode() {
        for seed in 0..20 {
            let g = Genome::init(&mut seeded(seed));
            let gray = render(&g, 24, 16, false).unwrap();
            let color = render(&g, 24, 16, true).unwrap();
            assert_eq!(gray.brightness(), color.brightness());
            assert!(color
                .pixels
                .iter()
                .all(|p| (0.0..1.0).contains(&p.h) && (0.0..=1.0).contains(&p.s)));
        }
    }

    #[test]
    fn zero_size_rejected() {
        let g = Genome::init(&mut seeded(0));
        assert!(render(&g, 0, 4, false).is_err());
    }

    #[test]
    fn png_round_trip() {
        let g = Genome::init(&mut seeded(4));
        let img = render(&g, 16, 8, true).unwrap();
        let png = img.to_png().unwrap();
        let back = decode_png(&png).unwrap();
        assert_eq!(back, img.to_rgb());
    }
}
