use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::autonet::Tensor;
use crate::error::{Error, Result};

/// 8-bit RGB raster, row-major, 3 bytes per pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn filled(width: u32, height: u32, color: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(3 * n);
        for _ in 0..n {
            data.extend_from_slice(&color);
        }
        Self { width, height, data }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != 3 * width as usize * height as usize {
            return Err(Error::Image(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                3 * width as usize * height as usize,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put_pixel(&mut self, x: u32, y: u32, c: [u8; 3]) {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        self.data[i..i + 3].copy_from_slice(&c);
    }

    /// The image rotated by 180° in the image plane.
    pub fn rotated_180(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for px in self.data.chunks_exact(3).rev() {
            data.extend_from_slice(px);
        }
        Self {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut encoder = png::Encoder::new(BufWriter::new(file), self.width, self.height);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
        writer
            .write_image_data(&self.data)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
        writer
            .finish()
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
    }

    /// Reads an 8-bit PNG; grayscale is expanded and alpha dropped.
    pub fn read_png(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut decoder = png::Decoder::new(BufReader::new(file));
        decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let img_err = |e: png::DecodingError| Error::Image(format!("{}: {e}", path.display()));
        let mut reader = decoder.read_info().map_err(img_err)?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| Error::Image(format!("{}: image too large", path.display())))?;
        let mut buf = vec![0u8; size];
        let info = reader.next_frame(&mut buf).map_err(img_err)?;
        buf.truncate(info.buffer_size());
        let channels = match info.color_type {
            png::ColorType::Rgb => 3,
            png::ColorType::Rgba => 4,
            png::ColorType::Grayscale => 1,
            png::ColorType::GrayscaleAlpha => 2,
            png::ColorType::Indexed => {
                return Err(Error::Image(format!("{}: unexpanded palette image", path.display())))
            }
        };
        let data = if channels == 3 {
            buf
        } else {
            buf.chunks_exact(channels)
                .flat_map(|px| {
                    if channels >= 3 {
                        [px[0], px[1], px[2]]
                    } else {
                        [px[0]; 3]
                    }
                })
                .collect()
        };
        Self::from_raw(info.width, info.height, data)
    }

    /// Dimensions from the PNG header alone.
    pub fn png_dimensions(path: &Path) -> Result<(u32, u32)> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let decoder = png::Decoder::new(BufReader::new(file));
        let reader = decoder
            .read_info()
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
        let info = reader.info();
        Ok((info.width, info.height))
    }
}

/// Axis-aligned pixel rectangle, half-open: columns `x_min..x_max`,
/// rows `y_min..y_max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundingBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BoundingBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self::new(0, 0, width, height)
    }

    pub fn width(&self) -> u32 {
        self.x_max.saturating_sub(self.x_min)
    }

    pub fn height(&self) -> u32 {
        self.y_max.saturating_sub(self.y_min)
    }

    pub fn is_valid(&self) -> bool {
        self.x_min < self.x_max && self.y_min < self.y_max
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.is_valid() && self.x_max <= width && self.y_max <= height
    }

    /// Intersection with the image rectangle.
    pub fn clamped(&self, width: u32, height: u32) -> Self {
        Self {
            x_min: self.x_min.min(width),
            y_min: self.y_min.min(height),
            x_max: self.x_max.min(width),
            y_max: self.y_max.min(height),
        }
    }
}

/// Crops `bbox` (clamped to the image) and bilinearly resizes it to
/// `out_size × out_size`, returning a `[3, out_size, out_size]` tensor of
/// RGB values in `[0, 1]`.
///
/// Sampling uses pixel centers: output pixel `i` reads source coordinate
/// `(i + 0.5) · scale − 0.5`, clamped to the crop.
pub fn crop_resize(image: &RgbImage, bbox: BoundingBox, out_size: u32) -> Result<Tensor> {
    let b = bbox.clamped(image.width(), image.height());
    if !b.is_valid() || out_size == 0 {
        return Err(Error::InvalidArgument(format!(
            "degenerate crop {bbox:?} for a {}x{} image (output size {out_size})",
            image.width(),
            image.height()
        )));
    }
    let (cw, ch) = (b.width() as usize, b.height() as usize);
    let s = out_size as usize;
    let taps = |out: usize, src: usize| -> Vec<(usize, usize, f64)> {
        let scale = src as f64 / out as f64;
        (0..out)
            .map(|i| {
                let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let i0 = pos.floor() as usize;
                let i1 = (i0 + 1).min(src - 1);
                (i0, i1, pos - i0 as f64)
            })
            .collect()
    };
    let xs = taps(s, cw);
    let ys = taps(s, ch);

    let mut out = vec![0.0f32; 3 * s * s];
    for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
            let p = |x: usize, y: usize| image.pixel(b.x_min + x as u32, b.y_min + y as u32);
            let (p00, p01, p10, p11) = (p(x0, y0), p(x1, y0), p(x0, y1), p(x1, y1));
            for c in 0..3 {
                let top = p00[c] as f64 * (1.0 - fx) + p01[c] as f64 * fx;
                let bottom = p10[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                out[(c * s + oy) * s + ox] = (v / 255.0) as f32;
            }
        }
    }
    Tensor::from_vec(&[3, s, s], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(w: u32, h: u32) -> RgbImage {
        let mut img = RgbImage::filled(w, h, [0, 0, 0]);
        for y in 0..h {
            for x in 0..w {
                img.put_pixel(
                    x,
                    y,
                    [(x * 13 % 256) as u8, (y * 29 % 256) as u8, ((x + y) * 7 % 256) as u8],
                );
            }
        }
        img
    }

    #[test]
    fn identity_resize() {
        let src = gradient_image(7, 7);
        let t = crop_resize(&src, BoundingBox::full(7, 7), 7).unwrap();
        for y in 0..7 {
            for x in 0..7 {
                for (c, &p) in src.pixel(x, y).iter().enumerate() {
                    let v = t.data()[(c * 7 + y as usize) * 7 + x as usize];
                    assert!((v - p as f32 / 255.0).abs() <= 1.0 / 255.0);
                }
            }
        }
    }

    #[test]
    fn constant_upscale() {
        let img = RgbImage::filled(6, 6, [10, 200, 90]);
        let t = crop_resize(&img, BoundingBox::new(2, 3, 4, 5), 4).unwrap();
        for c in 0..3 {
            let expected = [10.0, 200.0, 90.0][c] / 255.0;
            for v in &t.data()[c * 16..(c + 1) * 16] {
                assert!((v - expected).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn checkerboard_downscale_averages_blocks() {
        let mut img = RgbImage::filled(8, 8, [0, 0, 0]);
        for y in 0..8 {
            for x in 0..8 {
                let v = if (x + y) % 2 == 0 { 255 } else { (x * 20 + y) as u8 };
                img.put_pixel(x, y, [v, 255 - v, v / 2]);
            }
        }
        let t = crop_resize(&img, BoundingBox::full(8, 8), 4).unwrap();
        for oy in 0..4u32 {
            for ox in 0..4u32 {
                for c in 0..3 {
                    let block: f32 = [(0, 0), (1, 0), (0, 1), (1, 1)]
                        .iter()
                        .map(|(dx, dy)| img.pixel(2 * ox + dx, 2 * oy + dy)[c] as f32)
                        .sum::<f32>()
                        / 4.0;
                    let v = t.data()[(c * 4 + oy as usize) * 4 + ox as usize];
                    assert!((v - block / 255.0).abs() <= 1.0 / 255.0);
                }
            }
        }
    }

    #[test]
    fn degenerate_and_edge_boxes() {
        let img = RgbImage::filled(4, 4, [1, 2, 3]);
        assert!(crop_resize(&img, BoundingBox::new(2, 2, 2, 3), 4).is_err());
        assert!(crop_resize(&img, BoundingBox::new(5, 0, 9, 3), 4).is_err());
        // overhanging box is clamped, not padded
        let t = crop_resize(&img, BoundingBox::new(2, 2, 9, 9), 2).unwrap();
        assert!(t.data().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let img = gradient_image(9, 4);
        img.write_png(&path).unwrap();
        assert_eq!(RgbImage::read_png(&path).unwrap(), img);
        assert_eq!(RgbImage::png_dimensions(&path).unwrap(), (9, 4));
    }
}
