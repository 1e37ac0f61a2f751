use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{invalid, Error, Result};

/// Luminance weights for RGB → gray.
pub const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

/// Row-major `H×W×3` RGB image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

/// Row-major single-channel image.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(invalid(format!(
                "gray image {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width * 3 {
            return Err(invalid(format!(
                "rgb image {height}x{width} needs {} values, got {}",
                height * width * 3,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        assert!(height > 0 && width > 0, "empty image");
        let data = std::iter::repeat_n(rgb, height * width).flatten().collect();
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn to_gray(&self) -> GrayImage {
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2])
            .collect();
        GrayImage {
            height: self.height,
            width: self.width,
            data,
        }
    }

    pub fn clamp01(&mut self) {
        self.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }

    /// Snaps every value to the nearest 8-bit level, as a PNG round trip would.
    pub fn quantize(&mut self) {
        self.data.iter_mut().for_each(|v| *v = to_u8(*v) as f32 / 255.0);
    }

    pub fn flip_horizontal(&self) -> Image {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set_pixel(y, x, self.pixel(y, self.width - 1 - x));
            }
        }
        out
    }

    /// Bilinear sample at continuous pixel-index coordinates with edge clamping.
    pub fn sample_bilinear(&self, y: f32, x: f32) -> [f32; 3] {
        let y = y.clamp(0.0, (self.height - 1) as f32);
        let x = x.clamp(0.0, (self.width - 1) as f32);
        let (y0, x0) = (y.floor() as usize, x.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(self.height - 1), (x0 + 1).min(self.width - 1));
        let (fy, fx) = (y - y0 as f32, x - x0 as f32);
        let (a, b, c, d) = (self.pixel(y0, x0), self.pixel(y0, x1), self.pixel(y1, x0), self.pixel(y1, x1));
        std::array::from_fn(|k| {
            let top = a[k] + (b[k] - a[k]) * fx;
            let bottom = c[k] + (d[k] - c[k]) * fx;
            top + (bottom - top) * fy
        })
    }

    /// Bilinear resize with pixel-center alignment.
    pub fn resize(&self, height: usize, width: usize) -> Image {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let sy = self.height as f32 / height as f32;
        let sx = self.width as f32 / width as f32;
        let mut out = Image::filled(height, width, [0.0; 3]);
        for y in 0..height {
            let src_y = (y as f32 + 0.5) * sy - 0.5;
            for x in 0..width {
                let src_x = (x as f32 + 0.5) * sx - 0.5;
                out.set_pixel(y, x, self.sample_bilinear(src_y, src_x));
            }
        }
        out
    }

    /// Per-channel mean over all pixels.
    pub fn channel_means(&self) -> [f64; 3] {
        let mut sum = [0.0f64; 3];
        for p in self.data.chunks_exact(3) {
            for k in 0..3 {
                sum[k] += p[k] as f64;
            }
        }
        let n = (self.height * self.width) as f64;
        sum.map(|s| s / n)
    }

    /// Planar `3×H×W` layout with `means` subtracted per channel.
    pub fn to_chw(&self, means: [f32; 3]) -> Vec<f32> {
        let hw = self.height * self.width;
        let mut out = vec![0.0; 3 * hw];
        for (i, p) in self.data.chunks_exact(3).enumerate() {
            for k in 0..3 {
                out[k * hw + i] = p[k] - means[k];
            }
        }
        out
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| to_u8(v)).collect()
    }

    pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Result<Image> {
        Image::new(height, width, bytes.iter().map(|&b| b as f32 / 255.0).collect())
    }

    pub fn load_png(path: &Path) -> Result<Image> {
        let bad = |message: String| Error::Image {
            path: path.to_path_buf(),
            message,
        };
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut decoder = png::Decoder::new(BufReader::new(file));
        decoder.set_transformations(png::Transformations::normalize_to_color8());
        let mut reader = decoder.read_info().map_err(|e| bad(e.to_string()))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| bad("image too large to decode".into()))?;
        let mut buf = vec![0u8; size];
        let info = reader.next_frame(&mut buf).map_err(|e| bad(e.to_string()))?;
        let (w, h) = (info.width as usize, info.height as usize);
        let bytes = &buf[..info.buffer_size()];
        let rgb: Vec<u8> = match info.color_type {
            png::ColorType::Rgb => bytes.to_vec(),
            png::ColorType::Rgba => bytes.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
            png::ColorType::Grayscale => bytes.iter().flat_map(|&g| [g, g, g]).collect(),
            png::ColorType::GrayscaleAlpha => bytes.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
            png::ColorType::Indexed => return Err(bad("palette was not expanded".into())),
        };
        Image::from_rgb8(h, w, &rgb).map_err(|e| bad(e.to_string()))
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        write_png(path, self, &[])
    }
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an 8-bit RGB PNG, optionally with `tEXt` chunks.
pub fn write_png(path: &Path, image: &Image, text: &[(&str, String)]) -> Result<()> {
    let bad = |message: String| Error::Image {
        path: path.to_path_buf(),
        message,
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), image.width as u32, image.height as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    for (key, value) in text {
        encoder
            .add_text_chunk(key.to_string(), value.clone())
            .map_err(|e| bad(e.to_string()))?;
    }
    let mut writer = encoder.write_header().map_err(|e| bad(e.to_string()))?;
    writer
        .write_image_data(&image.to_rgb8())
        .map_err(|e| bad(e.to_string()))?;
    writer.finish().map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(h: usize, w: usize) -> Image {
        let data = (0..h * w * 3).map(|i| (i % 251) as f32 / 250.0).collect();
        Image::new(h, w, data).unwrap()
    }

    #[test]
    fn png_roundtrip_is_exact_after_quantize() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let mut img = gradient_image(5, 7);
        img.quantize();
        img.save_png(&path).unwrap();
        assert_eq!(Image::load_png(&path).unwrap(), img);
    }

    #[test]
    fn resize_to_same_size_is_identity_and_constant_stays_constant() {
        let img = gradient_image(6, 6);
        assert_eq!(img.resize(6, 6), img);
        let flat = Image::filled(9, 9, [0.2, 0.4, 0.6]);
        let r = flat.resize(4, 5);
        assert!(r.data().chunks(3).all(|p| (p[0] - 0.2).abs() < 1e-6 && (p[2] - 0.6).abs() < 1e-6));
    }

    #[test]
    fn downsample_by_two_averages_pairs() {
        let img = Image::new(1, 4, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let r = img.resize(1, 2);
        assert!((r.pixel(0, 0)[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn gray_uses_luminance() {
        let img = Image::filled(1, 1, [1.0, 0.0, 0.0]);
        assert!((img.to_gray().data[0] - 0.299).abs() < 1e-7);
    }

    #[test]
    fn chw_layout_subtracts_means() {
        let img = Image::new(1, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let chw = img.to_chw([0.1, 0.1, 0.1]);
        let expect = [0.0, 0.3, 0.1, 0.4, 0.2, 0.5];
        assert!(chw.iter().zip(expect).all(|(a, b)| (a - b).abs() < 1e-6));
    }
}
