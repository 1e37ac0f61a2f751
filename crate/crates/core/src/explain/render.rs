use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::Grid;
use crate::datakit::image::write_png;
use crate::datakit::Image;
use crate::error::{invalid, Result};

pub const OVERLAY_ALPHA: f32 = 0.5;
const LEGEND_HEIGHT: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Colormap {
    /// Blue below zero, white at zero, red above; symmetric about zero.
    Diverging,
    /// Black through red and yellow to white, from zero to the maximum.
    Sequential,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Upsample {
    Nearest,
    Bilinear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    /// Image-sized blend of the input and the coloured map.
    pub overlay: Image,
    /// Colour bar with the numeric extremes printed at its ends.
    pub legend: Image,
    /// Values at the two ends of the colour bar.
    pub scale: (f64, f64),
}

pub fn diverging(t: f64) -> [f32; 3] {
    let t = t.clamp(-1.0, 1.0) as f32;
    if t >= 0.0 {
        [1.0, 1.0 - t, 1.0 - t]
    } else {
        [1.0 + t, 1.0 + t, 1.0]
    }
}

pub fn sequential(t: f64) -> [f32; 3] {
    let t = t.clamp(0.0, 1.0) as f32;
    [(3.0 * t).min(1.0), (3.0 * t - 1.0).clamp(0.0, 1.0), (3.0 * t - 2.0).clamp(0.0, 1.0)]
}

/// Map value at pixel `(y, x)` of an `h×w` image.
pub fn upsample(grid: &Grid, h: usize, w: usize, mode: Upsample) -> Vec<f64> {
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            out.push(match mode {
                Upsample::Nearest => grid.get(y * grid.rows / h, x * grid.cols / w),
                Upsample::Bilinear => {
                    let sy = ((y as f64 + 0.5) * grid.rows as f64 / h as f64 - 0.5).clamp(0.0, (grid.rows - 1) as f64);
                    let sx = ((x as f64 + 0.5) * grid.cols as f64 / w as f64 - 0.5).clamp(0.0, (grid.cols - 1) as f64);
                    let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
                    let (y1, x1) = ((y0 + 1).min(grid.rows - 1), (x0 + 1).min(grid.cols - 1));
                    let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
                    let top = grid.get(y0, x0) * (1.0 - fx) + grid.get(y0, x1) * fx;
                    let bottom = grid.get(y1, x0) * (1.0 - fx) + grid.get(y1, x1) * fx;
                    top * (1.0 - fy) + bottom * fy
                }
            });
        }
    }
    out
}

/// Colours the map, upsamples it to the image and alpha-blends at 0.5.
///
/// Diverging maps are normalized by the largest magnitude, sequential ones by
/// the maximum; an all-zero map paints the zero colour everywhere.
pub fn render_heatmap(grid: &Grid, image: &Image, colormap: Colormap, mode: Upsample) -> Result<Heatmap> {
    if !grid.is_finite() {
        return Err(invalid("cannot render a map with non-finite values"));
    }
    if grid.rows == 0 || grid.cols == 0 {
        return Err(invalid("cannot render an empty map"));
    }
    let (h, w) = (image.height(), image.width());
    let values = upsample(grid, h, w, mode);
    let (scale, color): ((f64, f64), fn(f64) -> [f32; 3]) = match colormap {
        Colormap::Diverging => {
            let m = grid.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            ((-m, m), diverging)
        }
        Colormap::Sequential => ((0.0, grid.max().max(0.0)), sequential),
    };
    let norm = |v: f64| if scale.1 > 0.0 { v / scale.1 } else { 0.0 };
    let mut overlay = image.clone();
    for y in 0..h {
        for x in 0..w {
            let c = color(norm(values[y * w + x]));
            let p = image.pixel(y, x);
            overlay.set_pixel(y, x, std::array::from_fn(|i| (1.0 - OVERLAY_ALPHA) * p[i] + OVERLAY_ALPHA * c[i]));
        }
    }
    let legend = legend_strip(w, scale, colormap);
    Ok(Heatmap { overlay, legend, scale })
}

fn legend_strip(width: usize, scale: (f64, f64), colormap: Colormap) -> Image {
    let mut strip = Image::filled(LEGEND_HEIGHT, width, [1.0; 3]);
    let lo = format_extreme(scale.0);
    let hi = format_extreme(scale.1);
    let text_w = |s: &str| s.chars().count() * 4;
    let bar_x0 = (text_w(&lo) + 1).min(width);
    let bar_x1 = width.saturating_sub(text_w(&hi) + 1).max(bar_x0);
    let span = (bar_x1 - bar_x0).max(1) as f64;
    for x in bar_x0..bar_x1 {
        let t = (x - bar_x0) as f64 / (span - 1.0).max(1.0);
        let c = match colormap {
            Colormap::Diverging => diverging(2.0 * t - 1.0),
            Colormap::Sequential => sequential(t),
        };
        for y in 1..LEGEND_HEIGHT - 1 {
            strip.set_pixel(y, x, c);
        }
    }
    draw_text(&mut strip, &lo, 0, 2);
    draw_text(&mut strip, &hi, width.saturating_sub(text_w(&hi)), 2);
    strip
}

/// Short numeric label: up to four significant digits, exponent form outside [0.01, 10⁴).
pub fn format_extreme(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 {
        "0".into()
    } else if !(0.01..10_000.0).contains(&a) {
        format!("{v:.1e}")
    } else {
        let decimals = (3 - a.log10().floor() as i32).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    }
}

fn glyph(c: char) -> [u8; 5] {
    match c {
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b111, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        '-' => [0b000, 0b000, 0b111, 0b000, 0b000],
        '+' => [0b000, 0b010, 0b111, 0b010, 0b000],
        '.' => [0b000, 0b000, 0b000, 0b000, 0b010],
        'e' => [0b000, 0b111, 0b111, 0b100, 0b111],
        _ => [0; 5],
    }
}

/// 3×5 bitmap text in black, clipped to the image.
fn draw_text(img: &mut Image, text: &str, x0: usize, y0: usize) {
    for (i, c) in text.chars().enumerate() {
        for (dy, row) in glyph(c).iter().enumerate() {
            for dx in 0..3 {
                let (y, x) = (y0 + dy, x0 + i * 4 + dx);
                if row & (0b100 >> dx) != 0 && y < img.height() && x < img.width() {
                    img.set_pixel(y, x, [0.0; 3]);
                }
            }
        }
    }
}

impl Heatmap {
    /// Overlay with the legend strip appended below it.
    pub fn compose(&self) -> Image {
        let mut data = self.overlay.data().to_vec();
        data.extend_from_slice(self.legend.data());
        Image::new(self.overlay.height() + self.legend.height(), self.overlay.width(), data).expect("widths agree")
    }

    /// PNG of [`Heatmap::compose`] with the scale extremes also stored as text chunks.
    pub fn save_png(&self, path: &Path, extra: &[(&str, String)]) -> Result<()> {
        let mut text = vec![("scale_min", self.scale.0.to_string()), ("scale_max", self.scale.1.to_string())];
        text.extend(extra.iter().cloned());
        write_png(path, &self.compose(), &text)
    }
}
