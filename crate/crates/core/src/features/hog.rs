use serde::{Deserialize, Serialize};

use crate::datakit::GrayImage;
use crate::error::{invalid, Result};

/// Per-cell normalization floor.
pub const HOG_EPSILON: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HogConfig {
    pub orientations: usize,
    pub cell_size: usize,
    /// Directions over 0–360° instead of 0–180°.
    pub signed: bool,
}

impl Default for HogConfig {
    fn default() -> Self {
        Self {
            orientations: 8,
            cell_size: 32,
            signed: false,
        }
    }
}

impl HogConfig {
    pub fn feature_len(&self, height: usize, width: usize) -> usize {
        (height / self.cell_size) * (width / self.cell_size) * self.orientations
    }
}

/// Centered `[-1, 0, 1]` derivatives; border rows/columns get zero along that axis.
pub fn gradients(img: &GrayImage) -> (Vec<f64>, Vec<f64>) {
    let (h, w) = (img.height, img.width);
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            if x > 0 && x + 1 < w {
                gx[y * w + x] = img.get(y, x + 1) as f64 - img.get(y, x - 1) as f64;
            }
            if y > 0 && y + 1 < h {
                gy[y * w + x] = img.get(y + 1, x) as f64 - img.get(y - 1, x) as f64;
            }
        }
    }
    (gx, gy)
}

/// Cell histograms (row-major cells, then orientation bins), each L2-normalized.
///
/// Bin `b` is centered at `b·range/orientations`; each pixel splits its gradient
/// magnitude linearly between the two nearest centers, wrapping around.
pub fn hog_extract(img: &GrayImage, cfg: &HogConfig) -> Result<Vec<f64>> {
    if cfg.orientations == 0 || cfg.cell_size == 0 {
        return Err(invalid("HOG needs positive orientations and cell size"));
    }
    let (h, w, c) = (img.height, img.width, cfg.cell_size);
    if h % c != 0 || w % c != 0 {
        let pad_h = (c - h % c) % c;
        let pad_w = (c - w % c) % c;
        return Err(invalid(format!(
            "image {h}x{w} is not a multiple of cell size {c}; pad height by {pad_h} and width by {pad_w}"
        )));
    }
    let (gx, gy) = gradients(img);
    let range = if cfg.signed { 360.0 } else { 180.0 };
    let bin_width = range / cfg.orientations as f64;
    let (cells_y, cells_x) = (h / c, w / c);
    let n = cfg.orientations;
    let mut hist = vec![0.0; cells_y * cells_x * n];
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (gx[y * w + x], gy[y * w + x]);
            let mag = (dx * dx + dy * dy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let angle = dy.atan2(dx).to_degrees().rem_euclid(range);
            let pos = angle / bin_width;
            let lower = pos.floor();
            let frac = pos - lower;
            let b0 = lower as usize % n;
            let b1 = (b0 + 1) % n;
            let cell = &mut hist[((y / c) * cells_x + x / c) * n..][..n];
            cell[b0] += mag * (1.0 - frac);
            cell[b1] += mag * frac;
        }
    }
    for cell in hist.chunks_exact_mut(n) {
        let norm = (cell.iter().map(|v| v * v).sum::<f64>() + HOG_EPSILON * HOG_EPSILON).sqrt();
        cell.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(hist)
}
