use ndgrad::mix_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image::Image;
use crate::error::{invalid, Result};

/// Enabled transforms and their ranges. A `None` range disables that transform.
/// When deserialized, transforms missing from the document are off.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default = "AugmentConfig::disabled", deny_unknown_fields)]
pub struct AugmentConfig {
    /// Largest crop per side, as a fraction of the side; the crop is resized back.
    pub crop: Option<f64>,
    /// Horizontal flip with probability 1/2.
    pub flip: bool,
    pub scale: Option<(f64, f64)>,
    /// Largest shift per axis, as a fraction of the side.
    pub translate: Option<f64>,
    pub rotate_deg: Option<f64>,
    pub blur_sigma: Option<(f64, f64)>,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            crop: Some(0.1),
            flip: true,
            scale: Some((0.9, 1.1)),
            translate: Some(0.1),
            rotate_deg: Some(10.0),
            blur_sigma: Some((0.0, 1.5)),
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self {
            crop: None,
            flip: false,
            scale: None,
            translate: None,
            rotate_deg: None,
            blur_sigma: None,
            seed: 0,
        }
    }

    pub fn is_enabled(&self) -> bool {
        *self != Self { seed: self.seed, ..Self::disabled() }
    }

    pub fn validate(&self) -> Result<()> {
        let range_ok = |r: Option<(f64, f64)>, lo: f64| r.is_none_or(|(a, b)| a >= lo && a <= b && b.is_finite());
        if self.crop.is_some_and(|c| !(0.0..0.5).contains(&c)) {
            return Err(invalid(format!("crop fraction must lie in [0, 0.5), got {:?}", self.crop)));
        }
        if !range_ok(self.scale, f64::MIN_POSITIVE) {
            return Err(invalid(format!("scale range must be positive and ordered, got {:?}", self.scale)));
        }
        if !range_ok(self.blur_sigma, 0.0) {
            return Err(invalid(format!("blur range must be nonnegative and ordered, got {:?}", self.blur_sigma)));
        }
        if self.translate.is_some_and(|t| !(0.0..1.0).contains(&t)) {
            return Err(invalid(format!("translate fraction must lie in [0, 1), got {:?}", self.translate)));
        }
        if self.rotate_deg.is_some_and(|r| !(0.0..=180.0).contains(&r)) {
            return Err(invalid(format!("rotation bound must lie in [0, 180], got {:?}", self.rotate_deg)));
        }
        Ok(())
    }
}

/// Concrete parameters for one augmentation.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentDraw {
    /// Left, right, top, bottom crop fractions.
    pub crop: [f64; 4],
    pub flip: bool,
    pub scale: f64,
    /// Shift in pixels (x, y).
    pub translate: (f64, f64),
    pub angle_deg: f64,
    pub blur_sigma: f64,
}

impl AugmentDraw {
    pub fn identity() -> Self {
        Self {
            crop: [0.0; 4],
            flip: false,
            scale: 1.0,
            translate: (0.0, 0.0),
            angle_deg: 0.0,
            blur_sigma: 0.0,
        }
    }

    fn is_geometric_identity(&self) -> bool {
        self.crop == [0.0; 4] && self.scale == 1.0 && self.translate == (0.0, 0.0) && self.angle_deg == 0.0
    }
}

/// Stable 64-bit FNV-1a hash of a sample id.
pub fn hash_id(id: &str) -> u64 {
    id.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Per-sample draw seed, independent of batch order or worker count.
pub fn sample_seed(global: u64, id: &str, epoch: u64) -> u64 {
    mix_seed(mix_seed(global, hash_id(id)), epoch)
}

pub fn draw(cfg: &AugmentConfig, draw_seed: u64, side: (usize, usize)) -> AugmentDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, draw_seed));
    let mut d = AugmentDraw::identity();
    if let Some(c) = cfg.crop {
        d.crop = std::array::from_fn(|_| if c > 0.0 { rng.gen_range(0.0..=c) } else { 0.0 });
    }
    if cfg.flip {
        d.flip = rng.gen_bool(0.5);
    }
    if let Some((lo, hi)) = cfg.scale {
        d.scale = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    }
    if let Some(t) = cfg.translate {
        if t > 0.0 {
            let tx = rng.gen_range(-t..=t) * side.1 as f64;
            let ty = rng.gen_range(-t..=t) * side.0 as f64;
            d.translate = (tx, ty);
        }
    }
    if let Some(r) = cfg.rotate_deg {
        if r > 0.0 {
            d.angle_deg = rng.gen_range(-r..=r);
        }
    }
    if let Some((lo, hi)) = cfg.blur_sigma {
        d.blur_sigma = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    }
    d
}

/// Draws parameters for `draw_seed` and applies them. Uncovered border pixels take `fill`.
pub fn augment(image: &Image, cfg: &AugmentConfig, draw_seed: u64, fill: [f32; 3]) -> Image {
    let d = draw(cfg, draw_seed, (image.height(), image.width()));
    apply(image, &d, fill)
}

/// Flip, then one combined crop/scale/rotate/translate warp, then blur.
pub fn apply(image: &Image, d: &AugmentDraw, fill: [f32; 3]) -> Image {
    let mut out = if d.flip { image.flip_horizontal() } else { image.clone() };
    if !d.is_geometric_identity() {
        out = warp(&out, d, fill);
    }
    if d.blur_sigma >= MIN_BLUR_SIGMA {
        out = gaussian_blur(&out, d.blur_sigma);
    }
    out.clamp01();
    out
}

/// Below this the blur kernel is indistinguishable from a delta.
pub const MIN_BLUR_SIGMA: f64 = 0.05;

/// Inverse-maps each output pixel through translate → rotate → scale → crop and samples bilinearly.
fn warp(image: &Image, d: &AugmentDraw, fill: [f32; 3]) -> Image {
    let (h, w) = (image.height() as f64, image.width() as f64);
    let [left, right, top, bottom] = d.crop;
    let (x0, y0) = (left * w, top * h);
    let (cw, ch) = ((1.0 - left - right) * w, (1.0 - top - bottom) * h);
    let (sin, cos) = d.angle_deg.to_radians().sin_cos();
    let mut out = image.clone();
    for y in 0..image.height() {
        for x in 0..image.width() {
            let u = x as f64 + 0.5 - w / 2.0 - d.translate.0;
            let v = y as f64 + 0.5 - h / 2.0 - d.translate.1;
            let u2 = (cos * u + sin * v) / d.scale;
            let v2 = (-sin * u + cos * v) / d.scale;
            let sx = x0 + (u2 + w / 2.0) * cw / w - 0.5;
            let sy = y0 + (v2 + h / 2.0) * ch / h - 0.5;
            let inside = sx >= -0.5 && sx <= w - 0.5 && sy >= -0.5 && sy <= h - 0.5;
            let px = if inside { image.sample_bilinear(sy as f32, sx as f32) } else { fill };
            out.set_pixel(y, x, px);
        }
    }
    out
}

/// Rotation about the image center by `deg` (counterclockwise on screen for positive angles).
pub fn rotate(image: &Image, deg: f64, fill: [f32; 3]) -> Image {
    let d = AugmentDraw {
        angle_deg: deg,
        ..AugmentDraw::identity()
    };
    let mut out = warp(image, &d, fill);
    out.clamp01();
    out
}

pub fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| (v / total) as f32).collect()
}

/// Separable normalized Gaussian with edge replication.
pub fn gaussian_blur(image: &Image, sigma: f64) -> Image {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (h, w) = (image.height() as isize, image.width() as isize);
    let mut tmp = image.clone();
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f32; 3];
            for (i, kv) in k.iter().enumerate() {
                let sx = (x + i as isize - r).clamp(0, w - 1);
                let p = image.pixel(y as usize, sx as usize);
                (0..3).for_each(|c| acc[c] += kv * p[c]);
            }
            tmp.set_pixel(y as usize, x as usize, acc);
        }
    }
    let mut out = tmp.clone();
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f32; 3];
            for (i, kv) in k.iter().enumerate() {
                let sy = (y + i as isize - r).clamp(0, h - 1);
                let p = tmp.pixel(sy as usize, x as usize);
                (0..3).for_each(|c| acc[c] += kv * p[c]);
            }
            out.set_pixel(y as usize, x as usize, acc);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_seeded() {
        let cfg = AugmentConfig::default();
        assert_eq!(draw(&cfg, 5, (32, 32)), draw(&cfg, 5, (32, 32)));
        assert_ne!(draw(&cfg, 5, (32, 32)), draw(&cfg, 6, (32, 32)));
    }

    #[test]
    fn disabled_config_draws_identity() {
        assert_eq!(draw(&AugmentConfig::disabled(), 9, (8, 8)), AugmentDraw::identity());
        assert!(!AugmentConfig::disabled().is_enabled());
        assert!(AugmentConfig::default().is_enabled());
    }

    #[test]
    fn kernel_is_normalized() {
        for s in [0.3, 1.0, 1.5] {
            let sum: f32 = gaussian_kernel(s).iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn sample_seed_depends_on_all_parts() {
        let a = sample_seed(1, "x", 0);
        assert_ne!(a, sample_seed(2, "x", 0));
        assert_ne!(a, sample_seed(1, "y", 0));
        assert_ne!(a, sample_seed(1, "x", 1));
    }
}
