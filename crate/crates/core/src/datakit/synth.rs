//! Deterministic side-view product renderer with a known log-linear price.
//!
//! Geometry is laid out on a 64-pixel canvas and scaled to the requested side.
//! `ln price = ln 120 + 0.45·(thickness−1) + 0.2·(radius−8) + 0.08·(spokes−2)
//! + color_coef − 0.9·accessory`, then multiplied by `1 + ε` with `|ε| ≤ noise`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image::Image;
use super::manifest::{DatasetManifest, ManifestEntry, Sample};
use crate::error::{Error, Result};

pub const BASE_PRICE: f64 = 120.0;
pub const THICKNESS_COEF: f64 = 0.45;
pub const RADIUS_COEF: f64 = 0.2;
pub const SPOKE_COEF: f64 = 0.08;
pub const COLOR_COEF: [f64; 4] = [0.0, 0.25, 0.5, 0.8];
pub const ACCESSORY_COEF: f64 = -0.9;
pub const DEFAULT_NOISE: f64 = 0.02;
pub const DEFAULT_ACCESSORY_RATE: f64 = 0.3;

pub const THICKNESS_RANGE: (u8, u8) = (1, 4);
pub const RADIUS_RANGE: (u8, u8) = (8, 12);
pub const SPOKE_RANGE: (u8, u8) = (2, 8);

const CANVAS: f64 = 64.0;
const PALETTE: [[f32; 3]; 4] = [[0.45, 0.45, 0.45], [0.15, 0.30, 0.75], [0.80, 0.15, 0.15], [0.85, 0.65, 0.10]];
const TIRE: [f32; 3] = [0.08, 0.08, 0.08];
const SPOKE: [f32; 3] = [0.55, 0.55, 0.55];
const ACCESSORY: [f32; 3] = [0.20, 0.20, 0.20];

/// Generative attributes of one rendered product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductAttributes {
    pub frame_thickness: u8,
    pub wheel_radius: u8,
    pub spokes: u8,
    pub color: u8,
    pub accessory: bool,
    /// Canvas offsets of the product center, in 64-canvas pixels.
    pub offset_x: i8,
    pub offset_y: i8,
    pub spoke_phase: f64,
    pub background: f32,
}

impl ProductAttributes {
    pub fn log_price(&self) -> f64 {
        BASE_PRICE.ln()
            + THICKNESS_COEF * (self.frame_thickness as f64 - THICKNESS_RANGE.0 as f64)
            + RADIUS_COEF * (self.wheel_radius as f64 - RADIUS_RANGE.0 as f64)
            + SPOKE_COEF * (self.spokes as f64 - SPOKE_RANGE.0 as f64)
            + COLOR_COEF[self.color as usize]
            + if self.accessory { ACCESSORY_COEF } else { 0.0 }
    }

    /// Noise-free price.
    pub fn base_price(&self) -> f64 {
        self.log_price().exp()
    }

    fn sample(rng: &mut ChaCha8Rng, accessory_rate: f64) -> Self {
        Self {
            frame_thickness: rng.gen_range(THICKNESS_RANGE.0..=THICKNESS_RANGE.1),
            wheel_radius: rng.gen_range(RADIUS_RANGE.0..=RADIUS_RANGE.1),
            spokes: rng.gen_range(SPOKE_RANGE.0..=SPOKE_RANGE.1),
            color: rng.gen_range(0..COLOR_COEF.len() as u8),
            accessory: rng.gen_bool(accessory_rate),
            offset_x: rng.gen_range(-3..=3),
            offset_y: rng.gen_range(-2..=2),
            spoke_phase: rng.gen_range(0.0..std::f64::consts::PI),
            background: rng.gen_range(0.85..0.97),
        }
    }
}

/// Axis-aligned pixel box, inclusive of `x0, y0` and exclusive of `x1, y1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BoundingBox {
    pub fn intersects(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> bool {
        self.x0 < x1 && x0 < self.x1 && self.y0 < y1 && y0 < self.y1
    }

    fn scaled(self, f: f64) -> Self {
        Self {
            x0: self.x0 * f,
            y0: self.y0 * f,
            x1: self.x1 * f,
            y1: self.y1 * f,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    pub image_side: usize,
    /// Bound on relative price noise.
    pub noise: f64,
    pub accessory_rate: f64,
}

impl SynthConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            image_side: 64,
            noise: DEFAULT_NOISE,
            accessory_rate: DEFAULT_ACCESSORY_RATE,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthSample {
    pub id: String,
    pub attributes: ProductAttributes,
    pub noise: f64,
    pub price: f64,
    pub image: Image,
    pub product_box: BoundingBox,
    pub accessory_box: Option<BoundingBox>,
}

#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub samples: Vec<SynthSample>,
}

pub fn synth_generate(cfg: &SynthConfig) -> SynthDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples = (0..cfg.n)
        .map(|i| {
            let attributes = ProductAttributes::sample(&mut rng, cfg.accessory_rate);
            let noise = if cfg.noise > 0.0 { rng.gen_range(-cfg.noise..=cfg.noise) } else { 0.0 };
            let rendered = render_product(&attributes, cfg.image_side);
            SynthSample {
                id: format!("s{i:05}"),
                price: attributes.base_price() * (1.0 + noise),
                noise,
                attributes,
                image: rendered.image,
                product_box: rendered.product_box,
                accessory_box: rendered.accessory_box,
            }
        })
        .collect();
    SynthDataset {
        config: cfg.clone(),
        samples,
    }
}

impl SynthDataset {
    pub fn to_samples(&self) -> Vec<Sample> {
        self.samples
            .iter()
            .map(|s| Sample {
                id: s.id.clone(),
                image: s.image.clone(),
                price: s.price,
                segment: None,
            })
            .collect()
    }

    pub fn manifest(&self, image_root: &Path) -> DatasetManifest {
        let entries = self
            .samples
            .iter()
            .map(|s| ManifestEntry::new(&s.id, format!("images/{}.png", s.id), s.price))
            .collect();
        DatasetManifest::new(entries, image_root, self.config.image_side).expect("generated ids are unique")
    }

    /// Writes `images/*.png`, `manifest.csv`, and `attributes.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<DatasetManifest> {
        let images = dir.join("images");
        fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
        for s in &self.samples {
            s.image.save_png(&images.join(format!("{}.png", s.id)))?;
        }
        let manifest = self.manifest(dir);
        manifest.write_csv(&dir.join("manifest.csv"))?;
        let attr_path = dir.join("attributes.csv");
        let mut w = csv::Writer::from_path(&attr_path)?;
        w.write_record([
            "id",
            "frame_thickness",
            "wheel_radius",
            "spokes",
            "color",
            "accessory",
            "offset_x",
            "offset_y",
            "spoke_phase",
            "background",
            "noise",
            "base_price",
            "price",
            "accessory_x0",
            "accessory_y0",
            "accessory_x1",
            "accessory_y1",
        ])?;
        for s in &self.samples {
            let a = &s.attributes;
            let bbox = s
                .accessory_box
                .map(|b| [b.x0, b.y0, b.x1, b.y1].map(|v| v.to_string()))
                .unwrap_or_else(|| std::array::from_fn(|_| String::new()));
            let mut row = vec![
                s.id.clone(),
                a.frame_thickness.to_string(),
                a.wheel_radius.to_string(),
                a.spokes.to_string(),
                a.color.to_string(),
                (a.accessory as u8).to_string(),
                a.offset_x.to_string(),
                a.offset_y.to_string(),
                a.spoke_phase.to_string(),
                a.background.to_string(),
                s.noise.to_string(),
                a.base_price().to_string(),
                s.price.to_string(),
            ];
            row.extend(bbox);
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(&attr_path, e))?;
        Ok(manifest)
    }
}

pub struct Rendered {
    pub image: Image,
    pub product_box: BoundingBox,
    pub accessory_box: Option<BoundingBox>,
}

enum Shape {
    Segment { a: (f64, f64), b: (f64, f64), half: f64 },
    Ring { c: (f64, f64), r: f64, half: f64 },
    Disk { c: (f64, f64), r: f64 },
}

impl Shape {
    fn distance(&self, p: (f64, f64)) -> f64 {
        match *self {
            Shape::Segment { a, b, half } => {
                let (dx, dy) = (b.0 - a.0, b.1 - a.1);
                let len2 = dx * dx + dy * dy;
                let t = if len2 > 0.0 {
                    (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
                ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt() - half
            }
            Shape::Ring { c, r, half } => (((p.0 - c.0).powi(2) + (p.1 - c.1).powi(2)).sqrt() - r).abs() - half,
            Shape::Disk { c, r } => ((p.0 - c.0).powi(2) + (p.1 - c.1).powi(2)).sqrt() - r,
        }
    }

    fn extent(&self) -> (f64, f64, f64, f64) {
        match *self {
            Shape::Segment { a, b, half } => (
                a.0.min(b.0) - half,
                a.1.min(b.1) - half,
                a.0.max(b.0) + half,
                a.1.max(b.1) + half,
            ),
            Shape::Ring { c, r, half } => (c.0 - r - half, c.1 - r - half, c.0 + r + half, c.1 + r + half),
            Shape::Disk { c, r } => (c.0 - r, c.1 - r, c.0 + r, c.1 + r),
        }
    }
}

/// Anti-aliased fill: coverage falls off linearly over one pixel at the edge.
fn paint(img: &mut Image, shape: &Shape, color: [f32; 3]) {
    let (x0, y0, x1, y1) = shape.extent();
    let (h, w) = (img.height() as i64, img.width() as i64);
    let ys = ((y0 - 1.0).floor() as i64).max(0)..=((y1 + 1.0).ceil() as i64).min(h - 1);
    for y in ys {
        for x in ((x0 - 1.0).floor() as i64).max(0)..=((x1 + 1.0).ceil() as i64).min(w - 1) {
            let d = shape.distance((x as f64 + 0.5, y as f64 + 0.5));
            let alpha = (0.5 - d).clamp(0.0, 1.0) as f32;
            if alpha > 0.0 {
                let old = img.pixel(y as usize, x as usize);
                let new = std::array::from_fn(|k| color[k] * alpha + old[k] * (1.0 - alpha));
                img.set_pixel(y as usize, x as usize, new);
            }
        }
    }
}

pub fn render_product(a: &ProductAttributes, side: usize) -> Rendered {
    let f = side as f64 / CANVAS;
    let s = |p: (f64, f64)| (p.0 * f, p.1 * f);
    let cx = 32.0 + a.offset_x as f64;
    let cy = 40.0 + a.offset_y as f64;
    let r = a.wheel_radius as f64;
    let rear = (cx - 15.0, cy);
    let front = (cx + 15.0, cy);
    let bracket = (cx - 2.0, cy);
    let seat = (cx - 6.0, cy - 16.0);
    let head = (cx + 10.0, cy - 15.0);
    let bar = (head.0 + 2.0, head.1 - 4.0);
    let frame_half = a.frame_thickness as f64 / 2.0;

    let mut img = Image::filled(side, side, [a.background; 3]);
    for hub in [rear, front] {
        for k in 0..a.spokes {
            let t = a.spoke_phase + std::f64::consts::PI * 2.0 * k as f64 / a.spokes as f64;
            let rim = (hub.0 + r * t.cos(), hub.1 + r * t.sin());
            paint(&mut img, &Shape::Segment { a: s(hub), b: s(rim), half: 0.4 * f }, SPOKE);
        }
        paint(&mut img, &Shape::Ring { c: s(hub), r: r * f, half: 0.9 * f }, TIRE);
        paint(&mut img, &Shape::Disk { c: s(hub), r: 1.5 * f }, TIRE);
    }
    let color = PALETTE[a.color as usize];
    for (p, q) in [(rear, bracket), (rear, seat), (seat, bracket), (seat, head), (head, bracket), (head, front)] {
        paint(&mut img, &Shape::Segment { a: s(p), b: s(q), half: frame_half * f }, color);
    }
    paint(&mut img, &Shape::Segment { a: s(head), b: s(bar), half: 0.75 * f }, TIRE);
    paint(
        &mut img,
        &Shape::Segment {
            a: s((seat.0 - 3.0, seat.1 - 1.5)),
            b: s((seat.0 + 3.0, seat.1 - 1.5)),
            half: 1.0 * f,
        },
        TIRE,
    );

    let mut product = BoundingBox {
        x0: rear.0 - r - 1.5,
        y0: bar.1 - 1.5,
        x1: front.0 + r + 1.5,
        y1: cy + r + 1.5,
    };
    let accessory_box = a.accessory.then(|| {
        let c = (rear.0 - 3.0, cy + r - 2.0);
        paint(&mut img, &Shape::Segment { a: s((c.0, c.1 - 6.0)), b: s(c), half: 0.75 * f }, ACCESSORY);
        paint(&mut img, &Shape::Ring { c: s(c), r: 2.5 * f, half: 0.9 * f }, ACCESSORY);
        paint(&mut img, &Shape::Disk { c: s(c), r: 1.0 * f }, ACCESSORY);
        let b = BoundingBox {
            x0: c.0 - 4.0,
            y0: c.1 - 7.0,
            x1: c.0 + 4.0,
            y1: c.1 + 4.0,
        };
        product.y1 = product.y1.max(b.y1);
        b.scaled(f)
    });
    img.quantize();
    Rendered {
        image: img,
        product_box: product.scaled(f),
        accessory_box,
    }
}
