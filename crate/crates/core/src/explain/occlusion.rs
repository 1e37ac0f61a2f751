use ndgrad::Scalar;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::Grid;
use crate::datakit::Image;
use crate::error::{invalid, Result};
use crate::models::{Head, PriceModel};

pub const DEFAULT_WINDOW: usize = 28;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcclusionOptions {
    pub window: usize,
    /// Defaults to the window size.
    pub stride: Option<usize>,
    /// Defaults to the model's training channel means.
    pub fill: Option<[f32; 3]>,
    /// Class whose probability is tracked for classification heads; defaults to the unoccluded prediction.
    pub class: Option<usize>,
    pub batch_size: usize,
}

impl Default for OcclusionOptions {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            stride: None,
            fill: None,
            class: None,
            batch_size: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcclusionMap {
    /// Occluded minus original prediction at each window position.
    pub grid: Grid,
    pub window: usize,
    pub stride: usize,
    pub base_prediction: f64,
    /// Tracked class for classification heads.
    pub class: Option<usize>,
}

pub fn grid_extent(side: usize, window: usize, stride: usize) -> usize {
    (side - window) / stride + 1
}

pub fn occlude(image: &Image, y0: usize, x0: usize, window: usize, fill: [f32; 3]) -> Image {
    let mut out = image.clone();
    for y in y0..(y0 + window).min(image.height()) {
        for x in x0..(x0 + window).min(image.width()) {
            out.set_pixel(y, x, fill);
        }
    }
    out
}

fn scores<T: Scalar>(model: &mut PriceModel<T>, images: &[&Image], class: Option<usize>, bs: usize) -> Result<Vec<f64>> {
    match (model.head(), class) {
        (Head::Reg, _) => model.predict_prices(images, bs),
        (Head::Class(_), Some(c)) => Ok(model.predict_proba(images, bs)?.into_iter().map(|p| p[c]).collect()),
        (Head::Class(_), None) => unreachable!("class resolved before scoring"),
    }
}

/// Prediction change as each window is replaced by the fill colour: price for
/// regression heads, probability of the tracked class for classifiers.
pub fn occlusion_heatmap<T: Scalar>(model: &PriceModel<T>, image: &Image, opts: &OcclusionOptions) -> Result<OcclusionMap> {
    let window = opts.window;
    let stride = opts.stride.unwrap_or(window);
    if window == 0 || stride == 0 {
        return Err(invalid("occlusion window and stride must be positive"));
    }
    if window > image.height().min(image.width()) {
        return Err(invalid(format!(
            "occlusion window {window} exceeds the {}x{} image",
            image.height(),
            image.width()
        )));
    }
    let fill = opts.fill.unwrap_or(model.meta.channel_means);
    let bs = opts.batch_size.max(1);
    let mut base_model = model.clone();
    let class = match model.head() {
        Head::Reg => None,
        Head::Class(k) => {
            let c = match opts.class {
                Some(c) => c,
                None => base_model.predict_classes(&[image], 1)?[0],
            };
            if c >= k {
                return Err(invalid(format!("class {c} outside the {k}-class head")));
            }
            Some(c)
        }
    };
    let base_prediction = scores(&mut base_model, &[image], class, 1)?[0];
    let gh = grid_extent(image.height(), window, stride);
    let gw = grid_extent(image.width(), window, stride);
    let positions: Vec<(usize, usize)> = (0..gh).flat_map(|r| (0..gw).map(move |c| (r, c))).collect();
    let chunks: Vec<Vec<f64>> = positions
        .par_chunks(bs)
        .map_init(
            || model.clone(),
            |m, chunk| {
                let occluded: Vec<Image> = chunk
                    .iter()
                    .map(|&(r, c)| occlude(image, r * stride, c * stride, window, fill))
                    .collect();
                let refs: Vec<&Image> = occluded.iter().collect();
                scores(m, &refs, class, bs)
            },
        )
        .collect::<Result<_>>()?;
    let values = chunks.into_iter().flatten().map(|v| v - base_prediction).collect();
    Ok(OcclusionMap {
        grid: Grid::new(gh, gw, values)?,
        window,
        stride,
        base_prediction,
        class,
    })
}
