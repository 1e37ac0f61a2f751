use std::path::Path;

use nalgebra::DMatrix;
use ndgrad::{load_checkpoint, save_checkpoint, Graph, Mode, Scalar, Tensor};
use serde::{Deserialize, Serialize};

use super::pricenet::{build_pricenet, Head, PriceNetSpec};
use crate::datakit::{Image, SegmentScheme};
use crate::error::{invalid, Error, Result};
use crate::features::cnn_feature_extract;

/// Affine map between prices and the network's regression output:
/// `price = mean + scale · output`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetScaling {
    pub mean: f64,
    pub scale: f64,
}

impl TargetScaling {
    pub const IDENTITY: Self = Self { mean: 0.0, scale: 1.0 };

    /// Centers on the training mean and divides by the training standard deviation.
    pub fn from_prices(prices: &[f64]) -> Self {
        let n = prices.len() as f64;
        let mean = prices.iter().sum::<f64>() / n;
        let var = prices.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        Self { mean, scale }
    }

    pub fn encode(&self, price: f64) -> f64 {
        (price - self.mean) / self.scale
    }

    pub fn decode(&self, output: f64) -> f64 {
        self.mean + self.scale * output
    }
}

/// Everything needed to turn images into predictions, beyond the graph itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub kind: String,
    pub head: Head,
    pub channel_means: [f32; 3],
    pub target: TargetScaling,
    #[serde(default)]
    pub segments: Option<SegmentScheme>,
    #[serde(default)]
    pub spec: Option<PriceNetSpec>,
}

pub const MODEL_KIND: &str = "pricenet";

/// A network plus its input normalization and output decoding.
pub struct PriceModel<T = f32> {
    pub graph: Graph<T>,
    pub meta: ModelMeta,
}

impl<T: Scalar> Clone for PriceModel<T> {
    fn clone(&self) -> Self {
        Self {
            graph: self.graph.clone(),
            meta: self.meta.clone(),
        }
    }
}

impl<T: Scalar> PriceModel<T> {
    pub fn new(graph: Graph<T>, head: Head, channel_means: [f32; 3]) -> Result<Self> {
        let out = graph.output_shape();
        if out != [head.output_units()] {
            return Err(invalid(format!("graph output {out:?} does not match head {head:?}")));
        }
        Ok(Self {
            graph,
            meta: ModelMeta {
                kind: MODEL_KIND.into(),
                head,
                channel_means,
                target: TargetScaling::IDENTITY,
                segments: None,
                spec: None,
            },
        })
    }

    /// Fresh network from a layout, with the layout recorded in the metadata.
    pub fn from_spec(spec: &PriceNetSpec, seed: u64) -> Result<Self> {
        let graph = build_pricenet(spec, seed)?;
        let mut model = Self::new(graph, spec.head, [0.5; 3])?;
        model.meta.spec = Some(spec.clone());
        Ok(model)
    }

    pub fn head(&self) -> Head {
        self.meta.head
    }

    pub fn input_side(&self) -> (usize, usize) {
        let s = self.graph.input_shape();
        (s[1], s[2])
    }

    /// Mean-subtracted NCHW batch.
    pub fn batch_tensor(&self, images: &[&Image]) -> Result<Tensor<T>> {
        let (h, w) = self.input_side();
        let mut data = Vec::with_capacity(images.len() * 3 * h * w);
        for img in images {
            if (img.height(), img.width()) != (h, w) {
                return Err(Error::Dimension(format!(
                    "model expects {h}x{w} images, got {}x{}",
                    img.height(),
                    img.width()
                )));
            }
            data.extend(img.to_chw(self.meta.channel_means).into_iter().map(|v| T::from_f64_lossy(v as f64)));
        }
        Ok(Tensor::new(vec![images.len(), 3, h, w], data)?)
    }

    /// Eval-mode raw network outputs, one row per image.
    pub fn outputs(&mut self, images: &[&Image], batch_size: usize) -> Result<Vec<Vec<f64>>> {
        let mut rows = Vec::with_capacity(images.len());
        for chunk in images.chunks(batch_size.max(1)) {
            let x = self.batch_tensor(chunk)?;
            let y = self.graph.forward(&x, Mode::Eval)?;
            let width = y.len() / chunk.len();
            rows.extend(
                y.data()
                    .chunks_exact(width)
                    .map(|r| r.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect()),
            );
        }
        Ok(rows)
    }

    /// Prices in currency units (regression head).
    pub fn predict_prices(&mut self, images: &[&Image], batch_size: usize) -> Result<Vec<f64>> {
        if self.meta.head != Head::Reg {
            return Err(invalid("price prediction needs a regression head"));
        }
        let t = self.meta.target;
        Ok(self.outputs(images, batch_size)?.into_iter().map(|r| t.decode(r[0])).collect())
    }

    /// Class probabilities (classification head).
    pub fn predict_proba(&mut self, images: &[&Image], batch_size: usize) -> Result<Vec<Vec<f64>>> {
        if !matches!(self.meta.head, Head::Class(_)) {
            return Err(invalid("class prediction needs a classification head"));
        }
        self.outputs(images, batch_size)
    }

    pub fn predict_classes(&mut self, images: &[&Image], batch_size: usize) -> Result<Vec<usize>> {
        Ok(self.predict_proba(images, batch_size)?.iter().map(|p| argmax(p)).collect())
    }

    /// Flattened activations of `layer`, one row per image.
    pub fn features(&mut self, layer: &str, images: &[&Image], batch_size: usize) -> Result<DMatrix<f64>> {
        self.graph.node_id(layer)?;
        let mut blocks = Vec::new();
        for chunk in images.chunks(batch_size.max(1)) {
            let x = self.batch_tensor(chunk)?;
            blocks.push(cnn_feature_extract(&mut self.graph, layer, &x)?);
        }
        let cols = blocks.first().map_or(0, |b| b.ncols());
        let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
        let mut out = DMatrix::zeros(rows, cols);
        let mut r = 0;
        for b in blocks {
            out.rows_mut(r, b.nrows()).copy_from(&b);
            r += b.nrows();
        }
        Ok(out)
    }

    pub fn cast<U: Scalar>(&self) -> PriceModel<U> {
        PriceModel {
            graph: self.graph.cast(),
            meta: self.meta.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::to_value(&self.meta)?;
        Ok(save_checkpoint(path, &self.graph, &meta)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (graph, manifest) = load_checkpoint::<T>(path)?;
        let meta: ModelMeta = serde_json::from_value(manifest.metadata)
            .map_err(|e| invalid(format!("{}: not a price model checkpoint ({e})", path.display())))?;
        if meta.kind != MODEL_KIND {
            return Err(invalid(format!("{}: checkpoint kind {:?} is not {MODEL_KIND:?}", path.display(), meta.kind)));
        }
        Ok(Self { graph, meta })
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > values[best] { i } else { best })
}
