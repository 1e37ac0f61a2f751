//! The non-network comparison models, each a fitted feature pipeline that
//! persists as tagged JSON.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::metrics::{average_baseline, AverageBaseline};
use crate::classic::{linreg_fit, svm_fit_ovo, LinRegModel, SvmOneVsOne, SvmOptions};
use crate::datakit::Image;
use crate::error::{invalid, Error, Result};
use crate::features::{hog_matrix, pca_fit, HogConfig, PcaModel};
use crate::models::PriceModel;

/// PCA width capped by what the data can support.
pub fn pca_width(requested: usize, x: &DMatrix<f64>) -> usize {
    requested.min(x.nrows()).min(x.ncols()).max(1)
}

/// Linear regression on PCA-reduced features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaLinReg {
    pub pca: PcaModel,
    pub regression: LinRegModel,
}

impl PcaLinReg {
    pub fn fit(features: &DMatrix<f64>, prices: &[f64], dims: usize) -> Result<Self> {
        let pca = pca_fit(features, pca_width(dims, features))?;
        let regression = linreg_fit(&pca.transform(features)?, prices)?;
        Ok(Self { pca, regression })
    }

    pub fn predict(&self, features: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.regression.predict(&self.pca.transform(features)?)
    }
}

/// One-vs-one SVM on standardized PCA-reduced features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaSvm {
    pub pca: PcaModel,
    pub svm: SvmOneVsOne,
}

impl PcaSvm {
    pub fn fit(features: &DMatrix<f64>, labels: &[usize], dims: usize, opts: &SvmOptions) -> Result<Self> {
        let pca = pca_fit(features, pca_width(dims, features))?;
        let svm = svm_fit_ovo(&pca.transform(features)?, labels, opts, true)?;
        Ok(Self { pca, svm })
    }

    pub fn predict(&self, features: &DMatrix<f64>) -> Result<Vec<usize>> {
        Ok(self.svm.predict(&self.pca.transform(features)?).into_iter().map(|p| p.label).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassicModel {
    Average(AverageBaseline),
    LinregHog { hog: HogConfig, model: PcaLinReg },
    /// Features are activations of `layer` in a trained network supplied at prediction time.
    LinregCnn { layer: String, model: PcaLinReg },
    Svm { hog: HogConfig, model: PcaSvm },
}

impl ClassicModel {
    pub fn fit_average(prices: &[f64]) -> Result<Self> {
        Ok(Self::Average(average_baseline(prices)?))
    }

    pub fn fit_linreg_hog(images: &[&Image], prices: &[f64], hog: HogConfig, dims: usize) -> Result<Self> {
        let x = hog_matrix(images, &hog)?;
        Ok(Self::LinregHog {
            hog,
            model: PcaLinReg::fit(&x, prices, dims)?,
        })
    }

    pub fn fit_linreg_cnn(
        network: &mut PriceModel,
        layer: &str,
        images: &[&Image],
        prices: &[f64],
        dims: usize,
        batch_size: usize,
    ) -> Result<Self> {
        let x = network.features(layer, images, batch_size)?;
        Ok(Self::LinregCnn {
            layer: layer.to_string(),
            model: PcaLinReg::fit(&x, prices, dims)?,
        })
    }

    pub fn fit_svm(images: &[&Image], labels: &[usize], hog: HogConfig, dims: usize, opts: &SvmOptions) -> Result<Self> {
        let x = hog_matrix(images, &hog)?;
        Ok(Self::Svm {
            hog,
            model: PcaSvm::fit(&x, labels, dims, opts)?,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Average(_) => "Average Baseline",
            Self::LinregHog { .. } => "LinReg (HOG Features)",
            Self::LinregCnn { .. } => "LinReg (CNN Features)",
            Self::Svm { .. } => "SVM (HOG Features)",
        }
    }

    pub fn is_classifier(&self) -> bool {
        matches!(self, Self::Svm { .. })
    }

    /// Price predictions; `network` is required only for CNN features.
    pub fn predict_prices(&self, images: &[&Image], network: Option<&mut PriceModel>, batch_size: usize) -> Result<Vec<f64>> {
        match self {
            Self::Average(m) => Ok(m.predict(images.len())),
            Self::LinregHog { hog, model } => model.predict(&hog_matrix(images, hog)?),
            Self::LinregCnn { layer, model } => {
                let net = network.ok_or_else(|| invalid("CNN-feature regression needs the network it was fitted on"))?;
                model.predict(&net.features(layer, images, batch_size)?)
            }
            Self::Svm { .. } => Err(invalid("the SVM predicts segments, not prices")),
        }
    }

    pub fn predict_classes(&self, images: &[&Image]) -> Result<Vec<usize>> {
        match self {
            Self::Svm { hog, model } => model.predict(&hog_matrix(images, hog)?),
            _ => Err(invalid(format!("{} predicts prices, not segments", self.name()))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}
