//! The run configuration schema, read from TOML. Every section and field is
//! optional; missing values take the defaults below.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classic::svm::{DEFAULT_C, DEFAULT_GAMMA};
use crate::classic::{Kernel, SvmOptions};
use crate::datakit::split::DEFAULT_TRAIN_FRACTION;
use crate::error::{invalid, Error, Result};
use crate::explain::DEFAULT_WINDOW;
use crate::features::{HogConfig, CNN_PCA_DIMS, HOG_PCA_DIMS};
use crate::models::{Head, PriceNetSpec, FEATURE_NODE};
use crate::trainer::TrainConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub baseline: BaselineConfig,
    pub explain: ExplainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_fraction: f64,
    pub split_seed: u64,
    /// Percentile cutoffs for price segments, ending at 100.
    pub segment_cutoffs: Vec<f64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_fraction: DEFAULT_TRAIN_FRACTION,
            split_seed: 0,
            segment_cutoffs: vec![25.0, 50.0, 75.0, 100.0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// 64-pixel input, one pool fewer.
    Desk,
    /// 224-pixel input.
    Paper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub layout: Layout,
    /// Defaults to 0.5 for the desk layout and the budget-matching value for the paper layout.
    pub width_multiplier: Option<f64>,
    /// Weight initialization seed.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layout: Layout::Desk,
            width_multiplier: None,
            seed: 0,
        }
    }
}

pub const DESK_WIDTH_MULTIPLIER: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Rbf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub hog_cell_size: usize,
    pub hog_orientations: usize,
    pub hog_pca_dims: usize,
    pub cnn_layer: String,
    pub cnn_pca_dims: usize,
    pub svm_c: f64,
    pub svm_kernel: KernelKind,
    pub svm_gamma: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            hog_cell_size: 8,
            hog_orientations: HogConfig::default().orientations,
            hog_pca_dims: HOG_PCA_DIMS,
            cnn_layer: FEATURE_NODE.into(),
            cnn_pca_dims: CNN_PCA_DIMS,
            svm_c: DEFAULT_C,
            svm_kernel: KernelKind::Rbf,
            svm_gamma: DEFAULT_GAMMA,
        }
    }
}

impl BaselineConfig {
    pub fn hog(&self) -> HogConfig {
        HogConfig {
            cell_size: self.hog_cell_size,
            orientations: self.hog_orientations,
            ..HogConfig::default()
        }
    }

    pub fn svm(&self) -> SvmOptions {
        SvmOptions {
            c: self.svm_c,
            kernel: match self.svm_kernel {
                KernelKind::Linear => Kernel::Linear,
                KernelKind::Rbf => Kernel::Rbf { gamma: self.svm_gamma },
            },
            ..SvmOptions::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub window: usize,
    pub stride: Option<usize>,
    /// Grad-CAM layer; defaults to the last fire module's concat.
    pub layer: Option<String>,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            stride: None,
            layer: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return Err(invalid(format!("train fraction must lie in (0, 1), got {}", self.data.train_fraction)));
        }
        if self.baseline.hog_pca_dims == 0 || self.baseline.cnn_pca_dims == 0 {
            return Err(invalid("PCA dimensions must be positive"));
        }
        if self.explain.window == 0 || self.explain.stride == Some(0) {
            return Err(invalid("occlusion window and stride must be positive"));
        }
        self.network(Head::Reg).validate()
    }

    /// The network layout for `head`, with dropout and hidden width taken from the training section.
    pub fn network(&self, head: Head) -> PriceNetSpec {
        let mut spec = match self.model.layout {
            Layout::Desk => PriceNetSpec::desk(head, self.model.width_multiplier.unwrap_or(DESK_WIDTH_MULTIPLIER)),
            Layout::Paper => {
                let mut s = PriceNetSpec::paper(head);
                if let Some(m) = self.model.width_multiplier {
                    s.width_multiplier = m;
                }
                s
            }
        };
        spec.dropout = self.train.dropout_p;
        spec.hidden_units = self.train.hidden_units;
        spec
    }
}
