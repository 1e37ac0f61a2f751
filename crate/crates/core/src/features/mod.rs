//! HOG and PCA feature pipelines, plus activations of trained networks as features.

pub mod cnn;
pub mod hog;
pub mod io;
pub mod pca;

use nalgebra::DMatrix;

pub use cnn::cnn_feature_extract;
pub use hog::{hog_extract, HogConfig};
pub use io::{read_matrix_csv, read_matrix_raw, write_matrix_csv, write_matrix_raw};
pub use pca::{pca_fit, pca_transform, PcaModel, CNN_PCA_DIMS, HOG_PCA_DIMS};

use crate::datakit::Image;
use crate::error::Result;

/// HOG of each image's luminance, one row per image.
pub fn hog_matrix(images: &[&Image], cfg: &HogConfig) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = images
        .iter()
        .map(|img| hog_extract(&img.to_gray(), cfg))
        .collect::<Result<_>>()?;
    let cols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_row_iterator(rows.len(), cols, rows.into_iter().flatten()))
}
