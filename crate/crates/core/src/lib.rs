//! Image-based price prediction: classical baselines, fire-module networks,
//! training and evaluation, and explanation maps.

pub mod classic;
pub mod config;
pub mod datakit;
pub mod error;
pub mod explain;
pub mod features;
pub mod models;
pub mod trainer;

pub use error::{Error, Result};
