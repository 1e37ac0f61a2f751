//! Occlusion, saliency and Grad-CAM maps, and their rendering as overlays.

pub mod gradcam;
pub mod grid;
pub mod occlusion;
pub mod render;
pub mod saliency;

pub use gradcam::{grad_cam, grad_cam_tensor, CamMap};
pub use grid::Grid;
pub use occlusion::{grid_extent, occlude, occlusion_heatmap, OcclusionMap, OcclusionOptions, DEFAULT_WINDOW};
pub use render::{render_heatmap, Colormap, Heatmap, Upsample};
pub use saliency::{input_gradient, reduce_channels, saliency_map, target_score, SaliencyMap};
