//! Fire modules, the PriceNet family, head surgery, and the inference wrapper.

pub mod fire;
pub mod head;
pub mod price_model;
pub mod pricenet;

pub use fire::{build_fire, FireSpec};
pub use head::{attach_head, HeadSpec};
pub use price_model::{argmax, ModelMeta, PriceModel, TargetScaling};
pub use pricenet::{build_pricenet, last_fire_concat, Head, PriceNetSpec, Stage, FEATURE_NODE, PARAM_BUDGET};
