use ndgrad::{GraphBuilder, Layer, NodeId, Scalar};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Squeeze (1×1) followed by parallel 1×1 and 3×3 expands, each with batchnorm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FireSpec {
    pub squeeze: usize,
    pub expand1: usize,
    pub expand3: usize,
    #[serde(default)]
    pub residual: bool,
}

impl FireSpec {
    pub fn new(squeeze: usize, expand1: usize, expand3: usize, residual: bool) -> Self {
        Self {
            squeeze,
            expand1,
            expand3,
            residual,
        }
    }

    pub fn output_depth(&self) -> usize {
        self.expand1 + self.expand3
    }

    pub fn validate(&self, input_depth: usize) -> Result<()> {
        if self.squeeze == 0 || self.expand1 == 0 || self.expand3 == 0 {
            return Err(invalid(format!("fire depths must be positive, got {self:?}")));
        }
        if self.residual && input_depth != self.output_depth() {
            return Err(invalid(format!(
                "residual fire needs input depth {} to equal expand depth {}",
                input_depth,
                self.output_depth()
            )));
        }
        Ok(())
    }

    /// Trainable parameter count (conv weights, biases, batchnorm scale and shift).
    pub fn param_count(&self, input_depth: usize) -> usize {
        let conv = |cin: usize, cout: usize, k: usize| cout * cin * k * k + cout;
        let bn = |c: usize| 2 * c;
        conv(input_depth, self.squeeze, 1)
            + bn(self.squeeze)
            + conv(self.squeeze, self.expand1, 1)
            + bn(self.expand1)
            + conv(self.squeeze, self.expand3, 3)
            + bn(self.expand3)
    }
}

fn conv_bn_relu<T: Scalar>(
    b: &mut GraphBuilder<T>,
    name: &str,
    layer: Layer,
    channels: usize,
    input: NodeId,
) -> Result<NodeId> {
    let conv = b.add(name, layer, &[input])?;
    let bn = b.add(format!("{name}_bn"), Layer::batchnorm(channels), &[conv])?;
    Ok(b.add(format!("{name}_relu"), Layer::Relu, &[bn])?)
}

/// Appends a fire module named `prefix` and returns its output node
/// (`prefix.residual` when residual, else `prefix.concat`).
pub fn build_fire<T: Scalar>(b: &mut GraphBuilder<T>, prefix: &str, spec: &FireSpec, input: NodeId) -> Result<NodeId> {
    let depth = b.shape(input)[0];
    spec.validate(depth)?;
    let squeeze = conv_bn_relu(
        b,
        &format!("{prefix}.squeeze"),
        Layer::conv(depth, spec.squeeze, 1, 1, 0),
        spec.squeeze,
        input,
    )?;
    let e1 = conv_bn_relu(
        b,
        &format!("{prefix}.expand1"),
        Layer::conv(spec.squeeze, spec.expand1, 1, 1, 0),
        spec.expand1,
        squeeze,
    )?;
    let e3 = conv_bn_relu(
        b,
        &format!("{prefix}.expand3"),
        Layer::conv(spec.squeeze, spec.expand3, 3, 1, 1),
        spec.expand3,
        squeeze,
    )?;
    let concat = b.add(format!("{prefix}.concat"), Layer::ConcatDepth, &[e1, e3])?;
    if spec.residual {
        Ok(b.add(format!("{prefix}.residual"), Layer::Add, &[input, concat])?)
    } else {
        Ok(concat)
    }
}
