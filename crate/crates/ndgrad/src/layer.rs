use serde::{Deserialize, Serialize};

use crate::error::{NdError, Result};

/// A differentiable layer. Shapes exclude the leading batch axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Input {
        shape: Vec<usize>,
    },
    /// Zero-padded cross-correlation with bias. Weight is `(out, in, k, k)`.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    BatchNorm2d {
        channels: usize,
        momentum: f64,
        epsilon: f64,
    },
    Relu,
    MaxPool2d {
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    GlobalAvgPool,
    /// Weight is `(out, in)`.
    Dense {
        in_features: usize,
        out_features: usize,
    },
    ConcatDepth,
    Add,
    Softmax,
    /// Inverted dropout: survivors are scaled by `1/(1-p)` at train time.
    Dropout {
        p: f64,
    },
    Flatten,
}

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPSILON: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Glorot { fan_in: usize, fan_out: usize },
    Zeros,
    Ones,
}

#[derive(Clone, Debug)]
pub struct ParamSpec {
    pub suffix: &'static str,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl Layer {
    pub fn batchnorm(channels: usize) -> Self {
        Layer::BatchNorm2d {
            channels,
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        }
    }

    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Layer::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn dense(in_features: usize, out_features: usize) -> Self {
        Layer::Dense {
            in_features,
            out_features,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Input { .. } => "input",
            Layer::Conv2d { .. } => "conv2d",
            Layer::BatchNorm2d { .. } => "batchnorm2d",
            Layer::Relu => "relu",
            Layer::MaxPool2d { .. } => "maxpool2d",
            Layer::GlobalAvgPool => "globalavgpool",
            Layer::Dense { .. } => "dense",
            Layer::ConcatDepth => "concat_depth",
            Layer::Add => "add",
            Layer::Softmax => "softmax",
            Layer::Dropout { .. } => "dropout",
            Layer::Flatten => "flatten",
        }
    }

    pub fn is_spatial_conv(&self) -> bool {
        matches!(self, Layer::Conv2d { .. })
    }

    fn arity(&self) -> Option<usize> {
        match self {
            Layer::Input { .. } => Some(0),
            Layer::ConcatDepth | Layer::Add => None,
            _ => Some(1),
        }
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        match *self {
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                ParamSpec {
                    suffix: "weight",
                    shape: vec![out_channels, in_channels, kernel, kernel],
                    init: Init::Glorot {
                        fan_in: in_channels * kernel * kernel,
                        fan_out: out_channels * kernel * kernel,
                    },
                },
                ParamSpec {
                    suffix: "bias",
                    shape: vec![out_channels],
                    init: Init::Zeros,
                },
            ],
            Layer::BatchNorm2d { channels, .. } => vec![
                ParamSpec {
                    suffix: "gamma",
                    shape: vec![channels],
                    init: Init::Ones,
                },
                ParamSpec {
                    suffix: "beta",
                    shape: vec![channels],
                    init: Init::Zeros,
                },
            ],
            Layer::Dense {
                in_features,
                out_features,
            } => vec![
                ParamSpec {
                    suffix: "weight",
                    shape: vec![out_features, in_features],
                    init: Init::Glorot {
                        fan_in: in_features,
                        fan_out: out_features,
                    },
                },
                ParamSpec {
                    suffix: "bias",
                    shape: vec![out_features],
                    init: Init::Zeros,
                },
            ],
            _ => Vec::new(),
        }
    }

    /// Non-trainable state (batchnorm running statistics).
    pub fn buffer_specs(&self) -> Vec<ParamSpec> {
        match *self {
            Layer::BatchNorm2d { channels, .. } => vec![
                ParamSpec {
                    suffix: "running_mean",
                    shape: vec![channels],
                    init: Init::Zeros,
                },
                ParamSpec {
                    suffix: "running_var",
                    shape: vec![channels],
                    init: Init::Ones,
                },
            ],
            _ => Vec::new(),
        }
    }

    pub fn validate(&self, node: &str) -> Result<()> {
        let bad = |detail: String| {
            Err(NdError::InvalidHyperparam {
                node: node.to_string(),
                detail,
            })
        };
        match *self {
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => {
                if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 {
                    return bad("conv extents and stride must be positive".into());
                }
            }
            Layer::BatchNorm2d {
                channels,
                momentum,
                epsilon,
            } => {
                if channels == 0 {
                    return bad("batchnorm needs at least one channel".into());
                }
                if !(epsilon > 0.0) {
                    return bad(format!("batchnorm epsilon must be > 0, got {epsilon}"));
                }
                if !(0.0..1.0).contains(&momentum) {
                    return bad(format!("batchnorm momentum must be in [0,1), got {momentum}"));
                }
            }
            Layer::MaxPool2d {
                kernel,
                stride,
                padding,
            } => {
                if kernel == 0 || stride == 0 || padding >= kernel {
                    return bad("maxpool needs kernel, stride > 0 and padding < kernel".into());
                }
            }
            Layer::Dense {
                in_features,
                out_features,
            } => {
                if in_features == 0 || out_features == 0 {
                    return bad("dense extents must be positive".into());
                }
            }
            Layer::Dropout { p } => {
                if !(0.0..1.0).contains(&p) {
                    return bad(format!("dropout p must be in [0,1), got {p}"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Output shape given per-sample input shapes.
    pub fn infer_shape(&self, node: &str, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        self.validate(node)?;
        let mismatch = |detail: String| NdError::ShapeMismatch {
            node: node.to_string(),
            detail,
        };
        match self.arity() {
            Some(n) if n != inputs.len() => {
                return Err(mismatch(format!(
                    "{} expects {n} input(s), got {}",
                    self.kind_name(),
                    inputs.len()
                )))
            }
            None if inputs.len() < 2 => {
                return Err(mismatch(format!("{} expects at least 2 inputs", self.kind_name())))
            }
            _ => {}
        }
        let spatial = |s: &[usize]| -> Result<(usize, usize, usize)> {
            match s {
                [c, h, w] => Ok((*c, *h, *w)),
                _ => Err(mismatch(format!("expected (depth, height, width), got {s:?}"))),
            }
        };
        match self {
            Layer::Input { shape } => {
                if shape.is_empty() || shape.iter().any(|&d| d == 0) {
                    return Err(mismatch(format!("invalid input shape {shape:?}")));
                }
                Ok(shape.clone())
            }
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let (c, h, w) = spatial(inputs[0])?;
                if c != *in_channels {
                    return Err(mismatch(format!("conv expects depth {in_channels}, got {c}")));
                }
                if h + 2 * padding < *kernel || w + 2 * padding < *kernel {
                    return Err(mismatch(format!("kernel {kernel} larger than padded input {h}x{w}")));
                }
                Ok(vec![
                    *out_channels,
                    (h + 2 * padding - kernel) / stride + 1,
                    (w + 2 * padding - kernel) / stride + 1,
                ])
            }
            Layer::BatchNorm2d { channels, .. } => {
                let s = inputs[0];
                if s[0] != *channels {
                    return Err(mismatch(format!("batchnorm expects depth {channels}, got {}", s[0])));
                }
                Ok(s.to_vec())
            }
            Layer::Relu | Layer::Dropout { .. } => Ok(inputs[0].to_vec()),
            Layer::MaxPool2d {
                kernel,
                stride,
                padding,
            } => {
                let (c, h, w) = spatial(inputs[0])?;
                if h + 2 * padding < *kernel || w + 2 * padding < *kernel {
                    return Err(mismatch(format!("pool window {kernel} larger than input {h}x{w}")));
                }
                Ok(vec![
                    c,
                    (h + 2 * padding - kernel) / stride + 1,
                    (w + 2 * padding - kernel) / stride + 1,
                ])
            }
            Layer::GlobalAvgPool => {
                let (c, _, _) = spatial(inputs[0])?;
                Ok(vec![c])
            }
            Layer::Dense {
                in_features,
                out_features,
            } => match inputs[0] {
                [f] if f == in_features => Ok(vec![*out_features]),
                s => Err(mismatch(format!("dense expects ({in_features},), got {s:?}"))),
            },
            Layer::ConcatDepth => {
                let (_, h, w) = spatial(inputs[0])?;
                let mut depth = 0;
                for s in inputs {
                    let (c, hh, ww) = spatial(s)?;
                    if (hh, ww) != (h, w) {
                        return Err(mismatch(format!("concat spatial {hh}x{ww} differs from {h}x{w}")));
                    }
                    depth += c;
                }
                Ok(vec![depth, h, w])
            }
            Layer::Add => {
                let first = inputs[0];
                for s in &inputs[1..] {
                    if *s != first {
                        return Err(mismatch(format!("add operands {first:?} and {s:?} differ")));
                    }
                }
                Ok(first.to_vec())
            }
            Layer::Softmax => match inputs[0] {
                [f] => Ok(vec![*f]),
                s => Err(mismatch(format!("softmax expects a vector, got {s:?}"))),
            },
            Layer::Flatten => Ok(vec![inputs[0].iter().product()]),
        }
    }
}
