use ndgrad::{Graph, GraphBuilder, Layer, NodeId, Scalar};
use serde::{Deserialize, Serialize};

use super::fire::{build_fire, FireSpec};
use crate::error::{invalid, Result};

/// Output head: one linear unit, or `classes` softmax units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Reg,
    Class(usize),
}

impl Head {
    pub fn output_units(&self) -> usize {
        match *self {
            Head::Reg => 1,
            Head::Class(k) => k,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Stage {
    Fire(FireSpec),
    /// 3×3 max pool, stride 2, padding 1.
    Pool,
}

/// Declarative PriceNet architecture. Stage depths are given unscaled and
/// multiplied by `width_multiplier` at build time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceNetSpec {
    pub input_side: usize,
    pub stem_depth: usize,
    pub width_multiplier: f64,
    pub stages: Vec<Stage>,
    pub head: Head,
    pub dropout: f64,
    pub hidden_units: usize,
}

/// Uniform depth scale that puts the 224-input network near 1.2M parameters.
pub const PAPER_WIDTH_MULTIPLIER: f64 = 1.2;
pub const DEFAULT_HIDDEN_UNITS: usize = 256;
pub const DEFAULT_DROPOUT: f64 = 0.5;
pub const PARAM_BUDGET: (usize, usize) = (1_000_000, 1_400_000);

fn fire_stages(with_third_pool: bool) -> Vec<Stage> {
    let f = |s, e, r| Stage::Fire(FireSpec::new(s, e, e, r));
    let mut v = vec![
        Stage::Pool,
        f(16, 64, false),
        f(16, 64, true),
        Stage::Pool,
        f(32, 128, false),
        f(32, 128, true),
    ];
    if with_third_pool {
        v.push(Stage::Pool);
    }
    v.extend([f(48, 192, false), f(48, 192, true), f(64, 256, false), f(64, 256, true)]);
    v
}

impl PriceNetSpec {
    /// The 224-input layout with three pools after the stem.
    pub fn paper(head: Head) -> Self {
        Self {
            input_side: 224,
            stem_depth: 64,
            width_multiplier: PAPER_WIDTH_MULTIPLIER,
            stages: fire_stages(true),
            head,
            dropout: DEFAULT_DROPOUT,
            hidden_units: DEFAULT_HIDDEN_UNITS,
        }
    }

    /// The 64-input variant: same modules, one pool fewer.
    pub fn desk(head: Head, width_multiplier: f64) -> Self {
        Self {
            input_side: 64,
            width_multiplier,
            stages: fire_stages(false),
            ..Self::paper(head)
        }
    }

    pub fn scale(&self, depth: usize) -> usize {
        ((depth as f64 * self.width_multiplier).round() as usize).max(1)
    }

    fn scaled_fire(&self, f: &FireSpec) -> FireSpec {
        FireSpec::new(self.scale(f.squeeze), self.scale(f.expand1), self.scale(f.expand3), f.residual)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_side < 8 {
            return Err(invalid(format!("input side {} is too small", self.input_side)));
        }
        if !(self.width_multiplier > 0.0 && self.width_multiplier.is_finite()) {
            return Err(invalid(format!("width multiplier must be positive, got {}", self.width_multiplier)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if self.hidden_units == 0 {
            return Err(invalid("hidden units must be positive"));
        }
        if let Head::Class(k) = self.head {
            if k < 2 {
                return Err(invalid(format!("classification head needs at least 2 classes, got {k}")));
            }
        }
        let mut depth = self.scale(self.stem_depth);
        for (i, stage) in self.stages.iter().enumerate() {
            if let Stage::Fire(f) = stage {
                let f = self.scaled_fire(f);
                f.validate(depth)
                    .map_err(|e| invalid(format!("stage {i} ({depth} → {}): {e}", f.output_depth())))?;
                depth = f.output_depth();
            }
        }
        Ok(())
    }
}

/// Node names of the last fire module's depth concat (the default Grad-CAM layer).
pub fn last_fire_concat(spec: &PriceNetSpec) -> Option<String> {
    let n = spec.stages.iter().filter(|s| matches!(s, Stage::Fire(_))).count();
    (n > 0).then(|| format!("fire{n}.concat"))
}

pub const FEATURE_NODE: &str = "gap";

/// Stem conv 3×3/2 → BN → ReLU → stages → GAP → dropout → dense → ReLU → head.
pub fn build_pricenet<T: Scalar>(spec: &PriceNetSpec, seed: u64) -> Result<Graph<T>> {
    spec.validate()?;
    let side = spec.input_side;
    let mut b = GraphBuilder::<T>::new(&[3, side, side], seed)?;
    let stem_depth = spec.scale(spec.stem_depth);
    let stem = b.add("stem", Layer::conv(3, stem_depth, 3, 2, 1), &[0])?;
    let stem_bn = b.add("stem_bn", Layer::batchnorm(stem_depth), &[stem])?;
    let mut x: NodeId = b.add("stem_relu", Layer::Relu, &[stem_bn])?;
    let (mut fires, mut pools) = (0, 0);
    for stage in &spec.stages {
        match stage {
            Stage::Pool => {
                pools += 1;
                let pool = Layer::MaxPool2d {
                    kernel: 3,
                    stride: 2,
                    padding: 1,
                };
                x = b.add(format!("pool{pools}"), pool, &[x])?;
            }
            Stage::Fire(f) => {
                fires += 1;
                x = build_fire(&mut b, &format!("fire{fires}"), &spec.scaled_fire(f), x)?;
            }
        }
    }
    let depth = b.shape(x)[0];
    let gap = b.add(FEATURE_NODE, Layer::GlobalAvgPool, &[x])?;
    let drop = b.add("dropout", Layer::Dropout { p: spec.dropout }, &[gap])?;
    let hidden = b.add("hidden", Layer::dense(depth, spec.hidden_units), &[drop])?;
    let relu = b.add("hidden_relu", Layer::Relu, &[hidden])?;
    let out = b.add("head", Layer::dense(spec.hidden_units, spec.head.output_units()), &[relu])?;
    let out = match spec.head {
        Head::Reg => out,
        Head::Class(_) => b.add("softmax", Layer::Softmax, &[out])?,
    };
    Ok(b.build(out)?)
}
