use std::collections::HashSet;
use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{NnError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    None,
    Relu,
    Softmax,
}

/// One layer of a feed-forward network. Shapes below exclude the batch dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// `[features] -> [units]`, affine then activation.
    Dense { units: usize, activation: Activation },
    /// `[length, channels] -> [length, filters]`, stride 1, same padding.
    Conv1d {
        filters: usize,
        kernel: usize,
        activation: Activation,
    },
    /// Nearest-neighbour upsampling along the leading axis: every element
    /// (or channel vector) is repeated `factor` times in place.
    UpSample1d { factor: usize },
    Flatten,
    Reshape { shape: Vec<usize> },
    /// Inverted dropout; identity in inference mode.
    Dropout { rate: f64 },
    /// `[features] -> [units]`, affine then softmax.
    SoftmaxHead { units: usize },
}

impl LayerSpec {
    pub fn activation(&self) -> Activation {
        match self {
            LayerSpec::Dense { activation, .. } | LayerSpec::Conv1d { activation, .. } => *activation,
            LayerSpec::SoftmaxHead { .. } => Activation::Softmax,
            _ => Activation::None,
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(
            self,
            LayerSpec::Dense { .. } | LayerSpec::Conv1d { .. } | LayerSpec::SoftmaxHead { .. }
        )
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(NnError::InvalidSpec(msg));
        match self {
            LayerSpec::Dense { units, activation } => {
                if *units == 0 {
                    return bad("dense layer with zero units".into());
                }
                if *activation == Activation::Softmax {
                    return bad("softmax activation is reserved for softmax heads".into());
                }
            }
            LayerSpec::Conv1d {
                filters,
                kernel,
                activation,
            } => {
                if *filters == 0 {
                    return bad("conv1d layer with zero filters".into());
                }
                if kernel % 2 == 0 {
                    return bad(format!("conv1d kernel must be odd, got {kernel}"));
                }
                if *activation == Activation::Softmax {
                    return bad("softmax activation is reserved for softmax heads".into());
                }
            }
            LayerSpec::UpSample1d { factor } if *factor == 0 => {
                return bad("upsample factor must be at least 1".into())
            }
            LayerSpec::Reshape { shape } if shape.is_empty() || shape.contains(&0) => {
                return bad(format!("invalid reshape target {shape:?}"))
            }
            LayerSpec::Dropout { rate } if !(0.0..1.0).contains(rate) => {
                return bad(format!("dropout rate {rate} outside [0, 1)"))
            }
            LayerSpec::SoftmaxHead { units } if *units < 2 => {
                return bad("softmax head needs at least two units".into())
            }
            _ => {}
        }
        Ok(())
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |what: &str| {
            Err(NnError::Shape(format!(
                "{what} cannot take input of shape {input:?}"
            )))
        };
        Ok(match self {
            LayerSpec::Dense { units, .. } | LayerSpec::SoftmaxHead { units } => {
                if input.len() != 1 {
                    return mismatch("dense layer");
                }
                vec![*units]
            }
            LayerSpec::Conv1d { filters, .. } => {
                if input.len() != 2 {
                    return mismatch("conv1d layer");
                }
                vec![input[0], *filters]
            }
            LayerSpec::UpSample1d { factor } => {
                if input.is_empty() || input.len() > 2 {
                    return mismatch("upsample layer");
                }
                let mut out = input.to_vec();
                out[0] *= factor;
                out
            }
            LayerSpec::Flatten => vec![input.iter().product()],
            LayerSpec::Reshape { shape } => {
                if shape.iter().product::<usize>() != input.iter().product::<usize>() {
                    return mismatch(&format!("reshape to {shape:?}"));
                }
                shape.clone()
            }
            LayerSpec::Dropout { .. } => input.to_vec(),
        })
    }

    /// Weight and bias shapes, `None` for parameter-free layers.
    pub fn param_shapes(&self, input: &[usize]) -> Option<(Vec<usize>, Vec<usize>)> {
        match self {
            LayerSpec::Dense { units, .. } | LayerSpec::SoftmaxHead { units } => {
                Some((vec![input[0], *units], vec![*units]))
            }
            LayerSpec::Conv1d { filters, kernel, .. } => {
                Some((vec![*kernel, input[1], *filters], vec![*filters]))
            }
            _ => None,
        }
    }

    fn label(&self) -> String {
        let act = match self.activation() {
            Activation::Relu => ", relu",
            _ => "",
        };
        match self {
            LayerSpec::Dense { units, .. } => format!("Dense({units}{act})"),
            LayerSpec::Conv1d { filters, kernel, .. } => format!("Conv1D({filters}, k={kernel}{act})"),
            LayerSpec::UpSample1d { factor } => format!("UpSample1D(x{factor})"),
            LayerSpec::Flatten => "Flatten".into(),
            LayerSpec::Reshape { .. } => "Reshape".into(),
            LayerSpec::Dropout { rate } => format!("Dropout({rate})"),
            LayerSpec::SoftmaxHead { units } => format!("SoftmaxHead({units})"),
        }
    }
}

/// Named output branch applied to the trunk output. An empty layer list
/// exposes the trunk output itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    Trunk(usize),
    Head(usize, usize),
}

/// A layer resolved against concrete shapes.
#[derive(Clone, Debug)]
pub struct PlannedLayer<'a> {
    pub location: Location,
    pub layer: &'a LayerSpec,
    pub input: Vec<usize>,
    pub output: Vec<usize>,
    pub param_slot: Option<usize>,
}

/// Which parameter slots belong to the trunk and to each head.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamGroups {
    pub trunk: Range<usize>,
    pub heads: Vec<Range<usize>>,
}

impl ParamGroups {
    /// Update mask selecting the trunk plus the listed heads.
    pub fn mask(&self, heads: &[usize]) -> Vec<bool> {
        let total = self.heads.last().map_or(self.trunk.end, |r| r.end);
        let mut mask = vec![false; total];
        mask[self.trunk.clone()].iter_mut().for_each(|m| *m = true);
        for &h in heads {
            mask[self.heads[h].clone()].iter_mut().for_each(|m| *m = true);
        }
        mask
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub trunk: Vec<LayerSpec>,
    pub heads: Vec<HeadSpec>,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        self.plan().map(|_| ())
    }

    /// Resolves every layer's input/output shape and parameter slot,
    /// trunk first, then each head in order.
    pub fn plan(&self) -> Result<Vec<PlannedLayer<'_>>> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(NnError::InvalidSpec(format!(
                "invalid input shape {:?}",
                self.input_shape
            )));
        }
        if self.heads.is_empty() {
            return Err(NnError::InvalidSpec("network needs at least one head".into()));
        }
        let mut names = HashSet::new();
        if let Some(dup) = self.heads.iter().find(|h| !names.insert(h.name.as_str())) {
            return Err(NnError::InvalidSpec(format!("duplicate head name {:?}", dup.name)));
        }

        let mut plan = Vec::new();
        let mut slot = 0;
        let mut shape = self.input_shape.clone();
        for (i, layer) in self.trunk.iter().enumerate() {
            shape = Self::plan_one(&mut plan, &mut slot, Location::Trunk(i), layer, shape)?;
        }
        for (h, head) in self.heads.iter().enumerate() {
            let mut hs = shape.clone();
            for (i, layer) in head.layers.iter().enumerate() {
                hs = Self::plan_one(&mut plan, &mut slot, Location::Head(h, i), layer, hs)?;
            }
        }
        Ok(plan)
    }

    fn plan_one<'a>(
        plan: &mut Vec<PlannedLayer<'a>>,
        slot: &mut usize,
        location: Location,
        layer: &'a LayerSpec,
        input: Vec<usize>,
    ) -> Result<Vec<usize>> {
        layer.validate()?;
        let output = layer.output_shape(&input)?;
        let param_slot = layer.has_params().then(|| {
            *slot += 1;
            *slot - 1
        });
        plan.push(PlannedLayer {
            location,
            layer,
            input,
            output: output.clone(),
            param_slot,
        });
        Ok(output)
    }

    pub fn trunk_output_shape(&self) -> Result<Vec<usize>> {
        let plan = self.plan()?;
        Ok(plan
            .iter()
            .rfind(|p| matches!(p.location, Location::Trunk(_)))
            .map_or_else(|| self.input_shape.clone(), |p| p.output.clone()))
    }

    pub fn head_output_shape(&self, head: usize) -> Result<Vec<usize>> {
        let plan = self.plan()?;
        let last = plan
            .iter()
            .rfind(|p| matches!(p.location, Location::Head(h, _) if h == head))
            .map(|p| p.output.clone());
        match last {
            Some(s) => Ok(s),
            None => self.trunk_output_shape(),
        }
    }

    pub fn head_index(&self, name: &str) -> Option<usize> {
        self.heads.iter().position(|h| h.name == name)
    }

    pub fn param_groups(&self) -> Result<ParamGroups> {
        let plan = self.plan()?;
        // Slots are assigned trunk first, then head by head, so each group is contiguous.
        let count = |pred: &dyn Fn(Location) -> bool| {
            plan.iter()
                .filter(|p| p.param_slot.is_some() && pred(p.location))
                .count()
        };
        let trunk = 0..count(&|l| matches!(l, Location::Trunk(_)));
        let mut start = trunk.end;
        let heads = (0..self.heads.len())
            .map(|h| {
                let n = count(&|l| matches!(l, Location::Head(hh, _) if hh == h));
                let r = start..start + n;
                start += n;
                r
            })
            .collect();
        Ok(ParamGroups { trunk, heads })
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> Result<usize> {
        Ok(self
            .plan()?
            .iter()
            .filter_map(|p| p.layer.param_shapes(&p.input))
            .map(|(w, b)| w.iter().product::<usize>() + b.iter().product::<usize>())
            .sum())
    }

    /// Layer-by-layer dump of activation shapes.
    pub fn summary(&self) -> Result<String> {
        let plan = self.plan()?;
        let mut out = String::new();
        writeln!(out, "{:<28}{}", "input", fmt_shape(&self.input_shape)).unwrap();
        for p in &plan {
            let name = match p.location {
                Location::Trunk(_) => p.layer.label(),
                Location::Head(h, _) => format!("[{}] {}", self.heads[h].name, p.layer.label()),
            };
            writeln!(out, "{:<28}{}", name, fmt_shape(&p.output)).unwrap();
        }
        Ok(out)
    }
}

fn fmt_shape(shape: &[usize]) -> String {
    let parts: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    format!("({})", parts.join(", "))
}
