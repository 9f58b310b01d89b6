use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NetworkSpec, NnError, Result, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Trainable tensors of a network, one entry per parametric layer in plan order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    pub layers: Vec<LayerParams>,
}

impl ParameterSet {
    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        let layers = spec
            .plan()?
            .iter()
            .filter_map(|p| p.layer.param_shapes(&p.input))
            .map(|(w, b)| LayerParams {
                weight: Tensor::zeros(&w),
                bias: Tensor::zeros(&b),
            })
            .collect();
        Ok(Self { layers })
    }

    /// Checks that tensor shapes match what `spec` expects.
    pub fn check_matches(&self, spec: &NetworkSpec) -> Result<()> {
        let expected = Self::zeros(spec)?;
        let same = expected.layers.len() == self.layers.len()
            && expected.layers.iter().zip(&self.layers).all(|(e, p)| {
                e.weight.shape() == p.weight.shape() && e.bias.shape() == p.bias.shape()
            });
        if same {
            Ok(())
        } else {
            Err(NnError::Shape("parameter set does not match network spec".into()))
        }
    }

    /// Weight and bias tensors interleaved, in slot order.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().all(Tensor::all_finite)
    }

    /// Zeroes every tensor of the given slots.
    pub fn zero_slots(&mut self, slots: std::ops::Range<usize>) {
        for layer in &mut self.layers[slots] {
            layer.weight.data_mut().fill(0.0);
            layer.bias.data_mut().fill(0.0);
        }
    }
}

/// Glorot-uniform weights, zero biases; deterministic in `seed`.
///
/// For convolutions the fans include the kernel width.
pub fn init_parameters(spec: &NetworkSpec, seed: u64) -> Result<ParameterSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParameterSet::zeros(spec)?;
    for layer in &mut params.layers {
        let shape = layer.weight.shape().to_vec();
        let (fan_in, fan_out) = match shape.as_slice() {
            [inp, out] => (*inp, *out),
            [k, cin, cout] => (k * cin, k * cout),
            other => unreachable!("unexpected weight shape {other:?}"),
        };
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for w in layer.weight.data_mut() {
            *w = rng.random_range(-limit..limit);
        }
    }
    Ok(params)
}
