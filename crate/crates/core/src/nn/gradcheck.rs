use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{backward, forward, Mode, NetworkSpec, NnError, ParameterSet, Result, Tensor};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    /// Coordinates probed per tensor; `None` probes every entry.
    pub samples_per_tensor: Option<usize>,
    /// Also compare the gradient with respect to the network input.
    pub check_input: bool,
    /// Denominator floor of the relative error.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            samples_per_tensor: None,
            check_input: true,
            floor: 1e-7,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose ±ε perturbation flips a ReLU (non-differentiable point).
    pub skipped_kinks: usize,
}

/// Compares backward's gradients against central differences
/// `(f(θ+ε) − f(θ−ε)) / 2ε` of the scalar `f = Σ c ⊙ head_output`, where `c`
/// is a fixed random probe. Runs in inference mode, so dropout is off.
pub fn finite_diff_check(
    spec: &NetworkSpec,
    params: &ParameterSet,
    input: &Tensor,
    head: usize,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    if cfg.epsilon.is_nan() || cfg.epsilon <= 0.0 {
        return Err(NnError::InvalidEpsilon(cfg.epsilon));
    }
    if head >= spec.heads.len() {
        return Err(NnError::InvalidSpec(format!("no head with index {head}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base = forward(spec, params, input, Mode::Infer)?;
    let out = &base.outputs[head];
    let probe = Tensor::from_vec(
        out.shape(),
        (0..out.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )?;
    let base_pattern = base.relu_pattern(spec)?;

    let mut head_grads: Vec<Option<&Tensor>> = vec![None; spec.heads.len()];
    head_grads[head] = Some(&probe);
    let analytic = backward(spec, params, &base, &head_grads)?;

    let objective = |p: &ParameterSet, x: &Tensor| -> Result<(f64, bool)> {
        let pass = forward(spec, p, x, Mode::Infer)?;
        let f = pass.outputs[head].data().iter().zip(probe.data()).map(|(a, b)| a * b).sum();
        Ok((f, pass.relu_pattern(spec)? == base_pattern))
    };

    let mut report = GradCheckReport::default();
    let mut record = |a: f64, plus: (f64, bool), minus: (f64, bool)| {
        if !(plus.1 && minus.1) {
            report.skipped_kinks += 1;
            return;
        }
        let numeric = (plus.0 - minus.0) / (2.0 * cfg.epsilon);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.floor);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.checked += 1;
    };

    let n_tensors = params.tensors().count();
    for t in 0..n_tensors {
        let len = params.tensors().nth(t).map_or(0, Tensor::len);
        for k in coordinates(len, cfg.samples_per_tensor, &mut rng) {
            let a = analytic.params.tensors().nth(t).expect("same layout").data()[k];
            let mut shifted = params.clone();
            nudge(&mut shifted, t, k, cfg.epsilon);
            let plus = objective(&shifted, input)?;
            nudge(&mut shifted, t, k, -2.0 * cfg.epsilon);
            let minus = objective(&shifted, input)?;
            record(a, plus, minus);
        }
    }
    if cfg.check_input {
        for k in coordinates(input.len(), cfg.samples_per_tensor, &mut rng) {
            let a = analytic.input.data()[k];
            let mut x = input.clone();
            x.data_mut()[k] += cfg.epsilon;
            let plus = objective(params, &x)?;
            x.data_mut()[k] -= 2.0 * cfg.epsilon;
            let minus = objective(params, &x)?;
            record(a, plus, minus);
        }
    }
    Ok(report)
}

fn nudge(params: &mut ParameterSet, tensor: usize, k: usize, delta: f64) {
    let t = params.tensors_mut().nth(tensor).expect("tensor index in range");
    t.data_mut()[k] += delta;
}

fn coordinates(len: usize, samples: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match samples {
        Some(n) if n < len => {
            let mut idx = index::sample(rng, len, n).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..len).collect(),
    }
}
