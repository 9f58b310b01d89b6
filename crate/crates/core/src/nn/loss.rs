use super::{NnError, Result, Tensor};

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before the log.
pub const PROB_CLAMP: f64 = 1e-7;

/// Mean categorical cross-entropy `−(1/B) Σ_i Σ_j y_ij log ŷ_ij` for one-hot
/// targets given as class indices.
pub fn cross_entropy(targets: &[usize], probs: &Tensor) -> Result<f64> {
    check(targets, probs)?;
    let w = probs.row_len();
    let total: f64 = targets
        .iter()
        .enumerate()
        .map(|(i, &t)| -clamp(probs.data()[i * w + t]).ln())
        .sum();
    Ok(total / targets.len() as f64)
}

/// Loss plus its gradient with respect to `probs`. Entries outside the
/// clamp range get zero gradient.
pub fn cross_entropy_with_grad(targets: &[usize], probs: &Tensor) -> Result<(f64, Tensor)> {
    let loss = cross_entropy(targets, probs)?;
    let w = probs.row_len();
    let scale = 1.0 / targets.len() as f64;
    let mut grad = Tensor::zeros(probs.shape());
    for (i, &t) in targets.iter().enumerate() {
        let p = probs.data()[i * w + t];
        if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
            grad.data_mut()[i * w + t] = -scale / p;
        }
    }
    Ok((loss, grad))
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn check(targets: &[usize], probs: &Tensor) -> Result<()> {
    if targets.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    if probs.shape().len() != 2 || probs.batch() != targets.len() {
        return Err(NnError::Shape(format!(
            "{} targets for probabilities of shape {:?}",
            targets.len(),
            probs.shape()
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= probs.row_len()) {
        return Err(NnError::Shape(format!("target class {t} out of range")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(rows: &[[f64; 2]]) -> Tensor {
        Tensor::from_vec(&[rows.len(), 2], rows.iter().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn uniform_prediction_is_ln2() {
        let l = cross_entropy(&[0], &probs(&[[0.5, 0.5]])).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_is_clamped_near_zero() {
        let l = cross_entropy(&[0], &probs(&[[1.0, 0.0]])).unwrap();
        assert!(l > 0.0 && l < 2e-7);
        let worst = cross_entropy(&[1], &probs(&[[1.0, 0.0]])).unwrap();
        assert!((worst - -(1e-7f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn batch_mean() {
        // ln 2 and ln 4 averaged.
        let l = cross_entropy(&[0, 1], &probs(&[[0.5, 0.5], [0.75, 0.25]])).unwrap();
        assert!((l - 1.039720770839918).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_rejected() {
        assert!(matches!(
            cross_entropy(&[], &Tensor::zeros(&[0, 2])),
            Err(NnError::EmptyBatch)
        ));
    }

    #[test]
    fn gradient_matches_difference_quotient() {
        let p = probs(&[[0.3, 0.7], [0.6, 0.4]]);
        let (_, g) = cross_entropy_with_grad(&[1, 0], &p).unwrap();
        let eps = 1e-6;
        for k in 0..4 {
            let mut hi = p.clone();
            hi.data_mut()[k] += eps;
            let mut lo = p.clone();
            lo.data_mut()[k] -= eps;
            let fd = (cross_entropy(&[1, 0], &hi).unwrap() - cross_entropy(&[1, 0], &lo).unwrap()) / (2.0 * eps);
            assert!((fd - g.data()[k]).abs() < 1e-6, "k={k}: {fd} vs {}", g.data()[k]);
        }
    }
}
