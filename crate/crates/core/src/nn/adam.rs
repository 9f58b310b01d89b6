use serde::{Deserialize, Serialize};

use super::{NetworkSpec, NnError, ParameterSet, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(NnError::InvalidSpec(format!("invalid Adam hyperparameters {self:?}")))
        }
    }
}

/// First/second moment estimates mirroring a [`ParameterSet`], plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    pub m: ParameterSet,
    pub v: ParameterSet,
}

impl AdamState {
    pub fn new(spec: &NetworkSpec, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            t: 0,
            m: ParameterSet::zeros(spec)?,
            v: ParameterSet::zeros(spec)?,
        })
    }

    /// One bias-corrected Adam update. With `mask`, only the selected parameter
    /// slots (and their moments) are touched; the step counter always advances.
    pub fn step(&mut self, params: &mut ParameterSet, grads: &ParameterSet, mask: Option<&[bool]>) -> Result<()> {
        if params.layers.len() != grads.layers.len() || params.layers.len() != self.m.layers.len() {
            return Err(NnError::Shape("optimizer state does not match parameters".into()));
        }
        if !grads.all_finite() {
            return Err(NnError::NonFiniteGradient);
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for slot in 0..params.layers.len() {
            if mask.is_some_and(|m| !m[slot]) {
                continue;
            }
            let p = &mut params.layers[slot];
            let g = &grads.layers[slot];
            let (m, v) = (&mut self.m.layers[slot], &mut self.v.layers[slot]);
            for (((pt, gt), mt), vt) in [&mut p.weight, &mut p.bias]
                .into_iter()
                .zip([&g.weight, &g.bias])
                .zip([&mut m.weight, &mut m.bias])
                .zip([&mut v.weight, &mut v.bias])
            {
                if pt.shape() != gt.shape() {
                    return Err(NnError::Shape("gradient shape does not match parameter".into()));
                }
                for (((w, &g), m), v) in pt
                    .data_mut()
                    .iter_mut()
                    .zip(gt.data())
                    .zip(mt.data_mut())
                    .zip(vt.data_mut())
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *w -= lr * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
        }
        Ok(())
    }
}
