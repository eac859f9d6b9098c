//! AdaDelta with per-parameter running averages of squared gradients and
//! squared updates.

use serde::{Deserialize, Serialize};

use super::model::GeneratorModel;

pub const DEFAULT_RHO: f64 = 0.95;
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaDeltaConfig {
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for AdaDeltaConfig {
    fn default() -> Self {
        AdaDeltaConfig {
            rho: DEFAULT_RHO,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// Element-wise update of one tensor.
///
/// ```text
/// E[g²]  ← ρ E[g²] + (1−ρ) g²
/// Δx     = −√(E[Δx²]+ε) / √(E[g²]+ε) · g
/// E[Δx²] ← ρ E[Δx²] + (1−ρ) Δx²
/// x      ← x + Δx
/// ```
pub fn adadelta_step(
    params: &mut [f64],
    grads: &[f64],
    sq_grad: &mut [f64],
    sq_delta: &mut [f64],
    config: AdaDeltaConfig,
) {
    let AdaDeltaConfig { rho, epsilon } = config;
    for (((x, &g), eg), ed) in params
        .iter_mut()
        .zip(grads)
        .zip(sq_grad.iter_mut())
        .zip(sq_delta.iter_mut())
    {
        *eg = rho * *eg + (1.0 - rho) * g * g;
        let dx = -((*ed + epsilon).sqrt() / (*eg + epsilon).sqrt()) * g;
        *ed = rho * *ed + (1.0 - rho) * dx * dx;
        *x += dx;
    }
}

/// Accumulators shaped like the model they update.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdaDeltaConfig,
    pub sq_grad: GeneratorModel,
    pub sq_delta: GeneratorModel,
}

impl OptimizerState {
    pub fn new(model: &GeneratorModel, config: AdaDeltaConfig) -> Self {
        OptimizerState {
            config,
            sq_grad: model.zeros_like(),
            sq_delta: model.zeros_like(),
        }
    }

    pub fn update(&mut self, params: &mut GeneratorModel, grads: &GeneratorModel) {
        let config = self.config;
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.sq_grad.tensors_mut())
            .zip(self.sq_delta.tensors_mut());
        for (((p, g), eg), ed) in tensors {
            debug_assert_eq!(p.name, g.name);
            adadelta_step(p.data, g.data, eg.data, ed.data, config);
        }
    }
}
