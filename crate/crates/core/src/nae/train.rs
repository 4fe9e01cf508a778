use super::model::{backprop, validate_layer_sizes, NaeModel};
use crate::error::{Error, Result};
use crate::numerics::{fmt_shape, kl_cost, kl_gradient, l1_norm, Convergence, Matrix, RPropConfig, RPropState};

/// Settings for NAE training and latent fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Sparsity weight on the latent code.
    pub lambda: f64,
    pub max_iterations: usize,
    /// Relative cost change below which an iteration counts as stalled.
    /// `0` disables early stopping.
    pub tol: f64,
    /// Consecutive stalled iterations before stopping.
    pub patience: usize,
    pub seed: u64,
    pub rprop: RPropConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            max_iterations: 2000,
            tol: 1e-6,
            patience: 10,
            seed: 0,
            rprop: RPropConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        self.rprop.validate()
    }
}

/// Result of [`nae_train`]. `cost_trace[t]` is the objective after `t`
/// RProp updates.
#[derive(Debug, Clone)]
pub struct TrainedNae {
    pub model: NaeModel,
    pub cost_trace: Vec<f64>,
}

pub(crate) fn validate_spectrogram(x: &Matrix, context: &'static str) -> Result<()> {
    if x.is_empty() {
        return Err(Error::InvalidArgument(format!("{context}: empty input")));
    }
    if x.as_slice().iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "{context}: input must be finite and non-negative"
        )));
    }
    Ok(())
}

/// `D(X, X̂) + λ‖H‖₁` for the model's current weights.
pub fn nae_objective(model: &NaeModel, x: &Matrix, lambda: f64) -> Result<f64> {
    let cache = model.forward(x)?;
    Ok(kl_cost(x, cache.reconstruction())? + lambda * l1_norm(cache.latent()))
}

/// Analytic gradient of `D(X, X̂) + λ‖H‖₁` with respect to every weight.
pub fn nae_gradients(model: &NaeModel, x: &Matrix, lambda: f64) -> Result<Vec<Matrix>> {
    let cache = model.forward(x)?;
    let upstream = kl_gradient(x, cache.reconstruction());
    Ok(backprop(model.weights(), &cache, upstream, Some(model.depth()), lambda).0)
}

/// Full-batch iRprop− training of a freshly initialised NAE on `x`
/// (`bins × frames`).
pub fn nae_train(x: &Matrix, layer_sizes: &[usize], config: &TrainConfig) -> Result<TrainedNae> {
    validate_spectrogram(x, "nae_train")?;
    validate_layer_sizes(layer_sizes)?;
    config.validate()?;
    if config.max_iterations == 0 {
        return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
    }
    if x.rows() != layer_sizes[0] {
        return Err(Error::shape(
            "nae_train",
            format!("{} rows", layer_sizes[0]),
            fmt_shape(x),
        ));
    }

    let mut model = NaeModel::new(layer_sizes, config.seed)?;
    let depth = model.depth();
    let mut rprop = RPropState::new(model.weights(), config.rprop)?;
    let mut stop = Convergence::new(config.tol, config.patience);
    let mut trace = Vec::with_capacity(config.max_iterations + 1);
    let mut updates = 0;

    loop {
        let cache = model.forward(x)?;
        let cost = kl_cost(x, cache.reconstruction())? + config.lambda * l1_norm(cache.latent());
        if !cost.is_finite() {
            return Err(Error::NonFiniteCost { iteration: updates });
        }
        let converged = trace.last().is_some_and(|&prev| stop.update(prev, cost));
        trace.push(cost);
        if converged || updates == config.max_iterations {
            break;
        }
        let upstream = kl_gradient(x, cache.reconstruction());
        let (grads, _) = backprop(model.weights(), &cache, upstream, Some(depth), config.lambda);
        rprop.step(model.weights_mut(), &grads)?;
        updates += 1;
    }

    model.metadata.lambda = config.lambda;
    model.metadata.iterations = updates;
    model.metadata.final_cost = *trace.last().unwrap();
    Ok(TrainedNae {
        model,
        cost_trace: trace,
    })
}
