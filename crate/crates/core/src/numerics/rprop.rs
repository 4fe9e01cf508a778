use super::Matrix;
use crate::error::{Error, Result};

/// Hyperparameters of iRprop−.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RPropConfig {
    pub eta_plus: f64,
    pub eta_minus: f64,
    pub delta_init: f64,
    pub delta_min: f64,
    pub delta_max: f64,
}

impl Default for RPropConfig {
    fn default() -> Self {
        Self {
            eta_plus: 1.2,
            eta_minus: 0.5,
            delta_init: 0.01,
            delta_min: 1e-9,
            delta_max: 1.0,
        }
    }
}

impl RPropConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eta_plus > 1.0
            && self.eta_minus > 0.0
            && self.eta_minus < 1.0
            && self.delta_min > 0.0
            && self.delta_min <= self.delta_init
            && self.delta_init <= self.delta_max;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid RProp config {self:?}")))
        }
    }
}

/// Per-parameter step sizes and last gradient signs, one block per
/// parameter matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RPropState {
    config: RPropConfig,
    step_sizes: Vec<Vec<f64>>,
    prev_signs: Vec<Vec<i8>>,
}

impl RPropState {
    pub fn new(params: &[Matrix], config: RPropConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            step_sizes: params.iter().map(|p| vec![config.delta_init; p.len()]).collect(),
            prev_signs: params.iter().map(|p| vec![0; p.len()]).collect(),
        })
    }

    pub fn config(&self) -> &RPropConfig {
        &self.config
    }

    pub fn step_sizes(&self, block: usize) -> &[f64] {
        &self.step_sizes[block]
    }

    pub fn prev_signs(&self, block: usize) -> &[i8] {
        &self.prev_signs[block]
    }

    /// One iRprop− update of `params` in place.
    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.step_sizes.len() {
            return Err(Error::shape(
                "rprop_step",
                format!("{} parameter blocks", self.step_sizes.len()),
                format!("{} params, {} grads", params.len(), grads.len()),
            ));
        }
        for (block, ((p, g), steps)) in params.iter().zip(grads).zip(&self.step_sizes).enumerate() {
            if p.len() != g.len() || p.len() != steps.len() {
                return Err(Error::shape(
                    "rprop_step",
                    format!("block {block} with {} entries", steps.len()),
                    format!("{} params, {} grads", p.len(), g.len()),
                ));
            }
            if g.as_slice().iter().any(|v| v.is_nan()) {
                return Err(Error::NonFiniteGradient { block });
            }
        }

        let RPropConfig {
            eta_plus,
            eta_minus,
            delta_min,
            delta_max,
            ..
        } = self.config;
        for ((p, g), (steps, signs)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.step_sizes.iter_mut().zip(&mut self.prev_signs))
        {
            let values = p.as_mut_slice();
            for i in 0..values.len() {
                let sign = sign_of(g.as_slice()[i]);
                match (signs[i] * sign).signum() {
                    1 => {
                        steps[i] = (steps[i] * eta_plus).min(delta_max);
                        values[i] -= f64::from(sign) * steps[i];
                        signs[i] = sign;
                    }
                    -1 => {
                        steps[i] = (steps[i] * eta_minus).max(delta_min);
                        signs[i] = 0;
                    }
                    _ => {
                        values[i] -= f64::from(sign) * steps[i];
                        signs[i] = sign;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Free-function form of [`RPropState::step`].
pub fn rprop_step(params: &mut [Matrix], grads: &[Matrix], state: &mut RPropState) -> Result<()> {
    state.step(params, grads)
}

#[inline]
fn sign_of(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_rows(&[[v]])
    }

    #[test]
    fn hand_trace() {
        let config = RPropConfig {
            delta_init: 0.1,
            ..RPropConfig::default()
        };
        let mut params = vec![scalar(1.0)];
        let mut state = RPropState::new(&params, config).unwrap();

        state.step(&mut params, &[scalar(1.0)]).unwrap();
        assert_abs_diff_eq!(params[0].get(0, 0), 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(state.step_sizes(0)[0], 0.1, epsilon = 1e-15);
        assert_eq!(state.prev_signs(0)[0], 1);

        state.step(&mut params, &[scalar(2.0)]).unwrap();
        assert_abs_diff_eq!(state.step_sizes(0)[0], 0.12, epsilon = 1e-15);
        assert_abs_diff_eq!(params[0].get(0, 0), 0.78, epsilon = 1e-15);

        state.step(&mut params, &[scalar(-1.0)]).unwrap();
        assert_abs_diff_eq!(state.step_sizes(0)[0], 0.06, epsilon = 1e-15);
        assert_abs_diff_eq!(params[0].get(0, 0), 0.78, epsilon = 1e-15);
        assert_eq!(state.prev_signs(0)[0], 0);
    }

    #[test]
    fn nan_gradient_names_block() {
        let mut params = vec![scalar(0.0), Matrix::zeros(2, 2)];
        let mut state = RPropState::new(&params, RPropConfig::default()).unwrap();
        let mut bad = Matrix::zeros(2, 2);
        bad.set(1, 0, f64::NAN);
        let err = state.step(&mut params, &[scalar(1.0), bad]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { block: 1 }));
        assert_eq!(params[0].get(0, 0), 0.0, "no partial update on error");
    }

    #[test]
    fn rejects_bad_config() {
        let bad = RPropConfig {
            eta_minus: 1.5,
            ..RPropConfig::default()
        };
        assert!(RPropState::new(&[], bad).is_err());
    }

    proptest! {
        #[test]
        fn steps_stay_in_bounds(grads in prop::collection::vec(-5.0f64..5.0, 1..200)) {
            let config = RPropConfig::default();
            let mut params = vec![Matrix::zeros(1, 3)];
            let mut state = RPropState::new(&params, config).unwrap();
            for (t, g) in grads.iter().enumerate() {
                let grad = Matrix::from_rows(&[[*g, -g, if t % 3 == 0 { 0.0 } else { *g }]]);
                state.step(&mut params, &[grad]).unwrap();
                for &s in state.step_sizes(0) {
                    prop_assert!(s >= config.delta_min && s <= config.delta_max);
                }
            }
        }

        #[test]
        fn converges_on_quadratic(start in -10.0f64..10.0, center in -3.0f64..3.0, curvature in 0.1f64..10.0) {
            let mut params = vec![scalar(start)];
            let mut state = RPropState::new(&params, RPropConfig::default()).unwrap();
            let grad = |x: f64| curvature * (x - center);
            let mut reached = false;
            for _ in 0..500 {
                let g = grad(params[0].get(0, 0));
                if g.abs() < 1e-6 {
                    reached = true;
                    break;
                }
                state.step(&mut params, &[scalar(g)]).unwrap();
            }
            prop_assert!(reached, "final x = {}", params[0].get(0, 0));
        }
    }
}
