//! Dense matrix arithmetic and the scalar building blocks shared by every
//! trainer: the softplus nonlinearity, the generalized KL cost, iRprop−, and
//! a central-difference gradient oracle.

mod matrix;
mod rng;
mod rprop;

pub use matrix::Matrix;
pub use rng::{seeded_rng, SeedHasher, SeededRng};
pub use rprop::{rprop_step, RPropConfig, RPropState};

use crate::error::{Error, Result};

/// Floor applied to operands of logs and divisions.
pub const EPS: f64 = 1e-12;

// Smallest positive subnormal; keeps softplus strictly positive where
// log(1 + e^x) underflows.
const TINY: f64 = f64::from_bits(1);

/// Stable `log(1 + e^x)`.
#[inline]
pub fn softplus_scalar(x: f64) -> f64 {
    (x.max(0.0) + (-x.abs()).exp().ln_1p()).max(TINY)
}

/// Logistic sigmoid, the derivative of [`softplus_scalar`].
#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softplus and its slope from a single exponential.
#[inline]
pub(crate) fn softplus_and_slope(x: f64) -> (f64, f64) {
    let e = (-x.abs()).exp();
    let value = (x.max(0.0) + e.ln_1p()).max(TINY);
    let slope = if x >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
    (value, slope)
}

pub fn softplus(x: &Matrix) -> Matrix {
    x.map(softplus_scalar)
}

pub fn softplus_derivative(x: &Matrix) -> Matrix {
    x.map(sigmoid_scalar)
}

#[inline]
fn kl_term(x: f64, xhat: f64) -> f64 {
    let xhat = xhat.max(EPS);
    if x < EPS {
        xhat - x
    } else {
        x * (x.ln() - xhat.ln()) - x + xhat
    }
}

/// Generalized KL divergence `Σ X(log X − log X̂) − X + X̂`.
///
/// `X̂` is floored at [`EPS`]; entries of `X` below [`EPS`] contribute
/// `X̂ − X` only.
pub fn kl_cost(x: &Matrix, xhat: &Matrix) -> Result<f64> {
    if x.shape() != xhat.shape() {
        return Err(Error::shape("kl_cost", fmt_shape(x), fmt_shape(xhat)));
    }
    Ok(x.as_slice()
        .iter()
        .zip(xhat.as_slice())
        .map(|(&a, &b)| kl_term(a, b))
        .sum())
}

/// `∂D/∂X̂ = 1 − X ⊘ X̂`, with the same flooring as [`kl_cost`].
pub(crate) fn kl_gradient(x: &Matrix, xhat: &Matrix) -> Matrix {
    x.zip_map(xhat, |a, b| 1.0 - a / b.max(EPS))
}

/// Entrywise 1-norm.
pub fn l1_norm(h: &Matrix) -> f64 {
    h.as_slice().iter().map(|v| v.abs()).sum()
}

/// Central-difference gradient of `objective` at `params`.
///
/// Panics if `epsilon` is not strictly positive.
pub fn finite_difference_gradient<F>(objective: F, params: &[Matrix], epsilon: f64) -> Vec<Matrix>
where
    F: Fn(&[Matrix]) -> f64,
{
    assert!(epsilon > 0.0, "epsilon must be positive");
    let mut work = params.to_vec();
    let mut grads = Vec::with_capacity(params.len());
    for block in 0..params.len() {
        let mut g = Matrix::zeros(params[block].rows(), params[block].cols());
        for idx in 0..params[block].len() {
            let orig = work[block].as_slice()[idx];
            work[block].as_mut_slice()[idx] = orig + epsilon;
            let plus = objective(&work);
            work[block].as_mut_slice()[idx] = orig - epsilon;
            let minus = objective(&work);
            work[block].as_mut_slice()[idx] = orig;
            g.as_mut_slice()[idx] = (plus - minus) / (2.0 * epsilon);
        }
        grads.push(g);
    }
    grads
}

/// Norm-wise relative error between two gradient lists.
pub fn gradient_relative_error(a: &[Matrix], b: &[Matrix]) -> f64 {
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (ga, gb) in a.iter().zip(b) {
        for (&x, &y) in ga.as_slice().iter().zip(gb.as_slice()) {
            diff += (x - y) * (x - y);
            na += x * x;
            nb += y * y;
        }
    }
    let scale = na.sqrt().max(nb.sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff.sqrt() / scale
    }
}

/// Relative-change stopping rule shared by the iterative fitters.
pub(crate) struct Convergence {
    tol: f64,
    patience: usize,
    quiet: usize,
}

impl Convergence {
    pub(crate) fn new(tol: f64, patience: usize) -> Self {
        Self {
            tol,
            patience,
            quiet: 0,
        }
    }

    /// Records a transition `prev → cost`; returns true once converged.
    pub(crate) fn update(&mut self, prev: f64, cost: f64) -> bool {
        if self.tol <= 0.0 || self.patience == 0 {
            return false;
        }
        let rel = (prev - cost).abs() / prev.abs().max(f64::MIN_POSITIVE);
        if rel < self.tol {
            self.quiet += 1;
        } else {
            self.quiet = 0;
        }
        self.quiet >= self.patience
    }
}

pub(crate) fn fmt_shape(m: &Matrix) -> String {
    format!("{}x{}", m.rows(), m.cols())
}
