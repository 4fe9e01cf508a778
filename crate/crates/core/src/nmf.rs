//! KL-NMF with Lee–Seung multiplicative updates.
//!
//! `X ≈ W·H` with `W` (bins × rank) holding spectral bases and `H`
//! (rank × frames) their activations. Both factors are initialised i.i.d.
//! uniform in `(0.1, 1.1)` and stay non-negative because every update is a
//! product of non-negative terms.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{fmt_shape, kl_cost, l1_norm, seeded_rng, Convergence, Matrix, SeededRng, EPS};

const INIT_LOW: f64 = 0.1;
const INIT_HIGH: f64 = 1.1;

#[derive(Debug, Clone, PartialEq)]
pub struct NmfConfig {
    pub rank: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Early stop once the relative cost change stays below `tol` for
    /// `patience` consecutive iterations. `tol = 0` disables it.
    pub tol: f64,
    pub patience: usize,
}

impl NmfConfig {
    pub fn new(rank: usize, seed: u64) -> Self {
        Self {
            rank,
            iterations: 500,
            seed,
            tol: 1e-7,
            patience: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmfModel {
    pub w: Matrix,
    pub h: Matrix,
    /// `cost_trace[0]` is the cost at initialisation, `cost_trace[t]` the cost
    /// after `t` full iterations.
    pub cost_trace: Vec<f64>,
}

impl NmfModel {
    pub fn rank(&self) -> usize {
        self.w.cols()
    }

    pub fn reconstruction(&self) -> Matrix {
        self.w.matmul(&self.h)
    }

    pub fn final_cost(&self) -> f64 {
        self.cost_trace.last().copied().unwrap_or(f64::NAN)
    }

    /// Rescales so every column of `W` sums to one, moving the scale into
    /// the matching row of `H`. Zero columns are left alone.
    pub fn canonicalize(&mut self) {
        let sums = self.w.col_sums();
        let cols = self.w.cols();
        for (i, v) in self.w.as_mut_slice().iter_mut().enumerate() {
            let s = sums[i % cols];
            if s > 0.0 {
                *v /= s;
            }
        }
        for (k, &s) in sums.iter().enumerate() {
            if s > 0.0 {
                self.h.row_mut(k).iter_mut().for_each(|v| *v *= s);
            }
        }
    }
}

/// Activation-only fitting settings. `lambda` adds `λ‖H‖₁` to the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationConfig {
    pub iterations: usize,
    pub seed: u64,
    pub tol: f64,
    pub patience: usize,
    pub lambda: f64,
}

impl ActivationConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            iterations: 500,
            seed,
            tol: 1e-7,
            patience: 10,
            lambda: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationFit {
    pub h: Matrix,
    pub cost_trace: Vec<f64>,
}

fn validate_input(x: &Matrix) -> Result<()> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("empty input matrix".into()));
    }
    if x.as_slice().iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument("input must be finite and non-negative".into()));
    }
    Ok(())
}

fn random_positive(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(INIT_LOW..INIT_HIGH))
}

/// `X ⊘ max(WH, ε)`.
fn ratio(x: &Matrix, wh: &Matrix) -> Matrix {
    x.zip_map(wh, |a, b| a / b.max(EPS))
}

fn update_h(x: &Matrix, w: &Matrix, h: &mut Matrix, w_col_sums: &[f64], lambda: f64) {
    let numer = w.t_matmul(&ratio(x, &w.matmul(h)));
    let cols = h.cols();
    for (i, (v, n)) in h.as_mut_slice().iter_mut().zip(numer.as_slice()).enumerate() {
        let denom = (w_col_sums[i / cols] + lambda).max(EPS);
        *v *= n / denom;
    }
}

fn update_w(x: &Matrix, w: &mut Matrix, h: &Matrix) {
    let numer = ratio(x, &w.matmul(h)).matmul_t(h);
    let h_row_sums = h.row_sums();
    let cols = w.cols();
    for (i, (v, n)) in w.as_mut_slice().iter_mut().zip(numer.as_slice()).enumerate() {
        *v *= n / h_row_sums[i % cols].max(EPS);
    }
}

/// Full KL-NMF factorisation of `x`. The returned model is canonicalised
/// (unit-sum columns of `W`).
pub fn nmf_train(x: &Matrix, config: &NmfConfig) -> Result<NmfModel> {
    validate_input(x)?;
    if x.as_slice().iter().all(|&v| v == 0.0) {
        return Err(Error::AllZeroInput);
    }
    if config.rank == 0 {
        return Err(Error::InvalidArgument("rank must be at least 1".into()));
    }
    if config.iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be at least 1".into()));
    }
    if config.rank > x.rows().min(x.cols()) {
        log::warn!(
            "NMF rank {} exceeds min dimension of {} input",
            config.rank,
            fmt_shape(x)
        );
    }

    let mut rng = seeded_rng(config.seed);
    let mut w = random_positive(x.rows(), config.rank, &mut rng);
    let mut h = random_positive(config.rank, x.cols(), &mut rng);

    let mut trace = Vec::with_capacity(config.iterations + 1);
    trace.push(kl_cost(x, &w.matmul(&h))?);
    let mut stop = Convergence::new(config.tol, config.patience);
    for _ in 0..config.iterations {
        update_h(x, &w, &mut h, &w.col_sums(), 0.0);
        update_w(x, &mut w, &h);
        let cost = kl_cost(x, &w.matmul(&h))?;
        let prev = *trace.last().unwrap();
        trace.push(cost);
        if stop.update(prev, cost) {
            break;
        }
    }

    let mut model = NmfModel {
        w,
        h,
        cost_trace: trace,
    };
    model.canonicalize();
    Ok(model)
}

/// Fits activations for fixed bases `w`; only `H` is updated.
pub fn nmf_fit_activations(x: &Matrix, w: &Matrix, config: &ActivationConfig) -> Result<ActivationFit> {
    let mut rng = seeded_rng(config.seed);
    let h = random_positive(w.cols(), x.cols(), &mut rng);
    nmf_fit_activations_from(x, w, h, config)
}

/// Like [`nmf_fit_activations`], starting from `h` instead of a random draw.
/// `config.seed` is unused.
pub fn nmf_fit_activations_from(
    x: &Matrix,
    w: &Matrix,
    mut h: Matrix,
    config: &ActivationConfig,
) -> Result<ActivationFit> {
    validate_input(x)?;
    if w.cols() == 0 {
        return Err(Error::InvalidArgument("basis matrix has no columns".into()));
    }
    if x.rows() != w.rows() {
        return Err(Error::shape(
            "nmf_fit_activations",
            format!("{} rows", w.rows()),
            format!("{} rows", x.rows()),
        ));
    }
    if h.shape() != (w.cols(), x.cols()) {
        return Err(Error::shape(
            "nmf_fit_activations",
            format!("{}x{}", w.cols(), x.cols()),
            fmt_shape(&h),
        ));
    }
    if config.lambda.is_nan() || config.lambda < 0.0 {
        return Err(Error::InvalidArgument("lambda must be non-negative".into()));
    }

    let objective = |h: &Matrix| -> Result<f64> { Ok(kl_cost(x, &w.matmul(h))? + config.lambda * l1_norm(h)) };

    let w_col_sums = w.col_sums();
    let mut trace = vec![objective(&h)?];
    let mut stop = Convergence::new(config.tol, config.patience);
    for _ in 0..config.iterations {
        update_h(x, w, &mut h, &w_col_sums, config.lambda);
        let cost = objective(&h)?;
        let prev = *trace.last().unwrap();
        trace.push(cost);
        if stop.update(prev, cost) {
            break;
        }
    }
    Ok(ActivationFit { h, cost_trace: trace })
}

/// Initial activations as drawn by [`nmf_fit_activations`].
pub fn random_activations(rank: usize, frames: usize, seed: u64) -> Matrix {
    random_positive(rank, frames, &mut seeded_rng(seed))
}

/// First index `t` where `trace[t] > trace[t-1] + slack`, if any.
pub fn first_increase(trace: &[f64], slack: f64) -> Option<usize> {
    trace.windows(2).position(|w| w[1] > w[0] + slack).map(|i| i + 1)
}
