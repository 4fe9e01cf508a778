use rand::Rng;

use super::model::{backprop, Decoder};
use super::train::{validate_spectrogram, TrainConfig};
use crate::error::{Error, Result};
use crate::numerics::{
    fmt_shape, kl_cost, kl_gradient, l1_norm, seeded_rng, softplus_and_slope, Convergence, Matrix, RPropState,
};

/// Range of the uniform initialisation of the free latent parameters `Z`.
const Z_INIT: f64 = 0.1;

/// Latent code for one decoder, `H = softplus(Z)`.
#[derive(Debug, Clone)]
pub struct LatentFit {
    pub latents: Matrix,
    pub reconstruction: Matrix,
    pub cost_trace: Vec<f64>,
}

/// Jointly fitted latents for several frozen decoders whose outputs sum to
/// the target.
#[derive(Debug, Clone)]
pub struct JointLatentFit {
    pub latents: Vec<Matrix>,
    /// Per-decoder outputs `X̂_k`.
    pub estimates: Vec<Matrix>,
    pub cost_trace: Vec<f64>,
}

impl JointLatentFit {
    pub fn final_cost(&self) -> f64 {
        *self.cost_trace.last().unwrap()
    }
}

/// Initial free parameters for a latent block. Every block is drawn from a
/// fresh generator seeded with `seed`, so a block's start depends only on
/// its shape; reordering decoders reorders the fit without changing it.
pub(crate) fn initial_z(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = seeded_rng(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-Z_INIT..=Z_INIT))
}

fn softplus_with_slope(z: &Matrix) -> (Matrix, Matrix) {
    let mut h = Matrix::zeros(z.rows(), z.cols());
    let mut s = Matrix::zeros(z.rows(), z.cols());
    for ((&zi, hi), si) in z.as_slice().iter().zip(h.as_mut_slice()).zip(s.as_mut_slice()) {
        (*hi, *si) = softplus_and_slope(zi);
    }
    (h, s)
}

/// Estimates decoder inputs `H` so that `decoder(H) ≈ x`, minimising
/// `D(x, decoder(H)) + λ‖H‖₁` over `H = softplus(Z)`. The decoder is only
/// borrowed and never modified.
pub fn nae_fit_latents(decoder: &Decoder, x: &Matrix, config: &TrainConfig) -> Result<LatentFit> {
    let joint = fit_latents_joint(&[decoder], x, config)?;
    Ok(LatentFit {
        latents: joint.latents.into_iter().next().unwrap(),
        reconstruction: joint.estimates.into_iter().next().unwrap(),
        cost_trace: joint.cost_trace,
    })
}

/// Joint iRprop− fit of one latent block per decoder against
/// `D(x, Σ_k decoder_k(H_k)) + λ Σ_k ‖H_k‖₁`.
pub fn fit_latents_joint(decoders: &[&Decoder], x: &Matrix, config: &TrainConfig) -> Result<JointLatentFit> {
    validate_spectrogram(x, "fit_latents")?;
    config.validate()?;
    if decoders.is_empty() {
        return Err(Error::InvalidArgument("at least one decoder is required".into()));
    }
    for d in decoders {
        if d.output_size() != x.rows() {
            return Err(Error::shape(
                "fit_latents",
                format!("decoder output {} rows", d.output_size()),
                fmt_shape(x),
            ));
        }
    }

    let frames = x.cols();
    let mut z: Vec<Matrix> = decoders
        .iter()
        .map(|d| initial_z(d.latent_size(), frames, config.seed))
        .collect();
    let mut rprop = RPropState::new(&z, config.rprop)?;
    let mut stop = Convergence::new(config.tol, config.patience);
    let mut trace = Vec::with_capacity(config.max_iterations + 1);
    let mut updates = 0;

    loop {
        let mut latents = Vec::with_capacity(z.len());
        let mut slopes = Vec::with_capacity(z.len());
        let mut caches = Vec::with_capacity(z.len());
        let mut total = Matrix::zeros(x.rows(), frames);
        let mut penalty = 0.0;
        for (d, zk) in decoders.iter().zip(&z) {
            let (h, s) = softplus_with_slope(zk);
            penalty += l1_norm(&h);
            let cache = d.forward(&h)?;
            total.add_assign(cache.reconstruction());
            latents.push(h);
            slopes.push(s);
            caches.push(cache);
        }
        let cost = kl_cost(x, &total)? + config.lambda * penalty;
        if !cost.is_finite() {
            return Err(Error::NonFiniteCost { iteration: updates });
        }
        let converged = trace.last().is_some_and(|&prev| stop.update(prev, cost));
        trace.push(cost);
        if converged || updates >= config.max_iterations {
            let estimates = caches.into_iter().map(|mut c| c.outputs.pop().unwrap()).collect();
            return Ok(JointLatentFit {
                latents,
                estimates,
                cost_trace: trace,
            });
        }

        let upstream = kl_gradient(x, &total);
        let grads: Vec<Matrix> = decoders
            .iter()
            .zip(&caches)
            .zip(&slopes)
            .map(|((d, cache), slope)| {
                let (_, d_h) = backprop(d.weights(), cache, upstream.clone(), Some(0), config.lambda);
                d_h.zip_map(slope, |g, s| g * s)
            })
            .collect();
        rprop.step(&mut z, &grads)?;
        updates += 1;
    }
}

/// The objective minimised by [`fit_latents_joint`] at given free
/// parameters `z`; exposed for gradient checks.
pub fn joint_latent_objective(decoders: &[&Decoder], x: &Matrix, z: &[Matrix], lambda: f64) -> Result<f64> {
    let mut total = Matrix::zeros(x.rows(), x.cols());
    let mut penalty = 0.0;
    for (d, zk) in decoders.iter().zip(z) {
        let (h, _) = softplus_with_slope(zk);
        penalty += l1_norm(&h);
        total.add_assign(&d.decode(&h)?);
    }
    Ok(kl_cost(x, &total)? + lambda * penalty)
}

/// Analytic gradient of [`joint_latent_objective`] with respect to `z`.
pub fn joint_latent_gradients(decoders: &[&Decoder], x: &Matrix, z: &[Matrix], lambda: f64) -> Result<Vec<Matrix>> {
    let mut total = Matrix::zeros(x.rows(), x.cols());
    let mut parts = Vec::new();
    for (d, zk) in decoders.iter().zip(z) {
        let (h, s) = softplus_with_slope(zk);
        let cache = d.forward(&h)?;
        total.add_assign(cache.reconstruction());
        parts.push((cache, s));
    }
    let upstream = kl_gradient(x, &total);
    Ok(decoders
        .iter()
        .zip(&parts)
        .map(|(d, (cache, s))| {
            let (_, d_h) = backprop(d.weights(), cache, upstream.clone(), Some(0), lambda);
            d_h.zip_map(s, |g, s| g * s)
        })
        .collect())
}
