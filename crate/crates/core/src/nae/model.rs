use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{fmt_shape, seeded_rng, softplus_and_slope, Matrix};
use crate::persist::{ModelFile, PayloadKind};

/// Provenance recorded with every trained model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub lambda: f64,
    pub iterations: usize,
    pub final_cost: f64,
}

impl TrainingMetadata {
    pub(crate) fn untrained(seed: u64) -> Self {
        Self {
            seed,
            lambda: 0.0,
            iterations: 0,
            final_cost: f64::NAN,
        }
    }
}

/// A non-negative autoencoder with `2L` softplus layers.
///
/// `weights[i]` maps layer `i` to layer `i + 1` and has shape
/// `layer_sizes[i + 1] × layer_sizes[i]`. Layers `0..L` form the encoder,
/// `L..2L` the decoder; the latent code is the output of layer `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct NaeModel {
    layer_sizes: Vec<usize>,
    weights: Vec<Matrix>,
    pub metadata: TrainingMetadata,
}

/// Check that sizes describe `2L` layers mirrored about the latent layer.
pub fn validate_layer_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 3 || sizes.len().is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "layer sizes must have odd length >= 3, got {sizes:?}"
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::InvalidArgument(format!("zero-width layer in {sizes:?}")));
    }
    let n = sizes.len() - 1;
    if (0..=n).any(|i| sizes[i] != sizes[n - i]) {
        return Err(Error::InvalidArgument(format!(
            "layer sizes are not symmetric: {sizes:?}"
        )));
    }
    Ok(())
}

/// Layer sizes for the two architectures used in separation:
/// `[m, k, m]` for `depth = 1`, `[m, k, …, k, m]` with `2·depth − 1` hidden
/// layers of width `k` otherwise.
pub fn uniform_layer_sizes(input: usize, width: usize, depth: usize) -> Vec<usize> {
    let mut sizes = vec![input];
    sizes.extend(std::iter::repeat_n(width, 2 * depth - 1));
    sizes.push(input);
    sizes
}

/// Glorot-uniform initialisation, `U[−a, a]` with `a = √(6/(fan_in+fan_out))`,
/// drawn layer by layer in row-major order.
pub(crate) fn glorot_weights(sizes: &[usize], seed: u64) -> Vec<Matrix> {
    let mut rng = seeded_rng(seed);
    sizes
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Matrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-a..=a))
        })
        .collect()
}

/// Intermediate values of one pass through a stack of softplus layers.
///
/// `outputs[0]` is the input; `outputs[i]` (`i ≥ 1`) is
/// `softplus(pre_activations[i-1])` and `slopes[i-1]` its derivative.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub pre_activations: Vec<Matrix>,
    pub outputs: Vec<Matrix>,
    pub slopes: Vec<Matrix>,
    depth: usize,
}

impl ForwardCache {
    pub fn input(&self) -> &Matrix {
        &self.outputs[0]
    }

    /// `H = Y_L`.
    pub fn latent(&self) -> &Matrix {
        &self.outputs[self.depth]
    }

    /// `X̂ = Y_{2L}`.
    pub fn reconstruction(&self) -> &Matrix {
        self.outputs.last().unwrap()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }
}

/// Runs `input` through `weights`, caching everything backprop needs.
pub(crate) fn run_layers(weights: &[Matrix], input: Matrix, depth: usize) -> ForwardCache {
    let mut pre_activations = Vec::with_capacity(weights.len());
    let mut slopes = Vec::with_capacity(weights.len());
    let mut outputs = Vec::with_capacity(weights.len() + 1);
    outputs.push(input);
    for w in weights {
        let a = w.matmul(outputs.last().unwrap());
        let mut y = Matrix::zeros(a.rows(), a.cols());
        let mut s = Matrix::zeros(a.rows(), a.cols());
        for ((&ai, yi), si) in a.as_slice().iter().zip(y.as_mut_slice()).zip(s.as_mut_slice()) {
            (*yi, *si) = softplus_and_slope(ai);
        }
        pre_activations.push(a);
        outputs.push(y);
        slopes.push(s);
    }
    ForwardCache {
        pre_activations,
        outputs,
        slopes,
        depth,
    }
}

/// Backpropagates `upstream = ∂L/∂(last output)` through cached layers.
///
/// Returns weight gradients and `∂L/∂outputs[0]`. `latent_bonus` is added to
/// the upstream gradient when it reaches `outputs[latent_index]` (the
/// derivative of `λ‖H‖₁` for positive `H`).
pub(crate) fn backprop(
    weights: &[Matrix],
    cache: &ForwardCache,
    mut upstream: Matrix,
    latent_index: Option<usize>,
    latent_bonus: f64,
) -> (Vec<Matrix>, Matrix) {
    let n = weights.len();
    let mut grads = vec![Matrix::zeros(0, 0); n];
    if latent_index == Some(n) && latent_bonus != 0.0 {
        upstream.as_mut_slice().iter_mut().for_each(|v| *v += latent_bonus);
    }
    for i in (0..n).rev() {
        let delta = upstream.zip_map(&cache.slopes[i], |g, s| g * s);
        grads[i] = delta.matmul_t(&cache.outputs[i]);
        upstream = weights[i].t_matmul(&delta);
        if latent_index == Some(i) && latent_bonus != 0.0 {
            upstream.as_mut_slice().iter_mut().for_each(|v| *v += latent_bonus);
        }
    }
    (grads, upstream)
}

impl NaeModel {
    /// A freshly initialised model.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        validate_layer_sizes(layer_sizes)?;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights: glorot_weights(layer_sizes, seed),
            metadata: TrainingMetadata::untrained(seed),
        })
    }

    /// Wraps existing weights, checking that they chain and are symmetric.
    pub fn from_weights(weights: Vec<Matrix>, metadata: TrainingMetadata) -> Result<Self> {
        let first = weights
            .first()
            .ok_or_else(|| Error::InvalidArgument("no weights".into()))?;
        let mut sizes = vec![first.cols()];
        for (i, w) in weights.iter().enumerate() {
            if w.cols() != *sizes.last().unwrap() {
                return Err(Error::shape(
                    "NaeModel::from_weights",
                    format!("layer {i} input width {}", sizes.last().unwrap()),
                    fmt_shape(w),
                ));
            }
            sizes.push(w.rows());
        }
        validate_layer_sizes(&sizes)?;
        Ok(Self {
            layer_sizes: sizes,
            weights,
            metadata,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    /// L, the number of encoder (and decoder) layers.
    pub fn depth(&self) -> usize {
        self.weights.len() / 2
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn latent_size(&self) -> usize {
        self.layer_sizes[self.depth()]
    }

    pub fn forward(&self, x: &Matrix) -> Result<ForwardCache> {
        if x.rows() != self.input_size() {
            return Err(Error::shape(
                "nae_forward",
                format!("{} rows", self.input_size()),
                fmt_shape(x),
            ));
        }
        Ok(run_layers(&self.weights, x.clone(), self.depth()))
    }

    /// Encoder output `H` for `x`.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        let depth = self.depth();
        if x.rows() != self.input_size() {
            return Err(Error::shape("NaeModel::encode", self.input_size(), fmt_shape(x)));
        }
        Ok(run_layers(&self.weights[..depth], x.clone(), depth)
            .outputs
            .pop()
            .unwrap())
    }

    /// The upper `L` layers; all that separation needs to keep.
    pub fn decoder(&self) -> Decoder {
        Decoder {
            weights: self.weights[self.depth()..].to_vec(),
        }
    }

    pub fn to_model_file(&self) -> ModelFile {
        ModelFile {
            kind: PayloadKind::Autoencoder,
            depth: self.depth() as u32,
            layer_sizes: self.layer_sizes.clone(),
            seed: self.metadata.seed,
            lambda: self.metadata.lambda,
            iterations: self.metadata.iterations as u64,
            final_cost: self.metadata.final_cost,
            matrices: self.weights.clone(),
        }
    }

    pub fn from_model_file(file: ModelFile) -> Result<Self> {
        if file.kind != PayloadKind::Autoencoder {
            return Err(Error::ModelFormat(format!(
                "expected autoencoder, found {:?}",
                file.kind
            )));
        }
        let metadata = TrainingMetadata {
            seed: file.seed,
            lambda: file.lambda,
            iterations: file.iterations as usize,
            final_cost: file.final_cost,
        };
        let model = Self::from_weights(file.matrices, metadata)?;
        if model.layer_sizes != file.layer_sizes || model.depth() as u32 != file.depth {
            return Err(Error::ModelFormat("header sizes disagree with weights".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_model_file().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_model_file(ModelFile::load(path)?)
    }
}

/// The decoder half of a trained NAE: maps a latent code of width
/// `latent_size` back to the input space.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    weights: Vec<Matrix>,
}

impl Decoder {
    pub fn new(weights: Vec<Matrix>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("decoder needs at least one layer".into()));
        }
        for (i, pair) in weights.windows(2).enumerate() {
            if pair[1].cols() != pair[0].rows() {
                return Err(Error::shape(
                    "Decoder::new",
                    format!("layer {} input width {}", i + 1, pair[0].rows()),
                    fmt_shape(&pair[1]),
                ));
            }
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn latent_size(&self) -> usize {
        self.weights[0].cols()
    }

    pub fn output_size(&self) -> usize {
        self.weights.last().unwrap().rows()
    }

    /// Layer widths from latent to output.
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.latent_size())
            .chain(self.weights.iter().map(Matrix::rows))
            .collect()
    }

    pub fn forward(&self, h: &Matrix) -> Result<ForwardCache> {
        if h.rows() != self.latent_size() {
            return Err(Error::shape("Decoder::forward", self.latent_size(), fmt_shape(h)));
        }
        Ok(run_layers(&self.weights, h.clone(), 0))
    }

    /// Just the reconstruction `decoder(H)`.
    pub fn decode(&self, h: &Matrix) -> Result<Matrix> {
        Ok(self.forward(h)?.outputs.pop().unwrap())
    }
}
