//! Supervised separation: one model per source, a joint fit of all models
//! to the mixture magnitude, and soft-mask reconstruction.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::{mask_reconstruct, stft, StftConfig, Waveform};
use crate::error::{Error, Result};
use crate::nae::{fit_latents_joint, nae_train, uniform_layer_sizes, Decoder, TrainConfig, TrainingMetadata};
use crate::nmf::{nmf_fit_activations_from, nmf_train, random_activations, ActivationConfig, NmfConfig};
use crate::numerics::{kl_cost, l1_norm, Matrix, EPS};
use crate::persist::{ModelFile, PayloadKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Nmf,
    NaeShallow,
    NaeDeep,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Nmf, ModelKind::NaeShallow, ModelKind::NaeDeep];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Nmf => "nmf",
            ModelKind::NaeShallow => "nae-shallow",
            ModelKind::NaeDeep => "nae-deep",
        }
    }

    fn is_nae(&self) -> bool {
        !matches!(self, ModelKind::Nmf)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown model kind {s:?} (expected nmf, nae-shallow or nae-deep)"
            ))
        })
    }
}

/// Model family and size. `rank` is the NMF rank or the width of every
/// hidden NAE layer; `depth` is `L` for [`ModelKind::NaeDeep`] and ignored
/// otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub rank: usize,
    pub depth: usize,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, rank: usize) -> Self {
        Self { kind, rank, depth: 2 }
    }

    /// Number of decoder layers.
    pub fn decoder_depth(&self) -> usize {
        match self.kind {
            ModelKind::Nmf => 0,
            ModelKind::NaeShallow => 1,
            ModelKind::NaeDeep => self.depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceDecoder {
    /// NMF bases, `bins × rank`, unit-sum columns.
    Basis(Matrix),
    Nae(Decoder),
}

/// What is kept of a trained source model: the part that maps a latent
/// code to a magnitude spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceModel {
    pub kind: ModelKind,
    pub decoder: SourceDecoder,
    pub metadata: TrainingMetadata,
}

impl SourceModel {
    pub fn bins(&self) -> usize {
        match &self.decoder {
            SourceDecoder::Basis(w) => w.rows(),
            SourceDecoder::Nae(d) => d.output_size(),
        }
    }

    pub fn latent_size(&self) -> usize {
        match &self.decoder {
            SourceDecoder::Basis(w) => w.cols(),
            SourceDecoder::Nae(d) => d.latent_size(),
        }
    }

    pub fn decode(&self, h: &Matrix) -> Result<Matrix> {
        match &self.decoder {
            SourceDecoder::Basis(w) => {
                if h.rows() != w.cols() {
                    return Err(Error::shape("decode", w.cols(), h.rows()));
                }
                Ok(w.matmul(h))
            }
            SourceDecoder::Nae(d) => d.decode(h),
        }
    }

    pub fn to_model_file(&self) -> ModelFile {
        let (kind, depth, layer_sizes, matrices) = match &self.decoder {
            SourceDecoder::Basis(w) => (PayloadKind::NmfBasis, 0, vec![w.rows(), w.cols()], vec![w.clone()]),
            SourceDecoder::Nae(d) => (
                PayloadKind::Decoder,
                d.depth() as u32,
                d.layer_sizes(),
                d.weights().to_vec(),
            ),
        };
        ModelFile {
            kind,
            depth,
            layer_sizes,
            seed: self.metadata.seed,
            lambda: self.metadata.lambda,
            iterations: self.metadata.iterations as u64,
            final_cost: self.metadata.final_cost,
            matrices,
        }
    }

    /// Accepts NMF bases, decoders, and full autoencoders (whose encoder is
    /// dropped).
    pub fn from_model_file(file: ModelFile) -> Result<Self> {
        let metadata = TrainingMetadata {
            seed: file.seed,
            lambda: file.lambda,
            iterations: file.iterations as usize,
            final_cost: file.final_cost,
        };
        let (kind, decoder) = match file.kind {
            PayloadKind::NmfBasis => {
                let [w]: [Matrix; 1] = file
                    .matrices
                    .try_into()
                    .map_err(|_| Error::ModelFormat("NMF payload must hold exactly one matrix".into()))?;
                if file.layer_sizes != [w.rows(), w.cols()] {
                    return Err(Error::ModelFormat("header sizes disagree with basis".into()));
                }
                (ModelKind::Nmf, SourceDecoder::Basis(w))
            }
            PayloadKind::Decoder => {
                let decoder = Decoder::new(file.matrices)?;
                if decoder.layer_sizes() != file.layer_sizes || decoder.depth() as u32 != file.depth {
                    return Err(Error::ModelFormat("header sizes disagree with weights".into()));
                }
                (nae_kind(decoder.depth()), SourceDecoder::Nae(decoder))
            }
            PayloadKind::Autoencoder => {
                let decoder = crate::nae::NaeModel::from_model_file(file)?.decoder();
                (nae_kind(decoder.depth()), SourceDecoder::Nae(decoder))
            }
        };
        Ok(Self {
            kind,
            decoder,
            metadata,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_model_file().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_model_file(ModelFile::load(path)?)
    }
}

fn nae_kind(depth: usize) -> ModelKind {
    if depth == 1 {
        ModelKind::NaeShallow
    } else {
        ModelKind::NaeDeep
    }
}

/// Magnitude spectrograms of `waves` concatenated along frames.
pub fn training_spectrogram(waves: &[Waveform], stft_config: &StftConfig) -> Result<Matrix> {
    let first = waves
        .first()
        .ok_or_else(|| Error::InvalidArgument("no training waveforms".into()))?;
    if let Some(w) = waves.iter().find(|w| w.sample_rate != first.sample_rate) {
        return Err(Error::SampleRateMismatch(first.sample_rate, w.sample_rate));
    }
    if waves.iter().all(|w| w.samples.iter().all(|&v| v == 0.0)) {
        return Err(Error::SilentSignal("all training waveforms are silent".into()));
    }
    let mags = waves
        .iter()
        .map(|w| stft(w, stft_config).map(|s| s.magnitude))
        .collect::<Result<Vec<_>>>()?;
    Matrix::hstack(&mags.iter().collect::<Vec<_>>())
}

/// Trains a source model on the concatenated magnitude spectrograms of
/// `waves`. NMF uses `config.max_iterations`, `tol`, `patience` and `seed`;
/// NAEs use all of `config`.
pub fn train_source_model(
    waves: &[Waveform],
    spec: &ModelSpec,
    stft_config: &StftConfig,
    config: &TrainConfig,
) -> Result<SourceModel> {
    let x = training_spectrogram(waves, stft_config)?;
    train_source_model_on(&x, spec, config)
}

/// [`train_source_model`] on a precomputed magnitude spectrogram.
pub fn train_source_model_on(x: &Matrix, spec: &ModelSpec, config: &TrainConfig) -> Result<SourceModel> {
    if spec.rank == 0 {
        return Err(Error::InvalidArgument("rank must be at least 1".into()));
    }
    match spec.kind {
        ModelKind::Nmf => {
            let nmf = nmf_train(
                x,
                &NmfConfig {
                    rank: spec.rank,
                    iterations: config.max_iterations,
                    seed: config.seed,
                    tol: config.tol,
                    patience: config.patience,
                },
            )?;
            Ok(SourceModel {
                kind: ModelKind::Nmf,
                metadata: TrainingMetadata {
                    seed: config.seed,
                    lambda: 0.0,
                    iterations: nmf.cost_trace.len() - 1,
                    final_cost: nmf.final_cost(),
                },
                decoder: SourceDecoder::Basis(nmf.w),
            })
        }
        ModelKind::NaeShallow | ModelKind::NaeDeep => {
            let depth = spec.decoder_depth();
            if depth == 0 {
                return Err(Error::InvalidArgument("NAE depth must be at least 1".into()));
            }
            let trained = nae_train(x, &uniform_layer_sizes(x.rows(), spec.rank, depth), config)?;
            Ok(SourceModel {
                kind: spec.kind,
                decoder: SourceDecoder::Nae(trained.model.decoder()),
                metadata: trained.model.metadata,
            })
        }
    }
}

/// Joint explanation of a mixture by several source models.
#[derive(Debug, Clone)]
pub struct MixtureFit {
    pub latents: Vec<Matrix>,
    /// Per-source magnitude estimates, strictly positive.
    pub estimates: Vec<Matrix>,
    pub cost_trace: Vec<f64>,
}

impl MixtureFit {
    pub fn final_cost(&self) -> f64 {
        *self.cost_trace.last().unwrap()
    }
}

/// Jointly fits one latent block per model so that the summed model outputs
/// explain `mix_mag`, minimising `D(X, Σ_k X̂_k) + λ Σ_k ‖H_k‖₁`.
///
/// NAE decoders are fitted together with iRprop− over softplus-parameterised
/// latents. NMF bases are stacked and fitted with multiplicative updates.
/// Every block starts from a generator seeded with `config.seed`, so the
/// result does not depend on model order. Models are never modified.
pub fn mixture_fit(models: &[&SourceModel], mix_mag: &Matrix, config: &TrainConfig) -> Result<MixtureFit> {
    let first = models
        .first()
        .ok_or_else(|| Error::InvalidArgument("at least one source model is required".into()))?;
    for m in models {
        if m.bins() != mix_mag.rows() {
            return Err(Error::shape(
                "mixture_fit",
                format!("{} bins", mix_mag.rows()),
                format!("{} model bins", m.bins()),
            ));
        }
        if m.kind.is_nae() != first.kind.is_nae() {
            return Err(Error::InvalidArgument(
                "cannot mix NMF and NAE models in one fit".into(),
            ));
        }
    }

    if first.kind.is_nae() {
        let decoders: Vec<&Decoder> = models
            .iter()
            .map(|m| match &m.decoder {
                SourceDecoder::Nae(d) => d,
                SourceDecoder::Basis(_) => unreachable!("kinds checked above"),
            })
            .collect();
        let fit = fit_latents_joint(&decoders, mix_mag, config)?;
        return Ok(MixtureFit {
            latents: fit.latents,
            estimates: fit.estimates,
            cost_trace: fit.cost_trace,
        });
    }

    let bases: Vec<&Matrix> = models
        .iter()
        .map(|m| match &m.decoder {
            SourceDecoder::Basis(w) => w,
            SourceDecoder::Nae(_) => unreachable!("kinds checked above"),
        })
        .collect();
    let stacked = Matrix::hstack(&bases)?;
    let h0 = Matrix::vstack(
        &bases
            .iter()
            .map(|w| random_activations(w.cols(), mix_mag.cols(), config.seed))
            .collect::<Vec<_>>()
            .iter()
            .collect::<Vec<_>>(),
    )?;
    let activation = ActivationConfig {
        iterations: config.max_iterations,
        seed: config.seed,
        tol: config.tol,
        patience: config.patience,
        lambda: config.lambda,
    };
    let fit = nmf_fit_activations_from(mix_mag, &stacked, h0, &activation)?;
    let mut latents = Vec::with_capacity(bases.len());
    let mut estimates = Vec::with_capacity(bases.len());
    let mut row = 0;
    for w in &bases {
        let h = fit.h.row_block(row, row + w.cols());
        row += w.cols();
        estimates.push(w.matmul(&h).map(|v| v.max(EPS)));
        latents.push(h);
    }
    Ok(MixtureFit {
        latents,
        estimates,
        cost_trace: fit.cost_trace,
    })
}

/// `D(X, Σ_k X̂_k) + λ Σ_k ‖H_k‖₁` for given latents.
pub fn mixture_objective(models: &[&SourceModel], mix_mag: &Matrix, latents: &[Matrix], lambda: f64) -> Result<f64> {
    if models.len() != latents.len() {
        return Err(Error::shape("mixture_objective", models.len(), latents.len()));
    }
    let mut total = Matrix::zeros(mix_mag.rows(), mix_mag.cols());
    let mut penalty = 0.0;
    for (m, h) in models.iter().zip(latents) {
        total.add_assign(&m.decode(h)?);
        penalty += l1_norm(h);
    }
    Ok(kl_cost(mix_mag, &total)? + lambda * penalty)
}

/// STFT, joint fit and soft-mask reconstruction. Returns one waveform per
/// model, each as long as `mixture`.
pub fn separate(
    mixture: &Waveform,
    models: &[&SourceModel],
    stft_config: &StftConfig,
    config: &TrainConfig,
) -> Result<Vec<Waveform>> {
    Ok(separate_with_fit(mixture, models, stft_config, config)?.0)
}

/// [`separate`], also returning the underlying fit.
pub fn separate_with_fit(
    mixture: &Waveform,
    models: &[&SourceModel],
    stft_config: &StftConfig,
    config: &TrainConfig,
) -> Result<(Vec<Waveform>, MixtureFit)> {
    let spec = stft(mixture, stft_config)?;
    let fit = mixture_fit(models, &spec.magnitude, config)?;
    let waves = mask_reconstruct(&fit.estimates, &spec)?;
    Ok((waves, fit))
}
