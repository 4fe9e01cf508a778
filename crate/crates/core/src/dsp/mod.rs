//! Audio front end: √Hann STFT analysis and synthesis, WAV I/O, mixing at a
//! target SNR, and soft-mask reconstruction of separated sources.

mod mask;
mod mix;
mod stft;
mod wav;

pub use mask::{mask_reconstruct, soft_masks};
pub use mix::{make_mixture, rms, Mixture};
pub use stft::{istft, sqrt_hann_window, stft, ComplexSpectrogram, StftConfig};
pub use wav::{read_wav, write_wav, WavFormat};

use crate::error::{Error, Result};

/// Mono audio with samples nominally in `[−1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite sample".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform {
            samples: self.samples.iter().map(|v| v * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Copy zero-padded (or truncated) to `len` samples.
    pub fn resized(&self, len: usize) -> Waveform {
        let mut samples = self.samples.clone();
        samples.resize(len, 0.0);
        Waveform {
            samples,
            sample_rate: self.sample_rate,
        }
    }
}
