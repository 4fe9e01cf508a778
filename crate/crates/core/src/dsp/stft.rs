use std::f64::consts::PI;

use realfft::num_complex::Complex64;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, EPS};

/// Framing parameters. Defaults: 512-point DFT, hop of 128 (25 %).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { n_fft: 512, hop: 128 }
    }
}

impl StftConfig {
    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Zeros added before the first and after the last sample.
    pub fn padding(&self) -> usize {
        self.n_fft - self.hop
    }

    /// Frame count for a signal of `len` samples.
    pub fn frames_for(&self, len: usize) -> usize {
        let span = len + 2 * self.padding() - self.n_fft;
        span.div_ceil(self.hop) + 1
    }

    fn validate(&self) -> Result<()> {
        if self.n_fft < 2 || !self.n_fft.is_multiple_of(2) || self.hop == 0 || self.hop > self.n_fft {
            return Err(Error::InvalidArgument(format!(
                "invalid STFT framing n_fft={} hop={}",
                self.n_fft, self.hop
            )));
        }
        Ok(())
    }
}

/// One-sided spectrogram stored as separate magnitude and phase matrices
/// (`bins × frames`), plus what is needed to invert it.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub magnitude: Matrix,
    /// Radians in `(−π, π]`.
    pub phase: Matrix,
    pub n_fft: usize,
    pub hop: usize,
    pub sample_rate: u32,
    /// Length of the analysed signal in samples.
    pub signal_len: usize,
}

impl ComplexSpectrogram {
    pub fn config(&self) -> StftConfig {
        StftConfig {
            n_fft: self.n_fft,
            hop: self.hop,
        }
    }

    pub fn bins(&self) -> usize {
        self.magnitude.rows()
    }

    pub fn frames(&self) -> usize {
        self.magnitude.cols()
    }

    /// Complex bin values, row-major like the matrices.
    pub fn to_complex(&self) -> Vec<Complex64> {
        self.magnitude
            .as_slice()
            .iter()
            .zip(self.phase.as_slice())
            .map(|(&m, &p)| Complex64::from_polar(m, p))
            .collect()
    }

    /// Builds a spectrogram from complex bins laid out like
    /// [`to_complex`](Self::to_complex), taking framing metadata from `like`.
    pub fn from_complex(values: &[Complex64], like: &ComplexSpectrogram) -> Result<Self> {
        let (rows, cols) = like.magnitude.shape();
        if values.len() != rows * cols {
            return Err(Error::shape(
                "ComplexSpectrogram::from_complex",
                rows * cols,
                values.len(),
            ));
        }
        let magnitude = Matrix::from_vec(rows, cols, values.iter().map(|c| c.norm()).collect())?;
        let phase = Matrix::from_vec(rows, cols, values.iter().map(|c| wrap_phase(c.arg())).collect())?;
        Ok(Self {
            magnitude,
            phase,
            ..like.clone()
        })
    }

    /// Same phase and framing, new magnitude.
    pub fn with_magnitude(&self, magnitude: Matrix) -> Result<Self> {
        if magnitude.shape() != self.magnitude.shape() {
            return Err(Error::shape(
                "ComplexSpectrogram::with_magnitude",
                format!("{:?}", self.magnitude.shape()),
                format!("{:?}", magnitude.shape()),
            ));
        }
        Ok(Self {
            magnitude,
            ..self.clone()
        })
    }

    fn validate(&self) -> Result<()> {
        let config = self.config();
        config.validate()?;
        let expected = (config.bins(), config.frames_for(self.signal_len));
        if self.magnitude.shape() != expected || self.phase.shape() != expected {
            return Err(Error::InvalidArgument(format!(
                "spectrogram metadata inconsistent: expected {expected:?}, magnitude {:?}, phase {:?}",
                self.magnitude.shape(),
                self.phase.shape()
            )));
        }
        if self.signal_len == 0 || self.sample_rate == 0 {
            return Err(Error::InvalidArgument("empty signal metadata".into()));
        }
        Ok(())
    }
}

fn wrap_phase(p: f64) -> f64 {
    if p <= -PI {
        p + 2.0 * PI
    } else {
        p
    }
}

/// Square root of the periodic Hann window of length `n`.
pub fn sqrt_hann_window(n: usize) -> Vec<f64> {
    assert!(n >= 2, "window length must be at least 2");
    (0..n)
        .map(|i| {
            let hann = 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos();
            hann.max(0.0).sqrt()
        })
        .collect()
}

/// √Hann-windowed short-time Fourier transform.
///
/// The signal is zero-padded by `n_fft − hop` samples on both ends (and up
/// to one extra hop at the end to complete the last frame) so every input
/// sample lies under `n_fft / hop` full frames.
pub fn stft(signal: &Waveform, config: &StftConfig) -> Result<ComplexSpectrogram> {
    config.validate()?;
    let len = signal.samples.len();
    if len == 0 {
        return Err(Error::EmptySignal);
    }
    let n_fft = config.n_fft;
    let pad = config.padding();
    let frames = config.frames_for(len);
    let bins = config.bins();

    let mut padded = vec![0.0; (frames - 1) * config.hop + n_fft];
    padded[pad..pad + len].copy_from_slice(&signal.samples);

    let window = sqrt_hann_window(n_fft);
    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n_fft);
    let mut input = fft.make_input_vec();
    let mut output = fft.make_output_vec();
    let mut scratch = fft.make_scratch_vec();

    let mut magnitude = Matrix::zeros(bins, frames);
    let mut phase = Matrix::zeros(bins, frames);
    for t in 0..frames {
        let start = t * config.hop;
        for (dst, (&s, &w)) in input.iter_mut().zip(padded[start..start + n_fft].iter().zip(&window)) {
            *dst = s * w;
        }
        fft.process_with_scratch(&mut input, &mut output, &mut scratch)
            .expect("buffer sizes come from the planner");
        for (k, c) in output.iter().enumerate() {
            magnitude.set(k, t, c.norm());
            phase.set(k, t, wrap_phase(c.arg()));
        }
    }

    Ok(ComplexSpectrogram {
        magnitude,
        phase,
        n_fft,
        hop: config.hop,
        sample_rate: signal.sample_rate,
        signal_len: len,
    })
}

/// Weighted overlap-add inverse of [`stft`].
///
/// Each frame is inverted, multiplied by the √Hann synthesis window and
/// overlap-added; the sum is divided by the overlapped squared window
/// (floored at 1e-12) and the analysis padding is trimmed.
pub fn istft(spec: &ComplexSpectrogram) -> Result<Waveform> {
    spec.validate()?;
    let config = spec.config();
    let n_fft = config.n_fft;
    let frames = spec.frames();
    let window = sqrt_hann_window(n_fft);

    let mut planner = RealFftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(n_fft);
    let mut input = ifft.make_input_vec();
    let mut output = ifft.make_output_vec();
    let mut scratch = ifft.make_scratch_vec();

    let total = (frames - 1) * config.hop + n_fft;
    let mut acc = vec![0.0; total];
    let mut norm = vec![0.0; total];
    let scale = 1.0 / n_fft as f64;
    for t in 0..frames {
        for (k, c) in input.iter_mut().enumerate() {
            *c = Complex64::from_polar(spec.magnitude.get(k, t), spec.phase.get(k, t));
        }
        // DC and Nyquist bins of a real signal are real.
        input[0].im = 0.0;
        input[n_fft / 2].im = 0.0;
        ifft.process_with_scratch(&mut input, &mut output, &mut scratch)
            .expect("buffer sizes come from the planner");
        let start = t * config.hop;
        for (j, (&v, &w)) in output.iter().zip(&window).enumerate() {
            acc[start + j] += v * scale * w;
            norm[start + j] += w * w;
        }
    }

    let pad = config.padding();
    let samples = (pad..pad + spec.signal_len)
        .map(|i| acc[i] / norm[i].max(EPS))
        .collect();
    Ok(Waveform {
        samples,
        sample_rate: spec.sample_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::seeded_rng;
    use rand::Rng;

    fn noise(len: usize, seed: u64) -> Waveform {
        let mut rng = seeded_rng(seed);
        Waveform::new((0..len).map(|_| rng.random_range(-1.0..1.0)).collect(), 16_000).unwrap()
    }

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn window_values() {
        let w = sqrt_hann_window(4);
        let expected = [0.0, 0.5f64.sqrt(), 1.0, 0.5f64.sqrt()];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let w = sqrt_hann_window(512);
        assert_eq!(w[256], 1.0);
        assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn squared_window_overlap_is_two() {
        let n = 512;
        let hop = n / 4;
        let w = sqrt_hann_window(n);
        // Steady state: position p receives w²[p + k·hop] from four frames.
        for p in 0..hop {
            let sum: f64 = (0..4).map(|k| w[p + k * hop].powi(2)).sum();
            assert!((sum - 2.0).abs() < 1e-12, "{p}: {sum}");
        }
    }

    #[test]
    fn bin_centred_sinusoid_peaks_in_its_bin() {
        let k = 20;
        let sr = 16_000;
        let f = k as f64 * sr as f64 / 512.0;
        let x: Vec<f64> = (0..8000).map(|n| (2.0 * PI * f * n as f64 / sr as f64).sin()).collect();
        let spec = stft(&Waveform::new(x, sr).unwrap(), &StftConfig::default()).unwrap();
        // Frames whose support lies entirely inside the signal.
        for t in 3..spec.frames() - 3 {
            let col = spec.magnitude.col(t);
            let argmax = (0..col.len()).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap();
            assert_eq!(argmax, k, "frame {t}");
        }
    }

    #[test]
    fn zero_signal_zero_magnitude() {
        let spec = stft(&Waveform::new(vec![0.0; 1000], 8000).unwrap(), &StftConfig::default()).unwrap();
        assert_eq!(spec.magnitude.max(), 0.0);
        assert_eq!(spec.bins(), 257);
    }

    #[test]
    fn parseval_per_frame() {
        let config = StftConfig::default();
        let x = noise(3000, 1);
        let spec = stft(&x, &config).unwrap();
        let pad = config.padding();
        let mut padded = vec![0.0; (spec.frames() - 1) * config.hop + config.n_fft];
        padded[pad..pad + x.samples.len()].copy_from_slice(&x.samples);
        let w = sqrt_hann_window(config.n_fft);
        for t in 0..spec.frames() {
            let start = t * config.hop;
            let time_energy: f64 = (0..config.n_fft).map(|j| (padded[start + j] * w[j]).powi(2)).sum();
            let col = spec.magnitude.col(t);
            let half = config.n_fft / 2;
            let folded: f64 =
                col[0].powi(2) + col[half].powi(2) + 2.0 * col[1..half].iter().map(|m| m * m).sum::<f64>();
            let freq_energy = folded / config.n_fft as f64;
            assert!(
                (time_energy - freq_energy).abs() <= 1e-9 * time_energy.max(1e-300),
                "frame {t}"
            );
        }
    }

    #[test]
    fn matches_naive_dft() {
        let config = StftConfig { n_fft: 16, hop: 4 };
        let x = noise(40, 2);
        let spec = stft(&x, &config).unwrap();
        let w = sqrt_hann_window(16);
        let pad = config.padding();
        let t = 5;
        let frame: Vec<f64> = (0..16)
            .map(|j| {
                let idx = (t * 4 + j) as isize - pad as isize;
                let s = if idx >= 0 && (idx as usize) < 40 {
                    x.samples[idx as usize]
                } else {
                    0.0
                };
                s * w[j]
            })
            .collect();
        for k in 0..=8 {
            let c: Complex64 = frame
                .iter()
                .enumerate()
                .map(|(n, &v)| Complex64::from_polar(v, -2.0 * PI * (k * n) as f64 / 16.0))
                .sum();
            assert!((c.norm() - spec.magnitude.get(k, t)).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_one_second_noise() {
        let x = noise(16_000, 3);
        let y = istft(&stft(&x, &StftConfig::default()).unwrap()).unwrap();
        assert_eq!(y.samples.len(), x.samples.len());
        assert!(rel_l2(&y.samples, &x.samples) < 1e-6);
    }

    #[test]
    fn short_and_odd_lengths_round_trip() {
        for len in [1, 7, 129, 511, 513, 2049] {
            let x = noise(len, len as u64);
            let y = istft(&stft(&x, &StftConfig::default()).unwrap()).unwrap();
            assert!(rel_l2(&y.samples, &x.samples) < 1e-9, "len {len}");
        }
    }

    #[test]
    fn zero_spectrogram_inverts_to_silence() {
        let spec = stft(&Waveform::new(vec![0.0; 900], 8000).unwrap(), &StftConfig::default()).unwrap();
        assert!(istft(&spec).unwrap().samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inverse_is_linear() {
        let a = stft(&noise(2000, 4), &StftConfig::default()).unwrap();
        let b = stft(&noise(2000, 5), &StftConfig::default()).unwrap();
        let sum: Vec<Complex64> = a.to_complex().iter().zip(b.to_complex()).map(|(x, y)| x + y).collect();
        let ab = istft(&ComplexSpectrogram::from_complex(&sum, &a).unwrap()).unwrap();
        let ya = istft(&a).unwrap();
        let yb = istft(&b).unwrap();
        for i in 0..ab.samples.len() {
            assert!((ab.samples[i] - ya.samples[i] - yb.samples[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn phase_shift_leaves_magnitude() {
        // Period of 128 samples equals the hop: shifting by one period moves
        // frames onto frames.
        let period = 128;
        let sig = |shift: usize| -> Waveform {
            let x = (0..4096)
                .map(|n| {
                    let p = ((n + shift) % period) as f64 / period as f64;
                    (2.0 * PI * p).sin() + 0.3 * (6.0 * PI * p).cos()
                })
                .collect();
            Waveform::new(x, 8000).unwrap()
        };
        let config = StftConfig::default();
        let a = stft(&sig(0), &config).unwrap();
        let b = stft(&sig(period), &config).unwrap();
        let c = stft(&sig(37), &config).unwrap();
        for t in 4..a.frames() - 4 {
            for k in 0..a.bins() {
                assert!((a.magnitude.get(k, t) - b.magnitude.get(k, t)).abs() < 1e-9);
            }
        }
        assert!((0..a.bins()).any(|k| (a.phase.get(k, 10) - c.phase.get(k, 10)).abs() > 1e-3));
    }

    #[test]
    fn rejects_empty_and_inconsistent() {
        let empty = Waveform {
            samples: vec![],
            sample_rate: 8000,
        };
        assert!(matches!(stft(&empty, &StftConfig::default()), Err(Error::EmptySignal)));
        let mut spec = stft(&noise(600, 6), &StftConfig::default()).unwrap();
        spec.signal_len = 5000;
        assert!(istft(&spec).is_err());
    }
}
