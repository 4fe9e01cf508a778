//! Synthetic stand-ins for a speech corpus: band-limited noise and
//! formant-shaped harmonic "speakers".

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use realfft::RealFftPlanner;

use crate::dsp::{stft, write_wav, StftConfig, WavFormat, Waveform};
use crate::error::{Error, Result};
use crate::numerics::{seeded_rng, SeedHasher, SeededRng};

/// Lowest and highest first-formant centre across speakers.
const FORMANT_LOW_HZ: f64 = 500.0;
const FORMANT_SPAN_HZ: f64 = 6000.0;
/// Offset of the weaker second formant above the first.
const SECOND_FORMANT_HZ: f64 = 500.0;
const FORMANT_WIDTH_HZ: f64 = 250.0;

/// Multiplies the spectrum of `x` by `gain(f)` (frequency in Hz).
fn shape_spectrum(x: &[f64], sample_rate: u32, gain: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = x.len();
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut input = x.to_vec();
    let mut spectrum = fwd.make_output_vec();
    fwd.process(&mut input, &mut spectrum).expect("planner-sized buffers");
    let df = f64::from(sample_rate) / n as f64;
    for (k, c) in spectrum.iter_mut().enumerate() {
        *c *= gain(k as f64 * df) / n as f64;
    }
    spectrum[0].im = 0.0;
    if n.is_multiple_of(2) {
        spectrum[n / 2].im = 0.0;
    }
    let mut out = inv.make_output_vec();
    inv.process(&mut spectrum, &mut out).expect("planner-sized buffers");
    out
}

/// White noise restricted to `[lo_hz, hi_hz]` by zeroing all other DFT bins,
/// scaled to the given RMS.
pub fn bandlimited_noise(len: usize, sample_rate: u32, lo_hz: f64, hi_hz: f64, rms: f64, seed: u64) -> Waveform {
    let mut rng = seeded_rng(seed);
    let white: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut x = shape_spectrum(
        &white,
        sample_rate,
        |f| if f >= lo_hz && f <= hi_hz { 1.0 } else { 0.0 },
    );
    let current = crate::dsp::rms(&x);
    if current > 0.0 {
        x.iter_mut().for_each(|v| *v *= rms / current);
    }
    Waveform::new(x, sample_rate).expect("finite samples")
}

/// Fixed characteristics of one synthetic speaker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Voice {
    pub formants: [f64; 2],
    /// Range of fundamental frequencies, Hz.
    pub f0_range: (f64, f64),
    /// Level of the shaped noise component relative to the voiced part.
    pub breathiness: f64,
}

impl Voice {
    fn envelope(&self, f: f64) -> f64 {
        let bump = |c: f64| (-(f - c).powi(2) / (2.0 * FORMANT_WIDTH_HZ * FORMANT_WIDTH_HZ)).exp();
        bump(self.formants[0]) + 0.5 * bump(self.formants[1])
    }
}

/// Voice of speaker `index` out of `n_speakers`. First formants are spread
/// evenly over 500–6500 Hz, so spectral centroids of different speakers
/// differ by more than 500 Hz as long as `n_speakers ≤ 13`.
pub fn speaker_voice(index: usize, n_speakers: usize, seed: u64) -> Voice {
    let mut rng = seeded_rng(SeedHasher::new(seed).mix_str("voice").mix_u64(index as u64).finish());
    let spacing = if n_speakers > 1 {
        FORMANT_SPAN_HZ / (n_speakers - 1) as f64
    } else {
        0.0
    };
    let f1 = FORMANT_LOW_HZ + spacing * index as f64;
    let low = rng.random_range(90.0..180.0);
    Voice {
        formants: [f1, f1 + SECOND_FORMANT_HZ],
        f0_range: (low, low * rng.random_range(1.3..1.6)),
        breathiness: rng.random_range(0.05..0.2),
    }
}

/// A clip of "syllables": harmonic bursts with gliding pitch, shaped by the
/// voice's formants, separated by short pauses.
pub fn synthesize_clip(voice: &Voice, seconds: f64, sample_rate: u32, rng: &mut SeededRng) -> Waveform {
    let sr = f64::from(sample_rate);
    let len = (seconds * sr).round() as usize;
    let mut voiced = vec![0.0; len];
    let mut envelope = vec![0.0; len];
    let mut pos = (rng.random_range(0.0..0.05) * sr) as usize;
    while pos < len {
        let dur = ((rng.random_range(0.12..0.3) * sr) as usize).min(len - pos);
        let f_start = rng.random_range(voice.f0_range.0..voice.f0_range.1);
        let f_end = rng.random_range(voice.f0_range.0..voice.f0_range.1);
        // Per-syllable formant jitter, like different vowels.
        let shift = rng.random_range(0.93..1.07);
        let shifted = Voice {
            formants: [voice.formants[0] * shift, voice.formants[1] * shift],
            ..*voice
        };
        let max_h = ((0.45 * sr) / f_start.max(f_end)) as usize;
        let amps: Vec<(f64, f64)> = (1..=max_h)
            .map(|h| (shifted.envelope(h as f64 * f_start), rng.random_range(0.0..2.0 * PI)))
            .collect();
        let mut phase = 0.0;
        for i in 0..dur {
            let frac = i as f64 / dur as f64;
            let f0 = f_start + (f_end - f_start) * frac;
            phase += 2.0 * PI * f0 / sr;
            let env = (PI * frac).sin().powi(2);
            let mut s = 0.0;
            for (h, &(a, p)) in amps.iter().enumerate() {
                if a > 1e-3 && (h + 1) as f64 * f0 < 0.45 * sr {
                    s += a * ((h + 1) as f64 * phase + p).sin();
                }
            }
            voiced[pos + i] = s * env;
            envelope[pos + i] = env;
        }
        pos += dur + (rng.random_range(0.02..0.08) * sr) as usize;
    }
    let white: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let breath = shape_spectrum(&white, sample_rate, |f| voice.envelope(f));
    let (rv, rb) = (crate::dsp::rms(&voiced), crate::dsp::rms(&breath));
    let mut x: Vec<f64> = voiced
        .iter()
        .zip(&breath)
        .zip(&envelope)
        .map(|((v, b), e)| v + voice.breathiness * rv / rb.max(1e-300) * b * e)
        .collect();
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    Waveform::new(x, sample_rate).expect("finite samples")
}

/// Magnitude-weighted mean frequency over all STFT frames, Hz.
pub fn spectral_centroid(wave: &Waveform, config: &StftConfig) -> Result<f64> {
    let mag = stft(wave, config)?.magnitude;
    let df = f64::from(wave.sample_rate) / config.n_fft as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..mag.rows() {
        let s: f64 = mag.row(k).iter().sum();
        num += k as f64 * df * s;
        den += s;
    }
    if den == 0.0 {
        return Err(Error::SilentSignal("spectral centroid of silence".into()));
    }
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpusConfig {
    pub seed: u64,
    pub n_speakers: usize,
    pub clips_per_speaker: usize,
    pub clip_seconds: f64,
    pub sample_rate: u32,
}

impl SyntheticCorpusConfig {
    pub fn new(seed: u64, n_speakers: usize, clips_per_speaker: usize) -> Self {
        Self {
            seed,
            n_speakers,
            clips_per_speaker,
            clip_seconds: 1.0,
            sample_rate: 16_000,
        }
    }
}

pub fn speaker_id(index: usize) -> String {
    format!("spk{index:02}")
}

pub fn clip_name(index: usize) -> String {
    format!("clip{index:02}.wav")
}

/// Writes `<root>/spkNN/clipMM.wav` (32-bit float) for every speaker and
/// clip. Returns the speaker directories.
pub fn make_synthetic_corpus(root: impl AsRef<Path>, config: &SyntheticCorpusConfig) -> Result<Vec<PathBuf>> {
    if config.n_speakers < 2 {
        return Err(Error::InvalidArgument("a corpus needs at least two speakers".into()));
    }
    if config.clips_per_speaker < 2 {
        return Err(Error::InvalidArgument("each speaker needs at least two clips".into()));
    }
    if config.clip_seconds.is_nan() || config.clip_seconds <= 0.0 {
        return Err(Error::InvalidArgument("clip length must be positive".into()));
    }
    let root = root.as_ref();
    let mut dirs = Vec::with_capacity(config.n_speakers);
    for s in 0..config.n_speakers {
        let voice = speaker_voice(s, config.n_speakers, config.seed);
        let dir = root.join(speaker_id(s));
        fs::create_dir_all(&dir)?;
        for c in 0..config.clips_per_speaker {
            let mut rng = seeded_rng(
                SeedHasher::new(config.seed)
                    .mix_str("clip")
                    .mix_u64(s as u64)
                    .mix_u64(c as u64)
                    .finish(),
            );
            let wave = synthesize_clip(&voice, config.clip_seconds, config.sample_rate, &mut rng);
            write_wav(dir.join(clip_name(c)), &wave, WavFormat::Float32)?;
        }
        dirs.push(dir);
    }
    Ok(dirs)
}
