//! The four-pitch toy note sequence and permutation-matched scoring.

use std::f64::consts::PI;

use rand::Rng;

use crate::dsp::{stft, StftConfig, Waveform};
use crate::error::{Error, Result};
use crate::numerics::{seeded_rng, Matrix};

pub const TOY_SAMPLE_RATE: u32 = 16_000;
/// D4, E♭4, F♯4, G4.
pub const TOY_PITCHES: [(&str, f64); 4] = [("D4", 293.665), ("Eb4", 311.127), ("F#4", 369.994), ("G4", 391.995)];
/// Indices into [`TOY_PITCHES`]: D, E♭, G, F♯, G.
pub const TOY_SEQUENCE: [usize; 5] = [0, 1, 3, 2, 3];
const SLOT_SECS: f64 = 0.5;
const TONE_SECS: f64 = 0.4;
const HARMONICS: usize = 6;
const HARMONIC_DECAY: f64 = 0.6;
const RAMP_SECS: f64 = 0.005;
/// Peak amplitude of the fundamental.
const TONE_GAIN: f64 = 0.4;
/// Half-width of the uniform noise floor added to the whole signal.
const NOISE_FLOOR: f64 = 0.09;
/// Frames whose isolated-note energy is below this fraction of the note's
/// peak frame energy are gated off.
const GATE_THRESHOLD: f64 = 1e-3;

/// Toy waveform with its ground truth.
#[derive(Debug, Clone)]
pub struct ToyNotes {
    pub wave: Waveform,
    pub stft: StftConfig,
    /// Unit-sum mean magnitude spectrum of each pitch, `bins × 4`.
    pub templates: Matrix,
    /// 0/1 activity of each pitch per STFT frame, `4 × frames`.
    pub gates: Matrix,
    /// Pitch index of each of the five notes.
    pub sequence: [usize; 5],
    /// Frame range `[start, end)` of each note.
    pub segments: Vec<(usize, usize)>,
}

fn tone(pitch: f64, phases: &[f64], sr: f64, len: usize) -> Vec<f64> {
    let ramp = (RAMP_SECS * sr) as usize;
    (0..len)
        .map(|n| {
            let t = n as f64 / sr;
            let s: f64 = (0..HARMONICS)
                .map(|h| HARMONIC_DECAY.powi(h as i32) * (2.0 * PI * pitch * (h + 1) as f64 * t + phases[h]).sin())
                .sum();
            let edge = n.min(len - 1 - n);
            let fade = if edge < ramp {
                0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            s * fade
        })
        .collect()
}

/// Synthesises D, E♭, G, F♯, G: 0.4 s harmonic tones in 0.5 s
/// slots. The seed sets the harmonic phases.
pub fn generate_toy_notes(seed: u64) -> ToyNotes {
    let sr = f64::from(TOY_SAMPLE_RATE);
    let mut rng = seeded_rng(seed);
    let phases: Vec<Vec<f64>> = (0..TOY_PITCHES.len())
        .map(|_| (0..HARMONICS).map(|_| rng.random_range(0.0..2.0 * PI)).collect())
        .collect();

    let slot = (SLOT_SECS * sr) as usize;
    let tone_len = (TONE_SECS * sr) as usize;
    let total = slot * TOY_SEQUENCE.len();
    let mut tracks = vec![vec![0.0; total]; TOY_PITCHES.len()];
    for (i, &p) in TOY_SEQUENCE.iter().enumerate() {
        let samples = tone(TOY_PITCHES[p].1, &phases[p], sr, tone_len);
        tracks[p][i * slot..i * slot + tone_len].copy_from_slice(&samples);
    }
    for track in tracks.iter_mut() {
        track.iter_mut().for_each(|v| *v *= TONE_GAIN);
    }
    // The floor keeps silent stretches from being exactly zero, as in a
    // real recording; gates and templates come from the clean tracks.
    let mix: Vec<f64> = (0..total)
        .map(|n| tracks.iter().map(|t| t[n]).sum::<f64>() + NOISE_FLOOR * rng.random_range(-1.0..1.0))
        .collect();

    let config = StftConfig::default();
    let spec = |x: &[f64]| {
        stft(
            &Waveform::new(x.to_vec(), TOY_SAMPLE_RATE).expect("finite samples"),
            &config,
        )
        .expect("non-empty signal")
        .magnitude
    };
    let frames = config.frames_for(total);
    let bins = config.bins();
    let mut templates = Matrix::zeros(bins, TOY_PITCHES.len());
    let mut gates = Matrix::zeros(TOY_PITCHES.len(), frames);
    for (p, track) in tracks.iter().enumerate() {
        let mag = spec(track);
        let energy: Vec<f64> = (0..frames).map(|t| mag.col(t).iter().map(|v| v * v).sum()).collect();
        let peak = energy.iter().cloned().fold(0.0, f64::max);
        let mut mean = vec![0.0; bins];
        for t in (0..frames).filter(|&t| energy[t] > GATE_THRESHOLD * peak) {
            gates.set(p, t, 1.0);
            for (m, v) in mean.iter_mut().zip(mag.col(t)) {
                *m += v;
            }
        }
        let sum: f64 = mean.iter().sum();
        for (k, m) in mean.iter().enumerate() {
            templates.set(k, p, m / sum);
        }
    }

    // Each note's frames: gated frames of its pitch that lie within its slot
    // (plus the window overhang on either side).
    let segments = TOY_SEQUENCE
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let lo = (i * slot) as f64;
            let hi = (i * slot + tone_len) as f64;
            let active: Vec<usize> = (0..frames)
                .filter(|&t| gates.get(p, t) > 0.0)
                .filter(|&t| {
                    let centre = (t * config.hop + config.n_fft / 2) as f64 - config.padding() as f64;
                    centre > lo - config.n_fft as f64 && centre < hi + config.n_fft as f64
                })
                .collect();
            (active[0], active[active.len() - 1] + 1)
        })
        .collect();

    ToyNotes {
        wave: Waveform::new(mix, TOY_SAMPLE_RATE).expect("finite samples"),
        stft: config,
        templates,
        gates,
        sequence: TOY_SEQUENCE,
        segments,
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Pearson correlation; 0 when either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let ca: Vec<f64> = a.iter().map(|x| x - ma).collect();
    let cb: Vec<f64> = b.iter().map(|x| x - mb).collect();
    cosine_similarity(&ca, &cb)
}

/// Assignment of truths (rows of `scores`) to distinct estimates (columns)
/// maximising the total score, by exhaustive search. Returns the chosen
/// column per row and the matched scores.
pub fn best_permutation(scores: &Matrix) -> Result<(Vec<usize>, Vec<f64>)> {
    let (n, m) = scores.shape();
    if n == 0 || n > m {
        return Err(Error::InvalidArgument(format!(
            "cannot match {n} truths to {m} estimates"
        )));
    }
    if m > 10 {
        return Err(Error::InvalidArgument(
            "exhaustive matching is limited to 10 estimates".into(),
        ));
    }
    fn search(
        scores: &Matrix,
        row: usize,
        used: &mut Vec<bool>,
        current: &mut Vec<usize>,
        best: &mut (f64, Vec<usize>),
        acc: f64,
    ) {
        if row == scores.rows() {
            if acc > best.0 {
                *best = (acc, current.clone());
            }
            return;
        }
        for j in 0..scores.cols() {
            if !used[j] {
                used[j] = true;
                current.push(j);
                search(scores, row + 1, used, current, best, acc + scores.get(row, j));
                current.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (f64::NEG_INFINITY, Vec::new());
    search(
        scores,
        0,
        &mut vec![false; m],
        &mut Vec::with_capacity(n),
        &mut best,
        0.0,
    );
    let matched = best.1.iter().enumerate().map(|(i, &j)| scores.get(i, j)).collect();
    Ok((best.1, matched))
}

/// Best-matched cosine similarity of each true template (column of `truth`)
/// with an estimated basis (column of `estimate`).
pub fn match_templates(truth: &Matrix, estimate: &Matrix) -> Result<Vec<f64>> {
    if truth.rows() != estimate.rows() {
        return Err(Error::shape("match_templates", truth.rows(), estimate.rows()));
    }
    let scores = Matrix::from_fn(truth.cols(), estimate.cols(), |i, j| {
        cosine_similarity(&truth.col(i), &estimate.col(j))
    });
    Ok(best_permutation(&scores)?.1)
}

/// Best-matched Pearson correlation of each true gate (row of `truth`) with
/// an estimated activation (row of `estimate`).
pub fn match_gates(truth: &Matrix, estimate: &Matrix) -> Result<Vec<f64>> {
    if truth.cols() != estimate.cols() {
        return Err(Error::shape("match_gates", truth.cols(), estimate.cols()));
    }
    let scores = Matrix::from_fn(truth.rows(), estimate.rows(), |i, j| {
        pearson(truth.row(i), estimate.row(j))
    });
    Ok(best_permutation(&scores)?.1)
}
