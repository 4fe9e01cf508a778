use super::Waveform;
use crate::error::{Error, Result};

/// A two-source mixture and the scaled references that sum to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub mixture: Waveform,
    pub source1: Waveform,
    pub source2: Waveform,
    /// Gain applied to the second source.
    pub gain: f64,
}

pub fn rms(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64).sqrt()
}

/// Mixes `s1` with a rescaled `s2` so that the power ratio of `s1` to the
/// scaled `s2` over their overlapping region is `snr_db`. The shorter
/// signal is zero-padded to the longer one.
pub fn make_mixture(s1: &Waveform, s2: &Waveform, snr_db: f64) -> Result<Mixture> {
    if s1.sample_rate != s2.sample_rate {
        return Err(Error::SampleRateMismatch(s1.sample_rate, s2.sample_rate));
    }
    let overlap = s1.len().min(s2.len());
    let r1 = rms(&s1.samples[..overlap]);
    let r2 = rms(&s2.samples[..overlap]);
    if r1 == 0.0 {
        return Err(Error::SilentSignal("first source".into()));
    }
    if r2 == 0.0 {
        return Err(Error::SilentSignal("second source".into()));
    }
    let gain = r1 / (r2 * 10f64.powf(snr_db / 20.0));
    let len = s1.len().max(s2.len());
    let source1 = s1.resized(len);
    let source2 = s2.scaled(gain).resized(len);
    let samples = source1
        .samples
        .iter()
        .zip(&source2.samples)
        .map(|(a, b)| a + b)
        .collect();
    Ok(Mixture {
        mixture: Waveform {
            samples,
            sample_rate: s1.sample_rate,
        },
        source1,
        source2,
        gain,
    })
}
