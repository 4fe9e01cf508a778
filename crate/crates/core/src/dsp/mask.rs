use super::stft::{istft, ComplexSpectrogram};
use super::Waveform;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, EPS};

/// Ratio masks `X̂_i ⊘ Σ_j X̂_j`, with every estimate floored at 1e-12.
pub fn soft_masks(source_mags: &[Matrix]) -> Result<Vec<Matrix>> {
    let first = source_mags
        .first()
        .ok_or_else(|| Error::InvalidArgument("no source estimates".into()))?;
    let shape = first.shape();
    if let Some(bad) = source_mags.iter().find(|m| m.shape() != shape) {
        return Err(Error::shape(
            "soft_masks",
            format!("{shape:?}"),
            format!("{:?}", bad.shape()),
        ));
    }
    let mut total = Matrix::zeros(shape.0, shape.1);
    for m in source_mags {
        total.add_assign(&m.map(|v| v.max(EPS)));
    }
    Ok(source_mags
        .iter()
        .map(|m| m.zip_map(&total, |a, t| a.max(EPS) / t))
        .collect())
}

/// Applies each source's soft mask to the mixture magnitude, keeps the
/// mixture phase, and inverts.
pub fn mask_reconstruct(source_mags: &[Matrix], mix: &ComplexSpectrogram) -> Result<Vec<Waveform>> {
    if let Some(bad) = source_mags.iter().find(|m| m.shape() != mix.magnitude.shape()) {
        return Err(Error::shape(
            "mask_reconstruct",
            format!("{:?}", mix.magnitude.shape()),
            format!("{:?}", bad.shape()),
        ));
    }
    soft_masks(source_mags)?
        .into_iter()
        .map(|mask| {
            let masked = mask.zip_map(&mix.magnitude, |m, x| m * x);
            istft(&mix.with_magnitude(masked)?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{stft, StftConfig};
    use crate::numerics::seeded_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn mixture_spec(seed: u64) -> ComplexSpectrogram {
        let mut rng = seeded_rng(seed);
        let x: Vec<f64> = (0..3000).map(|_| rng.random_range(-0.5..0.5)).collect();
        stft(&Waveform::new(x, 8000).unwrap(), &StftConfig::default()).unwrap()
    }

    fn positive(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = seeded_rng(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(0.01..10.0))
    }

    #[test]
    fn identical_estimates_halve_the_mixture() {
        let spec = mixture_spec(1);
        let est = positive(spec.bins(), spec.frames(), 2);
        let masks = soft_masks(&[est.clone(), est.clone()]).unwrap();
        assert!(masks[0].as_slice().iter().all(|&m| m == 0.5));
        let out = mask_reconstruct(&[est.clone(), est], &spec).unwrap();
        let full = istft(&spec).unwrap();
        for i in 0..full.len() {
            assert_eq!(out[0].samples[i], out[1].samples[i]);
            assert!((out[0].samples[i] - 0.5 * full.samples[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn dominant_estimate_takes_everything() {
        let spec = mixture_spec(3);
        let big = positive(spec.bins(), spec.frames(), 4).scale(1e6);
        let small = big.scale(1e-12);
        let out = mask_reconstruct(&[big, small], &spec).unwrap();
        let full = istft(&spec).unwrap();
        let err: f64 = out[0]
            .samples
            .iter()
            .zip(&full.samples)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        assert!((err / full.energy()).sqrt() < 1e-5);
    }

    #[test]
    fn outputs_sum_to_mixture() {
        let spec = mixture_spec(5);
        let ests: Vec<Matrix> = (0..3).map(|s| positive(spec.bins(), spec.frames(), 6 + s)).collect();
        let out = mask_reconstruct(&ests, &spec).unwrap();
        let full = istft(&spec).unwrap();
        for i in 0..full.len() {
            let s: f64 = out.iter().map(|w| w.samples[i]).sum();
            assert!((s - full.samples[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let spec = mixture_spec(7);
        assert!(mask_reconstruct(&[Matrix::filled(3, 3, 1.0)], &spec).is_err());
        assert!(soft_masks(&[]).is_err());
    }

    proptest! {
        #[test]
        fn masks_partition_unity(a in prop::collection::vec(1e-9f64..1e6, 12), b in prop::collection::vec(1e-9f64..1e6, 12)) {
            let ma = Matrix::from_vec(3, 4, a).unwrap();
            let mb = Matrix::from_vec(3, 4, b).unwrap();
            let masks = soft_masks(&[ma, mb]).unwrap();
            for i in 0..12 {
                let (x, y) = (masks[0].as_slice()[i], masks[1].as_slice()[i]);
                prop_assert!(x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0);
                prop_assert!((x + y - 1.0).abs() <= 1e-12);
            }
        }
    }
}
