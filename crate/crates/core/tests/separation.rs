use std::sync::OnceLock;

use nae_core::dsp::{make_mixture, stft, Mixture, StftConfig, Waveform};
use nae_core::harness::synth::bandlimited_noise;
use nae_core::nae::TrainConfig;
use nae_core::numerics::{kl_cost, l1_norm};
use nae_core::separation::{mixture_fit, separate, train_source_model, ModelKind, ModelSpec, SourceModel};

const SR: u32 = 8000;

fn low(seed: u64) -> Waveform {
    bandlimited_noise(SR as usize, SR, 100.0, 1200.0, 0.1, seed)
}

fn high(seed: u64) -> Waveform {
    bandlimited_noise(SR as usize, SR, 2000.0, 3500.0, 0.1, seed)
}

fn quick(seed: u64) -> TrainConfig {
    TrainConfig {
        max_iterations: 300,
        ..TrainConfig::with_seed(seed)
    }
}

struct Fixture {
    mix: Mixture,
    nmf: [SourceModel; 2],
    nae: [SourceModel; 2],
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let stft = StftConfig::default();
        let train =
            |kind, w: Waveform, seed| train_source_model(&[w], &ModelSpec::new(kind, 8), &stft, &quick(seed)).unwrap();
        Fixture {
            mix: make_mixture(&low(3), &high(4), 0.0).unwrap(),
            nmf: [train(ModelKind::Nmf, low(1), 1), train(ModelKind::Nmf, high(2), 2)],
            nae: [
                train(ModelKind::NaeShallow, low(1), 1),
                train(ModelKind::NaeShallow, high(2), 2),
            ],
        }
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn swapping_models_swaps_outputs() {
    let f = fixture();
    let stft = StftConfig::default();
    for [a, b] in [&f.nmf, &f.nae].map(|m| [&m[0], &m[1]]) {
        let ab = separate(&f.mix.mixture, &[a, b], &stft, &quick(9)).unwrap();
        let ba = separate(&f.mix.mixture, &[b, a], &stft, &quick(9)).unwrap();
        assert!(max_abs_diff(&ab[0].samples, &ba[1].samples) < 1e-9);
        assert!(max_abs_diff(&ab[1].samples, &ba[0].samples) < 1e-9);
    }
}

#[test]
fn outputs_sum_to_the_mixture() {
    let f = fixture();
    for models in [&f.nmf, &f.nae] {
        let refs: Vec<&SourceModel> = models.iter().collect();
        let out = separate(&f.mix.mixture, &refs, &StftConfig::default(), &quick(0)).unwrap();
        let sum: Vec<f64> = out[0].samples.iter().zip(&out[1].samples).map(|(a, b)| a + b).collect();
        let scale = f.mix.mixture.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_abs_diff(&sum, &f.mix.mixture.samples) <= 1e-9 * scale);
        assert_eq!(out[0].len(), f.mix.mixture.len());
    }
}

#[test]
fn fitting_never_modifies_models() {
    let f = fixture();
    let spec = stft(&f.mix.mixture, &StftConfig::default()).unwrap().magnitude;
    for models in [&f.nmf, &f.nae] {
        let before: Vec<_> = models.iter().map(SourceModel::to_model_file).collect();
        let refs: Vec<&SourceModel> = models.iter().collect();
        mixture_fit(&refs, &spec, &quick(5)).unwrap();
        let after: Vec<_> = models.iter().map(SourceModel::to_model_file).collect();
        assert_eq!(before, after);
    }
}

#[test]
fn stronger_sparsity_shrinks_nmf_activations() {
    // For fixed bases the penalised KL objective is convex in H, so the
    // optimal ‖H‖₁ cannot grow with λ.
    let f = fixture();
    let spec = stft(&f.mix.mixture, &StftConfig::default()).unwrap().magnitude;
    let refs: Vec<&SourceModel> = f.nmf.iter().collect();
    let norms: Vec<f64> = [0.0, 0.1, 1.0, 10.0]
        .iter()
        .map(|&lambda| {
            let config = TrainConfig {
                lambda,
                max_iterations: 2000,
                tol: 0.0,
                ..TrainConfig::with_seed(1)
            };
            mixture_fit(&refs, &spec, &config)
                .unwrap()
                .latents
                .iter()
                .map(l1_norm)
                .sum()
        })
        .collect();
    assert!(norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-6)), "{norms:?}");
    assert!(norms[3] < 0.9 * norms[0], "{norms:?}");
}

#[test]
fn each_model_explains_its_own_source_best() {
    let f = fixture();
    let stft_config = StftConfig::default();
    let sources = [&f.mix.source1, &f.mix.source2];
    for models in [&f.nmf, &f.nae] {
        for (i, source) in sources.iter().enumerate() {
            let x = stft(source, &stft_config).unwrap().magnitude;
            let cost = |m: &SourceModel| {
                let fit = mixture_fit(
                    &[m],
                    &x,
                    &TrainConfig {
                        lambda: 0.0,
                        ..quick(2)
                    },
                )
                .unwrap();
                kl_cost(&x, &fit.estimates[0]).unwrap()
            };
            let own = cost(&models[i]);
            let other = cost(&models[1 - i]);
            assert!(own < 0.2 * other, "source {i}: own {own:.3}, other {other:.3}");
        }
    }
}

#[test]
fn disjoint_band_sources_are_recovered() {
    let f = fixture();
    for models in [&f.nmf, &f.nae] {
        let refs: Vec<&SourceModel> = models.iter().collect();
        let out = separate(&f.mix.mixture, &refs, &StftConfig::default(), &quick(0)).unwrap();
        let eval = nae_core::metrics::bss_eval(&out, &[f.mix.source1.clone(), f.mix.source2.clone()], 128).unwrap();
        assert!(eval.sdr.iter().all(|&v| v > 10.0), "{:?}", eval.sdr);
    }
}
