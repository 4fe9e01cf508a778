//! Projection-based source separation metrics (SDR, SIR, SAR) and their
//! median / interquartile aggregation.
//!
//! Each estimate `ŝ` is decomposed as `s_target + e_interf + e_artif`:
//! `s_target` is the least-squares projection of `ŝ` onto `filter_len`
//! delayed copies of its own reference, `s_target + e_interf` the projection
//! onto the delayed copies of every reference, and `e_artif` the remainder.
//! The estimate is zero-extended by `filter_len − 1` samples so delayed
//! references fit entirely.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use realfft::num_complex::Complex64;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::dsp::Waveform;
use crate::error::{Error, Result};

/// Value reported in place of ±∞ dB.
pub const METRIC_CAP_DB: f64 = 150.0;
pub const DEFAULT_FILTER_LEN: usize = 512;
/// Tikhonov weight on the Gram diagonal, relative to its mean diagonal.
const GRAM_REGULARIZATION: f64 = 1e-10;

/// Metrics per source, index-aligned with the inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub sdr: Vec<f64>,
    pub sir: Vec<f64>,
    pub sar: Vec<f64>,
    /// `mapping[i]` is the reference scored against estimate `i`.
    pub mapping: Vec<usize>,
}

/// Error components of one estimate, each of length `len + filter_len − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub s_target: Vec<f64>,
    pub e_interf: Vec<f64>,
    pub e_artif: Vec<f64>,
}

impl Decomposition {
    fn metrics(&self) -> (f64, f64, f64) {
        let target = energy(&self.s_target);
        let interf = energy(&self.e_interf);
        let artif = energy(&self.e_artif);
        let distortion: f64 = self
            .e_interf
            .iter()
            .zip(&self.e_artif)
            .map(|(a, b)| (a + b).powi(2))
            .sum();
        let projected: f64 = self
            .s_target
            .iter()
            .zip(&self.e_interf)
            .map(|(a, b)| (a + b).powi(2))
            .sum();
        (
            ratio_db(target, distortion),
            ratio_db(target, interf),
            ratio_db(projected, artif),
        )
    }
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn ratio_db(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        return -METRIC_CAP_DB;
    }
    if den <= 0.0 {
        return METRIC_CAP_DB;
    }
    (10.0 * (num / den).log10()).clamp(-METRIC_CAP_DB, METRIC_CAP_DB)
}

/// SDR, SIR and SAR of `estimates[i]` against `references[i]`.
///
/// Signals are zero-padded to the longest input. References must be
/// non-silent.
pub fn bss_eval(estimates: &[Waveform], references: &[Waveform], filter_len: usize) -> Result<EvalResult> {
    let parts = bss_decompose(estimates, references, filter_len)?;
    let mut result = EvalResult {
        sdr: Vec::with_capacity(parts.len()),
        sir: Vec::with_capacity(parts.len()),
        sar: Vec::with_capacity(parts.len()),
        mapping: (0..parts.len()).collect(),
    };
    for d in &parts {
        let (sdr, sir, sar) = d.metrics();
        result.sdr.push(sdr);
        result.sir.push(sir);
        result.sar.push(sar);
    }
    Ok(result)
}

/// The decomposition behind [`bss_eval`], one entry per estimate.
pub fn bss_decompose(estimates: &[Waveform], references: &[Waveform], filter_len: usize) -> Result<Vec<Decomposition>> {
    if references.is_empty() {
        return Err(Error::InvalidArgument("no reference signals".into()));
    }
    if estimates.len() != references.len() {
        return Err(Error::shape("bss_eval", references.len(), estimates.len()));
    }
    if filter_len == 0 {
        return Err(Error::InvalidArgument("filter_len must be at least 1".into()));
    }
    let len = estimates.iter().chain(references).map(Waveform::len).max().unwrap();
    if len == 0 {
        return Err(Error::EmptySignal);
    }
    for (j, r) in references.iter().enumerate() {
        if r.energy() == 0.0 {
            return Err(Error::SilentSignal(format!("reference {j}")));
        }
    }
    let systems = Systems::new(references, len, filter_len)?;
    let projector = &systems.projector;
    estimates
        .iter()
        .enumerate()
        .map(|(i, est)| {
            let mut padded = est.samples.clone();
            padded.resize(len + filter_len - 1, 0.0);
            let spectrum = projector.fft(&padded);
            let s_target = projector.project(&spectrum, &systems.own[i], &[i]);
            let all: Vec<usize> = (0..references.len()).collect();
            let p_all = projector.project(&spectrum, &systems.all, &all);
            let e_interf = p_all.iter().zip(&s_target).map(|(p, s)| p - s).collect();
            let e_artif = padded.iter().zip(&p_all).map(|(x, p)| x - p).collect();
            Ok(Decomposition {
                s_target,
                e_interf,
                e_artif,
            })
        })
        .collect()
}

/// Factorised Gram systems of the delayed references.
struct Systems {
    projector: Projector,
    /// Gram of every reference's delays, references in order.
    all: Cholesky<f64, Dyn>,
    /// Gram of each reference's own delays.
    own: Vec<Cholesky<f64, Dyn>>,
}

/// Reference spectra plus FFT plumbing for correlations and convolutions.
struct Projector {
    filter_len: usize,
    out_len: usize,
    n: usize,
    ref_spectra: Vec<Vec<Complex64>>,
    planner: std::cell::RefCell<RealFftPlanner<f64>>,
}

impl Systems {
    fn new(references: &[Waveform], len: usize, filter_len: usize) -> Result<Self> {
        let out_len = len + filter_len - 1;
        let n = out_len.next_power_of_two();
        let mut this = Projector {
            filter_len,
            out_len,
            n,
            ref_spectra: Vec::new(),
            planner: std::cell::RefCell::new(RealFftPlanner::new()),
        };
        this.ref_spectra = references.iter().map(|r| this.fft(&r.samples)).collect();

        let k = references.len();
        let mut gram = DMatrix::zeros(k * filter_len, k * filter_len);
        for i in 0..k {
            for j in i..k {
                // c(d) = Σ_u r_i(u) r_j(u + d)
                let prod: Vec<Complex64> = this.ref_spectra[i]
                    .iter()
                    .zip(&this.ref_spectra[j])
                    .map(|(a, b)| a.conj() * b)
                    .collect();
                let c = this.ifft(prod);
                for t1 in 0..filter_len {
                    for t2 in 0..filter_len {
                        let d = (t1 + n - t2) % n;
                        let v = c[d];
                        gram[(i * filter_len + t1, j * filter_len + t2)] = v;
                        gram[(j * filter_len + t2, i * filter_len + t1)] = v;
                    }
                }
            }
        }
        let own = (0..k)
            .map(|j| {
                let block = gram
                    .view((j * filter_len, j * filter_len), (filter_len, filter_len))
                    .into_owned();
                factorize(block)
            })
            .collect::<Result<_>>()?;
        let all = factorize(gram)?;
        Ok(Systems {
            projector: this,
            all,
            own,
        })
    }
}

impl Projector {
    fn fft(&self, x: &[f64]) -> Vec<Complex64> {
        let fft = self.planner.borrow_mut().plan_fft_forward(self.n);
        let mut input = fft.make_input_vec();
        input[..x.len()].copy_from_slice(x);
        let mut out = fft.make_output_vec();
        fft.process(&mut input, &mut out).expect("planner-sized buffers");
        out
    }

    fn ifft(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        let ifft = self.planner.borrow_mut().plan_fft_inverse(self.n);
        spectrum[0].im = 0.0;
        spectrum[self.n / 2].im = 0.0;
        let mut out = ifft.make_output_vec();
        ifft.process(&mut spectrum, &mut out).expect("planner-sized buffers");
        let scale = 1.0 / self.n as f64;
        out.iter_mut().for_each(|v| *v *= scale);
        out
    }

    /// Least-squares projection of the signal with spectrum `est` onto the
    /// delays of `sources`, whose Gram system is `chol`.
    fn project(&self, est: &[Complex64], chol: &Cholesky<f64, Dyn>, sources: &[usize]) -> Vec<f64> {
        let l = self.filter_len;
        let mut rhs = DVector::zeros(sources.len() * l);
        for (b, &j) in sources.iter().enumerate() {
            let prod = self.ref_spectra[j].iter().zip(est).map(|(r, e)| r.conj() * e).collect();
            let corr = self.ifft(prod);
            for tau in 0..l {
                rhs[b * l + tau] = corr[tau];
            }
        }
        let coeffs = chol.solve(&rhs);
        let mut acc = vec![Complex64::new(0.0, 0.0); self.n / 2 + 1];
        for (b, &j) in sources.iter().enumerate() {
            let taps = self.fft(&coeffs.as_slice()[b * l..(b + 1) * l]);
            for ((a, r), t) in acc.iter_mut().zip(&self.ref_spectra[j]).zip(&taps) {
                *a += r * t;
            }
        }
        let mut out = self.ifft(acc);
        out.truncate(self.out_len);
        out
    }
}

fn factorize(gram: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let size = gram.nrows();
    let mut delta = GRAM_REGULARIZATION * gram.trace() / size as f64;
    for attempt in 0..6 {
        let mut regularized = gram.clone();
        for i in 0..size {
            regularized[(i, i)] += delta;
        }
        if let Some(chol) = Cholesky::new(regularized) {
            if attempt > 0 {
                log::warn!("projection Gram matrix is rank deficient; regularized with {delta:e}");
            }
            return Ok(chol);
        }
        delta *= 100.0;
    }
    Err(Error::InvalidArgument("projection system is singular".into()))
}

/// Median and quartiles of one metric. Quartiles interpolate linearly
/// between order statistics (the `(n − 1)·p` rule).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl MetricStats {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Identifies the quartile rule in serialized summaries.
pub const QUARTILE_METHOD: &str = "linear";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub sdr: MetricStats,
    pub sir: MetricStats,
    pub sar: MetricStats,
    /// Number of per-source values pooled into each statistic.
    pub count: usize,
    pub quartile_method: String,
}

/// Linear-interpolation quantile of ascending `sorted`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median_iqr(values: &[f64]) -> Result<MetricStats> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("cannot summarise an empty list".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("NaN metric value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(MetricStats {
        median: quantile(&sorted, 0.5),
        q1: quantile(&sorted, 0.25),
        q3: quantile(&sorted, 0.75),
    })
}

/// Pools every source of every result and summarises each metric.
pub fn median_aggregate(results: &[EvalResult]) -> Result<MetricSummary> {
    if results.is_empty() {
        return Err(Error::InvalidArgument("no results to aggregate".into()));
    }
    let pool =
        |f: fn(&EvalResult) -> &Vec<f64>| -> Vec<f64> { results.iter().flat_map(|r| f(r).iter().copied()).collect() };
    let sdr = pool(|r| &r.sdr);
    Ok(MetricSummary {
        count: sdr.len(),
        sdr: median_iqr(&sdr)?,
        sir: median_iqr(&pool(|r| &r.sir))?,
        sar: median_iqr(&pool(|r| &r.sar))?,
        quartile_method: QUARTILE_METHOD.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::seeded_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn wave(x: Vec<f64>) -> Waveform {
        Waveform::new(x, 8000).unwrap()
    }

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeded_rng(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    /// Two exactly orthogonal, equal-power vectors via Gram–Schmidt.
    fn orthogonal_pair(len: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let a = noise(len, seed);
        let b = noise(len, seed + 1);
        let c = dot(&a, &b) / dot(&a, &a);
        let mut b: Vec<f64> = b.iter().zip(&a).map(|(y, x)| y - c * x).collect();
        let s = (dot(&a, &a) / dot(&b, &b)).sqrt();
        b.iter_mut().for_each(|v| *v *= s);
        (a, b)
    }

    #[test]
    fn exact_match_hits_cap() {
        let r1 = noise(2000, 1);
        let r2 = noise(2000, 2);
        let refs = [wave(r1.clone()), wave(r2.clone())];
        for filter_len in [1, 32] {
            let res = bss_eval(&refs, &refs, filter_len).unwrap();
            for v in res.sdr.iter().chain(&res.sir).chain(&res.sar) {
                assert_eq!(*v, METRIC_CAP_DB);
            }
        }
    }

    #[test]
    fn orthogonal_interference_gives_twenty_db() {
        let (r1, r2) = orthogonal_pair(1000, 3);
        let est: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| a + 0.1 * b).collect();
        let res = bss_eval(&[wave(est), wave(r2.clone())], &[wave(r1), wave(r2)], 1).unwrap();
        assert!((res.sir[0] - 20.0).abs() < 0.1, "{}", res.sir[0]);
        assert_eq!(res.sar[0], METRIC_CAP_DB);
    }

    #[test]
    fn half_amplitude_is_still_perfect() {
        let r = noise(1500, 4);
        let est: Vec<f64> = r.iter().map(|v| 0.5 * v).collect();
        let res = bss_eval(&[wave(est)], &[wave(r)], 1).unwrap();
        assert_eq!(res.sdr[0], METRIC_CAP_DB);
    }

    #[test]
    fn filter_len_one_matches_closed_form() {
        let r1 = noise(800, 5);
        let r2 = noise(800, 6);
        let est = noise(800, 7);
        let est: Vec<f64> = est
            .iter()
            .zip(&r1)
            .zip(&r2)
            .map(|((e, a), b)| 0.3 * e + a + 0.4 * b)
            .collect();
        let res = bss_eval(
            &[wave(est.clone()), wave(r2.clone())],
            &[wave(r1.clone()), wave(r2.clone())],
            1,
        )
        .unwrap();

        // Oracle: explicit 1-D and 2-D least-squares projections.
        let a = dot(&est, &r1) / dot(&r1, &r1);
        let s_target: Vec<f64> = r1.iter().map(|v| a * v).collect();
        let (g11, g12, g22) = (dot(&r1, &r1), dot(&r1, &r2), dot(&r2, &r2));
        let (b1, b2) = (dot(&r1, &est), dot(&r2, &est));
        let det = g11 * g22 - g12 * g12;
        let (c1, c2) = ((g22 * b1 - g12 * b2) / det, (g11 * b2 - g12 * b1) / det);
        let p_all: Vec<f64> = r1.iter().zip(&r2).map(|(x, y)| c1 * x + c2 * y).collect();
        let interf: Vec<f64> = p_all.iter().zip(&s_target).map(|(p, s)| p - s).collect();
        let artif: Vec<f64> = est.iter().zip(&p_all).map(|(e, p)| e - p).collect();
        let sum: Vec<f64> = interf.iter().zip(&artif).map(|(a, b)| a + b).collect();
        let db = |n: f64, d: f64| 10.0 * (n / d).log10();
        let sdr = db(dot(&s_target, &s_target), dot(&sum, &sum));
        let sir = db(dot(&s_target, &s_target), dot(&interf, &interf));
        let sar = db(dot(&p_all, &p_all), dot(&artif, &artif));
        assert!((res.sdr[0] - sdr).abs() < 1e-6);
        assert!((res.sir[0] - sir).abs() < 1e-6);
        assert!((res.sar[0] - sar).abs() < 1e-6);
    }

    #[test]
    fn delayed_reference_is_absorbed_by_filter() {
        let r = noise(1200, 8);
        let mut est = vec![0.0; 5];
        est.extend_from_slice(&r);
        let refs = [wave(r)];
        let short = bss_eval(&[wave(est.clone())], &refs, 1).unwrap();
        let long = bss_eval(&[wave(est)], &refs, 16).unwrap();
        assert!(short.sdr[0] < 5.0);
        assert!(long.sdr[0] > 30.0, "{}", long.sdr[0]);
    }

    #[test]
    fn decomposition_reconstructs_estimate() {
        let refs = [wave(noise(600, 9)), wave(noise(600, 10))];
        let ests = [wave(noise(600, 11)), wave(noise(590, 12))];
        let parts = bss_decompose(&ests, &refs, 8).unwrap();
        for (d, e) in parts.iter().zip(&ests) {
            let mut padded = e.samples.clone();
            padded.resize(607, 0.0);
            let err: f64 = (0..607)
                .map(|t| (d.s_target[t] + d.e_interf[t] + d.e_artif[t] - padded[t]).powi(2))
                .sum();
            assert!(err.sqrt() <= 1e-8 * energy(&padded).sqrt());
        }
    }

    #[test]
    fn orthogonal_noise_lowers_sdr_and_sar() {
        let r1 = noise(1000, 13);
        let r2 = noise(1000, 14);
        let base: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| a + 0.2 * b).collect();
        // Noise made orthogonal to both references.
        let mut n = noise(1000, 15);
        for r in [&r1, &r2] {
            let c = dot(&n, r) / dot(r, r);
            n.iter_mut().zip(r.iter()).for_each(|(v, x)| *v -= c * x);
        }
        let c = dot(&n, &r2) / dot(&r2, &r2);
        n.iter_mut().zip(&r2).for_each(|(v, x)| *v -= c * x);
        let refs = [wave(r1), wave(r2.clone())];
        let eval = |e: &Vec<f64>| bss_eval(&[wave(e.clone()), wave(r2.clone())], &refs, 1).unwrap();
        let clean = eval(&base);
        let noisy = eval(&base.iter().zip(&n).map(|(b, v)| b + 0.3 * v).collect());
        assert!(noisy.sdr[0] < clean.sdr[0]);
        assert!(noisy.sar[0] < clean.sar[0]);
    }

    #[test]
    fn invalid_inputs() {
        let r = wave(noise(100, 16));
        let silent = wave(vec![0.0; 100]);
        assert!(matches!(
            bss_eval(std::slice::from_ref(&r), &[silent], 4),
            Err(Error::SilentSignal(_))
        ));
        assert!(bss_eval(&[r.clone(), r.clone()], std::slice::from_ref(&r), 4).is_err());
        assert!(bss_eval(std::slice::from_ref(&r), std::slice::from_ref(&r), 0).is_err());
    }

    #[test]
    fn aggregation_examples() {
        assert_eq!(median_iqr(&[3.0, 5.0, 100.0]).unwrap().median, 5.0);
        let s = median_iqr(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.median, s.q1, s.q3), (2.5, 1.75, 3.25));
        let one = median_iqr(&[7.0]).unwrap();
        assert_eq!((one.median, one.iqr()), (7.0, 0.0));
        assert!(median_iqr(&[]).is_err());
        assert!(median_aggregate(&[]).is_err());

        let r = EvalResult {
            sdr: vec![1.0, 3.0],
            sir: vec![2.0, 2.0],
            sar: vec![0.0, 10.0],
            mapping: vec![0, 1],
        };
        let s = median_aggregate(&[r]).unwrap();
        assert_eq!(s.count, 2);
        assert_eq!(s.sdr.median, 2.0);
        assert_eq!(s.sar.q3, 7.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn metrics_are_scale_invariant(seed in 0u64..1000, alpha in 1e-3f64..1e3) {
            let refs = [wave(noise(500, seed)), wave(noise(500, seed + 1))];
            let est: Vec<f64> = noise(500, seed + 2)
                .iter()
                .zip(&refs[0].samples)
                .map(|(n, r)| 0.5 * n + r)
                .collect();
            let ests = [wave(est.clone()), refs[1].clone()];
            let scaled = [wave(est.iter().map(|v| alpha * v).collect()), refs[1].clone()];
            let a = bss_eval(&ests, &refs, 4).unwrap();
            let b = bss_eval(&scaled, &refs, 4).unwrap();
            for (x, y) in a.sdr.iter().chain(&a.sir).chain(&a.sar).zip(b.sdr.iter().chain(&b.sir).chain(&b.sar)) {
                prop_assert!((x - y).abs() < 1e-6, "{x} vs {y}");
            }
        }

        #[test]
        fn quantiles_are_ordered(values in prop::collection::vec(-150.0f64..150.0, 1..40)) {
            let s = median_iqr(&values).unwrap();
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= hi);
        }
    }
}
