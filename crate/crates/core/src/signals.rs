//! Test signals, noise injection, the SNR metric, and the thresholding
//! denoiser.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::filterbank::FilterBank;
use crate::fmt::{
    decompose_with_report, reconstruct, DecomposeReport, FrameletDecomposition, LevelLayout,
};
use crate::quadrature::SphericalPoint;
use crate::sht::CgOptions;

/// Original Wendland profile of smoothness index `n` in `0..=4`;
/// compactly supported on `[0, 1]` with `w_n(0) = 1`.
pub fn wendland(n: usize, t: f64) -> f64 {
    assert!(n <= 4, "wendland index {n} out of range 0..=4");
    let p = (1.0 - t).max(0.0);
    match n {
        0 => p * p,
        1 => p.powi(4) * (4.0 * t + 1.0),
        2 => p.powi(6) * (35.0 * t * t + 18.0 * t + 3.0) / 3.0,
        3 => p.powi(8) * (32.0 * t * t * t + 25.0 * t * t + 8.0 * t + 1.0),
        _ => {
            p.powi(10) * (429.0 * t.powi(4) + 450.0 * t.powi(3) + 210.0 * t * t + 50.0 * t + 5.0)
                / 5.0
        }
    }
}

/// Support radius of the normalized profile:
/// `tau_n = (3n + 3) Gamma(n + 1/2) / (2 Gamma(n + 1))`.
pub fn tau(n: usize) -> f64 {
    assert!(n <= 4, "wendland index {n} out of range 0..=4");
    // Gamma(n + 1/2) = (2n)! sqrt(pi) / (4^n n!)
    let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
    let gamma_half = fact(2 * n) * std::f64::consts::PI.sqrt() / (4f64.powi(n as i32) * fact(n));
    (3 * n + 3) as f64 * gamma_half / (2.0 * fact(n))
}

/// Normalized (equal-area) Wendland profile `w_n(t / tau_n)`; the family
/// converges pointwise to a Gaussian as `n` grows.
pub fn wendland_normalized(n: usize, t: f64) -> f64 {
    wendland(n, t / tau(n))
}

const CENTERS: [[f64; 3]; 6] = [
    [1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, -1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0],
];

fn bump_sum(pt: &SphericalPoint, eval: impl Fn(f64) -> f64) -> f64 {
    let v = pt.unit_vector();
    CENTERS
        .iter()
        .map(|z| {
            let d = [v[0] - z[0], v[1] - z[1], v[2] - z[2]];
            eval((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt())
        })
        .sum()
}

/// Sum of six normalized Wendland bumps centered on the coordinate axes,
/// in Euclidean distance. Smoothness grows with `n`.
pub fn test_function(n: usize, pt: &SphericalPoint) -> f64 {
    bump_sum(pt, |d| wendland_normalized(n, d))
}

/// Same six-bump combination built from the unnormalized profiles
/// (support 1, so the bumps barely overlap). This higher-contrast variant
/// is the denoising benchmark signal: the reference SNR table is
/// reproducible with it but not with the normalized bumps.
pub fn test_function_original(n: usize, pt: &SphericalPoint) -> f64 {
    bump_sum(pt, |d| wendland(n, d))
}

/// Standard normal draws from a seeded ChaCha8 stream via Box-Muller.
/// Pinned here so noisy experiments reproduce bit-for-bit.
pub fn standard_normal_samples(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count + 1);
    while out.len() < count {
        let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        out.push(r * c);
        out.push(r * s);
    }
    out.truncate(count);
    out
}

/// Adds i.i.d. `N(0, sigma^2)` noise with `sigma = theta * max(values)`;
/// deterministic per seed. Returns the noisy values and `sigma`.
pub fn add_noise(values: &[f64], theta: f64, seed: u64) -> (Vec<f64>, f64) {
    assert!(theta > 0.0, "noise fraction must be positive");
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sigma = theta * max;
    let noise = standard_normal_samples(values.len(), seed);
    let noisy = values
        .iter()
        .zip(&noise)
        .map(|(v, g)| v + sigma * g)
        .collect();
    (noisy, sigma)
}

/// `20 log10(||reference|| / ||estimate - reference||)` in dB; identical
/// inputs report `+inf` rather than failing.
pub fn snr(reference: &[f64], estimate: &[f64]) -> f64 {
    assert_eq!(reference.len(), estimate.len());
    let num: f64 = reference.iter().map(|v| v * v).sum::<f64>().sqrt();
    let den: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if den == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (num / den).log10()
    }
}

/// Kill statistics for one detail band.
#[derive(Debug, Clone, Copy)]
pub struct BandKill {
    pub dj: u32,
    pub channel: usize,
    pub killed: usize,
    pub total: usize,
}

/// Hard-thresholds every detail sequence in place: an entry is zeroed when
/// its magnitude in sampled-value units (coefficient divided by the node's
/// root weight) is at most `sigma`. The low-pass band is never touched.
pub fn hard_threshold(dec: &mut FrameletDecomposition, sigma: f64) -> Vec<BandKill> {
    let channels = dec.channels();
    let mut kills = Vec::new();
    for (i, d) in dec.all_details_mut().enumerate() {
        let rule = d.rule().clone();
        let level = d.level();
        let mut vals = d.values().to_vec();
        let mut killed = 0;
        for (v, w) in vals.iter_mut().zip(rule.weights()) {
            if v.norm() <= sigma * w.sqrt() {
                if v.norm() > 0.0 {
                    killed += 1;
                }
                *v = Complex64::default();
            }
        }
        let total = vals.len();
        *d = crate::sht::CoefficientSequence::new(level, rule, vals).expect("same shape");
        kills.push(BandKill {
            dj: level - 1,
            channel: i % channels + 1,
            killed,
            total,
        });
    }
    kills
}

#[derive(Debug, Clone)]
pub struct DenoiseReport {
    pub sigma: f64,
    pub kills: Vec<BandKill>,
    pub decompose: DecomposeReport,
    /// SNR of the restored values against the reference, when one is given.
    pub snr_restored: Option<f64>,
}

/// Denoising pipeline: weight the raw samples, project onto the top
/// level's band, decompose, hard-threshold the details at `sigma`,
/// reconstruct, and unweight. The projection residual (mostly
/// out-of-band noise) is discarded.
pub fn denoise(
    noisy: &[f64],
    layout: &LevelLayout,
    bank: &FilterBank,
    sigma: f64,
    reference: Option<&[f64]>,
) -> Result<(Vec<f64>, DenoiseReport)> {
    let j = layout.j_max();
    let j0 = layout.j0();
    let rule = layout.level(j)?.rule.clone();
    let weighted: Vec<Complex64> = noisy
        .iter()
        .zip(rule.weights())
        .map(|(v, w)| Complex64::new(v * w.sqrt(), 0.0))
        .collect();
    let cg = CgOptions::default();
    let seq = layout.sequence_from_values(j, weighted, &cg)?;
    let (mut dec, decompose_report) = decompose_with_report(layout, &seq, bank, j0, &cg)?;
    let kills = hard_threshold(&mut dec, sigma);
    let restored_seq = reconstruct(layout, &dec, bank)?;
    let restored: Vec<f64> = restored_seq
        .values()
        .iter()
        .zip(rule.weights())
        .map(|(v, w)| v.re / w.sqrt())
        .collect();
    let report = DenoiseReport {
        sigma,
        kills,
        decompose: decompose_report,
        snr_restored: reference.map(|r| snr(r, &restored)),
    };
    Ok((restored, report))
}

/// Configuration of one denoising experiment run.
#[derive(Debug, Clone)]
pub struct DenoiseConfig {
    /// Noise fraction of the signal maximum.
    pub theta: f64,
    pub seed: u64,
    /// Wendland smoothness index of the target signal.
    pub wendland_index: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub sigma: f64,
    pub snr_noisy: f64,
    pub snr_restored: f64,
    pub report: DenoiseReport,
}

/// Benchmark run: sample the high-contrast six-bump signal on the finest
/// rule, add seeded Gaussian noise at `theta` times the signal maximum,
/// denoise, and score both the noisy input and the restoration against the
/// clean samples.
pub fn denoise_experiment(
    layout: &LevelLayout,
    bank: &FilterBank,
    cfg: &DenoiseConfig,
) -> Result<ExperimentOutcome> {
    let rule = layout.level(layout.j_max())?.rule.clone();
    let clean: Vec<f64> = rule
        .points()
        .iter()
        .map(|p| test_function_original(cfg.wendland_index, p))
        .collect();
    let (noisy, sigma) = add_noise(&clean, cfg.theta, cfg.seed);
    let (_restored, report) = denoise(&noisy, layout, bank, sigma, Some(&clean))?;
    Ok(ExperimentOutcome {
        sigma,
        snr_noisy: snr(&clean, &noisy),
        snr_restored: report.snr_restored.expect("reference provided"),
        report,
    })
}

#[cfg(test)]
#[allow(clippy::excessive_precision)] // frozen reference digits
mod tests {
    use super::*;
    use crate::filterbank::paper_bank_s2;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    #[test]
    fn wendland_point_values() {
        assert_eq!(wendland(0, 0.0), 1.0);
        assert_eq!(wendland(0, 1.0), 0.0);
        assert_eq!(wendland(0, 1.7), 0.0);
        assert_eq!(wendland(1, 0.0), 1.0);
        assert_relative_eq!(wendland(2, 0.5), 83.0 / 768.0, epsilon = 1e-15);
    }

    #[test]
    fn normalization_constants() {
        assert_relative_eq!(tau(0), 2.65868077635827404, epsilon = 1e-14);
        assert_relative_eq!(tau(1), 2.65868077635827404, epsilon = 1e-14);
        assert_relative_eq!(tau(2), 2.9910158734030583, epsilon = 1e-14);
        assert_relative_eq!(tau(3), 3.32335097044784255, epsilon = 1e-14);
        assert_relative_eq!(tau(4), 3.63491512392732779, epsilon = 1e-14);
        for n in 0..=4 {
            assert_eq!(wendland_normalized(n, 0.0), 1.0);
            assert_eq!(wendland_normalized(n, tau(n)), 0.0);
            assert_eq!(wendland_normalized(n, tau(n) + 0.3), 0.0);
        }
    }

    #[test]
    fn test_function_values_and_symmetry() {
        let e1 = SphericalPoint::from_vector([1.0, 0.0, 0.0]).unwrap();
        // frozen 40-digit reference for f_2 at a center and a generic point
        assert_relative_eq!(test_function(2, &e1), 1.56693583326183696, epsilon = 1e-14);
        let q = SphericalPoint::from_vector([3.0 / 13.0, 4.0 / 13.0, 12.0 / 13.0]).unwrap();
        assert_relative_eq!(test_function(2, &q), 1.50679489298576202, epsilon = 1e-14);

        // antipodal symmetry and positivity
        for n in 0..=4usize {
            for v in [[0.6, 0.64, 0.48], [0.0, 0.8, -0.6], [1.0, 0.0, 0.0]] {
                let p = SphericalPoint::from_vector(v).unwrap();
                let m = SphericalPoint::from_vector([-v[0], -v[1], -v[2]]).unwrap();
                let fp = test_function(n, &p);
                assert_abs_diff_eq!(fp, test_function(n, &m), epsilon = 1e-15);
                assert!(fp >= 0.0);
            }
        }
    }

    #[test]
    fn test_function_octahedral_symmetry() {
        // signed coordinate permutations preserve the center set
        let v = [0.3, -0.5, (1.0f64 - 0.09 - 0.25).sqrt()];
        let perms: [[f64; 3]; 4] = [
            [v[1], v[0], v[2]],
            [-v[0], v[2], v[1]],
            [v[2], -v[1], v[0]],
            [-v[2], -v[0], -v[1]],
        ];
        let p0 = SphericalPoint::from_vector(v).unwrap();
        for n in [0, 3] {
            let want = test_function(n, &p0);
            for pv in perms {
                let p = SphericalPoint::from_vector(pv).unwrap();
                assert_abs_diff_eq!(test_function(n, &p), want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn noise_is_deterministic_and_calibrated() {
        let clean = vec![1.0; 100_000];
        let (a, sig_a) = add_noise(&clean, 0.5, 42);
        let (b, sig_b) = add_noise(&clean, 0.5, 42);
        assert_eq!(a, b);
        assert_eq!(sig_a, sig_b);
        assert_relative_eq!(sig_a, 0.5, epsilon = 1e-15);

        let mean = a.iter().map(|v| v - 1.0).sum::<f64>() / a.len() as f64;
        let var = a
            .iter()
            .map(|v| (v - 1.0 - mean) * (v - 1.0 - mean))
            .sum::<f64>()
            / (a.len() - 1) as f64;
        let std = var.sqrt();
        assert!((std - sig_a).abs() / sig_a < 0.03, "std {std}");

        let (c, _) = add_noise(&clean, 0.5, 43);
        assert_ne!(a, c);

        // vanishing noise fraction leaves the data untouched
        let (tiny, _) = add_noise(&clean, 1e-14, 1);
        for (x, y) in tiny.iter().zip(&clean) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn snr_formula() {
        let reference = vec![10.0, 0.0, 0.0];
        let estimate = vec![9.0, 0.0, 0.0]; // error norm 1, signal norm 10
        assert_relative_eq!(snr(&reference, &estimate), 20.0, epsilon = 1e-12);
        assert_eq!(snr(&reference, &reference), f64::INFINITY);
    }

    proptest! {
        #[test]
        fn snr_is_scale_invariant(alpha in 0.01f64..100.0, e in 0.001f64..1.0) {
            let reference = vec![1.0, -2.0, 3.0];
            let estimate = vec![1.0 + e, -2.0, 3.0];
            let scaled_ref: Vec<f64> = reference.iter().map(|v| alpha * v).collect();
            let scaled_est: Vec<f64> = estimate.iter().map(|v| alpha * v).collect();
            let a = snr(&reference, &estimate);
            let b = snr(&scaled_ref, &scaled_est);
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn snr_increases_as_error_shrinks(e in 0.01f64..1.0) {
            let reference = vec![1.0, 2.0, -1.0];
            let worse: Vec<f64> = reference.iter().map(|v| v + e).collect();
            let better: Vec<f64> = reference.iter().map(|v| v + e / 2.0).collect();
            prop_assert!(snr(&reference, &better) > snr(&reference, &worse));
        }
    }

    #[test]
    fn threshold_is_idempotent_and_preserves_lowpass() {
        let layout = LevelLayout::gauss_legendre(3, 5).unwrap();
        let bank = paper_bank_s2();
        let cfg = DenoiseConfig {
            theta: 0.1,
            seed: 5,
            wendland_index: 4,
        };
        let rule = layout.level(5).unwrap().rule.clone();
        let clean: Vec<f64> = rule
            .points()
            .iter()
            .map(|p| test_function_original(cfg.wendland_index, p))
            .collect();
        let (noisy, sigma) = add_noise(&clean, cfg.theta, cfg.seed);
        let weighted: Vec<Complex64> = noisy
            .iter()
            .zip(rule.weights())
            .map(|(v, w)| Complex64::new(v * w.sqrt(), 0.0))
            .collect();
        let seq = layout
            .sequence_from_values(5, weighted, &CgOptions::default())
            .unwrap();
        let mut dec = crate::fmt::decompose(&layout, &seq, &bank, 3).unwrap();
        let lowpass_before = dec.lowpass.values().to_vec();
        let first = hard_threshold(&mut dec, sigma);
        let snapshot: Vec<_> = dec.all_details().map(|d| d.values().to_vec()).collect();
        let second = hard_threshold(&mut dec, sigma);
        let after: Vec<_> = dec.all_details().map(|d| d.values().to_vec()).collect();
        assert_eq!(snapshot, after);
        assert_eq!(dec.lowpass.values(), &lowpass_before[..]);
        assert!(first.iter().map(|k| k.killed).sum::<usize>() > 0);
        assert_eq!(second.iter().map(|k| k.killed).sum::<usize>(), 0);
    }

    #[test]
    fn zero_threshold_reduces_to_roundtrip() {
        let layout = LevelLayout::gauss_legendre(3, 5).unwrap();
        let bank = paper_bank_s2();
        let rule = layout.level(5).unwrap().rule.clone();
        let clean: Vec<f64> = rule
            .points()
            .iter()
            .map(|p| test_function_original(4, p))
            .collect();
        let (noisy, _) = add_noise(&clean, 0.1, 9);
        let (restored, report) = denoise(&noisy, &layout, &bank, 0.0, None).unwrap();
        assert!(report.kills.iter().all(|k| k.killed == 0));
        // equals the plain project -> decompose -> reconstruct roundtrip
        let weighted: Vec<Complex64> = noisy
            .iter()
            .zip(rule.weights())
            .map(|(v, w)| Complex64::new(v * w.sqrt(), 0.0))
            .collect();
        let seq = layout
            .sequence_from_values(5, weighted, &CgOptions::default())
            .unwrap();
        let dec = crate::fmt::decompose(&layout, &seq, &bank, 3).unwrap();
        let back = crate::fmt::reconstruct(&layout, &dec, &bank).unwrap();
        let roundtrip: Vec<f64> = back
            .values()
            .iter()
            .zip(rule.weights())
            .map(|(v, w)| v.re / w.sqrt())
            .collect();
        let scale = roundtrip.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in restored.iter().zip(&roundtrip) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10 * scale);
        }
    }

    #[test]
    fn denoising_improves_snr() {
        let layout = LevelLayout::gauss_legendre(4, 6).unwrap();
        let bank = paper_bank_s2();
        let cfg = DenoiseConfig {
            theta: 0.1,
            seed: 1,
            wendland_index: 4,
        };
        let outcome = denoise_experiment(&layout, &bank, &cfg).unwrap();
        assert!(
            outcome.snr_restored > outcome.snr_noisy + 2.0,
            "noisy {:.2} restored {:.2}",
            outcome.snr_noisy,
            outcome.snr_restored
        );
        let killed: usize = outcome.report.kills.iter().map(|k| k.killed).sum();
        let total: usize = outcome.report.kills.iter().map(|k| k.total).sum();
        assert!(killed > total / 2, "killed {killed}/{total}");
    }
}
