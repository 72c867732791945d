//! Evaluation of the continuous and semi-discrete framelet functions, for
//! visualization and localization checks.
//!
//! The kernel behind every framelet is
//! `K(x, y) = sum_l gamma(lambda_l / 2^j) sum_m conj(Y_lm(y)) Y_lm(x)`.
//! For the shipped profiles (all zonal) the inner sum contracts through the
//! addition theorem to `(2l + 1) P_l(<x, y>)`, so evaluation is a short
//! Legendre sum; the explicit `(l, m)` double sum stays available as the
//! cross-check path.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::filterbank::{FilterBank, SymbolProfile};
use crate::fmt::LevelLayout;
use crate::legendre::legendre;
use crate::quadrature::SphericalPoint;
use crate::sht::{eigenvalue, eval_harmonic, HarmonicIndex};

/// A profile read at scale `j`: the kernel weights are
/// `gamma(lambda_l / 2^j)`.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub profile: SymbolProfile,
    pub level: u32,
}

impl KernelSpec {
    pub fn new(profile: SymbolProfile, level: u32) -> Self {
        Self { profile, level }
    }

    /// First degree past the profile's support; the kernel sums `l` below
    /// this. Rejects profiles without a finite support bound.
    pub fn cutoff(&self) -> Result<usize> {
        let (_, hi) = self.profile.support();
        if !hi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "profile {} is not band-limited",
                self.profile.name()
            )));
        }
        let bound = hi * f64::powi(2.0, self.level as i32);
        // lambda_l = sqrt(l (l + 1)) <= bound
        let mut l = ((-1.0 + (1.0 + 4.0 * bound * bound).sqrt()) / 2.0).floor() as usize;
        while eigenvalue(l + 1) <= bound {
            l += 1;
        }
        Ok(l + 1)
    }
}

/// Addition-theorem evaluation of the kernel; real-valued for the real
/// shipped profiles.
pub fn eval_kernel(spec: &KernelSpec, x: &SphericalPoint, y: &SphericalPoint) -> Result<Complex64> {
    let cutoff = spec.cutoff()?;
    let scale = f64::powi(2.0, spec.level as i32);
    let t = x.dot(y).clamp(-1.0, 1.0);
    let mut sum = 0.0;
    for l in 0..cutoff {
        let g = spec.profile.eval(eigenvalue(l) / scale);
        if g != 0.0 {
            sum += g * (2 * l + 1) as f64 * legendre(l, t);
        }
    }
    Ok(Complex64::new(sum, 0.0))
}

/// Direct `(l, m)` double-sum evaluation; the oracle for [`eval_kernel`].
pub fn eval_kernel_direct(
    spec: &KernelSpec,
    x: &SphericalPoint,
    y: &SphericalPoint,
) -> Result<Complex64> {
    let cutoff = spec.cutoff()?;
    let scale = f64::powi(2.0, spec.level as i32);
    let mut sum = Complex64::default();
    for l in 0..cutoff {
        let g = spec.profile.eval(eigenvalue(l) / scale);
        if g == 0.0 {
            continue;
        }
        for m in -(l as i64)..=(l as i64) {
            let idx = HarmonicIndex::new(l, m)?;
            sum += g * eval_harmonic(idx, y).conj() * eval_harmonic(idx, x);
        }
    }
    Ok(sum)
}

/// Which framelet of the system to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameletKind {
    Lowpass,
    /// 1-based high-pass channel.
    Highpass(usize),
}

/// Evaluates the semi-discrete framelet at scale `j` translated to a rule
/// node: `sqrt(w) K(x, node)` with the scaling profile on the level-`j`
/// rule for the low-pass, and the `n`-th wavelet profile on the
/// level-`(j+1)` rule for high-pass channels.
pub fn eval_framelet(
    layout: &LevelLayout,
    bank: &FilterBank,
    j: u32,
    node: usize,
    kind: FrameletKind,
    x: &SphericalPoint,
) -> Result<Complex64> {
    let (profile, rule_level) = match kind {
        FrameletKind::Lowpass => (bank.scaling.clone(), j),
        FrameletKind::Highpass(n) => {
            let profile = bank
                .wavelets
                .get(n.wrapping_sub(1))
                .ok_or_else(|| Error::InvalidArgument(format!("no high-pass channel {n}")))?
                .clone();
            (profile, j + 1)
        }
    };
    let level = layout.level(rule_level)?;
    let rule = &level.rule;
    if node >= rule.node_count() {
        return Err(Error::IndexOutOfRange {
            index: node,
            len: rule.node_count(),
        });
    }
    let spec = KernelSpec::new(profile, j);
    let k = eval_kernel(&spec, x, &rule.points()[node])?;
    Ok(rule.weights()[node].sqrt() * k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::paper_bank_s2;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn degree_zero_profile_gives_the_constant_kernel() {
        // support below lambda_1 = sqrt(2): only l = 0 contributes
        let profile = SymbolProfile::new("dc", (0.0, 1.0), "C", false, |x| {
            if x < 1.0 {
                1.0
            } else {
                0.0
            }
        });
        let spec = KernelSpec::new(profile, 0);
        assert_eq!(spec.cutoff().unwrap(), 1);
        let x = SphericalPoint::from_angles(0.3, 1.0).unwrap();
        let y = SphericalPoint::from_angles(2.0, 4.0).unwrap();
        let k = eval_kernel(&spec, &x, &y).unwrap();
        assert_abs_diff_eq!(k.re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn diagonal_values_are_positive_for_nonnegative_profiles() {
        let bank = paper_bank_s2();
        let spec = KernelSpec::new(bank.scaling.clone(), 3);
        for (theta, phi) in [(0.1, 0.0), (1.2, 2.2), (3.0, 5.5)] {
            let x = SphericalPoint::from_angles(theta, phi).unwrap();
            let k = eval_kernel(&spec, &x, &x).unwrap();
            assert!(k.re > 0.0);
            assert_abs_diff_eq!(k.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn addition_theorem_matches_double_sum() {
        let bank = paper_bank_s2();
        let pts = [
            SphericalPoint::from_angles(0.7, 1.3).unwrap(),
            SphericalPoint::from_angles(2.1, 4.9).unwrap(),
            SphericalPoint::from_angles(1.6, 0.2).unwrap(),
        ];
        for profile in [bank.scaling.clone(), bank.wavelets[0].clone()] {
            let spec = KernelSpec::new(profile, 4);
            for x in &pts {
                for y in &pts {
                    let fast = eval_kernel(&spec, x, y).unwrap();
                    let slow = eval_kernel_direct(&spec, x, y).unwrap();
                    let scale = slow.norm().max(1.0);
                    assert_abs_diff_eq!(fast.re, slow.re, epsilon = 1e-11 * scale);
                    assert_abs_diff_eq!(fast.im, slow.im, epsilon = 1e-11 * scale);
                }
            }
        }
    }

    #[test]
    fn non_bandlimited_profile_is_rejected() {
        let profile = SymbolProfile::new("flat", (0.0, f64::INFINITY), "C", false, |_| 1.0);
        let spec = KernelSpec::new(profile, 2);
        assert!(matches!(
            eval_kernel(
                &spec,
                &SphericalPoint::north_pole(),
                &SphericalPoint::north_pole()
            ),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn framelet_depends_only_on_the_angle_to_the_node() {
        let layout = LevelLayout::gauss_legendre(4, 6).unwrap();
        let bank = paper_bank_s2();
        // pick a mid-latitude node of the level-5 rule so theta +- d stays
        // inside [0, pi]
        let rule = layout.level(5).unwrap().rule.clone();
        let k = rule
            .points()
            .iter()
            .position(|p| (p.theta() - std::f64::consts::FRAC_PI_2).abs() < 0.3)
            .unwrap();
        let node_pt = rule.points()[k];
        let d = 0.4f64;
        let x1 = SphericalPoint::from_angles(node_pt.theta() + d, node_pt.phi()).unwrap();
        let x2 = SphericalPoint::from_angles(node_pt.theta() - d, node_pt.phi()).unwrap();
        assert_relative_eq!(node_pt.dot(&x1), node_pt.dot(&x2), epsilon = 1e-12);
        let v1 = eval_framelet(&layout, &bank, 5, k, FrameletKind::Lowpass, &x1).unwrap();
        let v2 = eval_framelet(&layout, &bank, 5, k, FrameletKind::Lowpass, &x2).unwrap();
        assert_abs_diff_eq!(v1.re, v2.re, epsilon = 1e-12 * v1.norm().max(1.0));
    }

    #[test]
    fn framelet_coefficient_consistency() {
        // <f, phi_{j,k}> by quadrature on a fine exact rule equals the
        // frequency-domain expression sqrt(w_k) sum f^ conj(phi^) Y(x_k).
        use crate::quadrature::gauss_legendre_rule;
        use crate::sht::{HarmonicCoefficients, TransformPlan};
        use num_complex::Complex64;
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        use std::sync::Arc;

        let layout = LevelLayout::gauss_legendre(3, 4).unwrap();
        let bank = paper_bank_s2();
        let j = 4u32;
        let k = 7usize;

        // random band-limited f with content l < 8 (level-4 band)
        let mut rng = StdRng::seed_from_u64(12);
        let mut fc = HarmonicCoefficients::zeros(8);
        for v in fc.values_mut() {
            *v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }

        // quadrature path: fine rule exact for products (degrees < 8 + 8)
        let fine = Arc::new(gauss_legendre_rule(32).unwrap());
        let plan = TransformPlan::new(fine.clone(), 8);
        let f_wvals = plan.synth(&fc).unwrap(); // sqrt(w)-weighted samples
        let mut by_quadrature = Complex64::default();
        for (q, fw) in fine.points().iter().enumerate() {
            let _ = fw;
            let fval = f_wvals[q] / fine.weights()[q].sqrt();
            let framelet =
                eval_framelet(&layout, &bank, j, k, FrameletKind::Lowpass, &fine.points()[q])
                    .unwrap();
            by_quadrature += fine.weights()[q] * fval * framelet.conj();
        }

        // frequency path
        let node = layout.level(j).unwrap().rule.points()[k];
        let wk = layout.level(j).unwrap().rule.weights()[k];
        let mut by_frequency = Complex64::default();
        for l in 0..8usize {
            let g = bank.scaling.eval(eigenvalue(l) / f64::powi(2.0, j as i32));
            if g == 0.0 {
                continue;
            }
            for m in -(l as i64)..=(l as i64) {
                let idx = HarmonicIndex::new(l, m).unwrap();
                by_frequency += fc.get(idx) * g * eval_harmonic(idx, &node);
            }
        }
        by_frequency *= wk.sqrt();

        assert_abs_diff_eq!(
            by_quadrature.re,
            by_frequency.re,
            epsilon = 1e-10 * by_frequency.norm().max(1.0)
        );
        assert_abs_diff_eq!(
            by_quadrature.im,
            by_frequency.im,
            epsilon = 1e-10 * by_frequency.norm().max(1.0)
        );
    }

    #[test]
    fn lowpass_framelet_localizes_at_its_node() {
        let layout = LevelLayout::gauss_legendre(5, 6).unwrap();
        let bank = paper_bank_s2();
        // node closest to the north pole on the level-6 rule
        let rule = layout.level(6).unwrap().rule.clone();
        let (k, _) = rule
            .points()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cos_theta().total_cmp(&b.1.cos_theta()))
            .unwrap();
        let node = rule.points()[k];
        let at_node = eval_framelet(&layout, &bank, 6, k, FrameletKind::Lowpass, &node)
            .unwrap()
            .norm();
        let far = SphericalPoint::from_angles(node.theta() + std::f64::consts::FRAC_PI_2, node.phi())
            .unwrap();
        let at_far = eval_framelet(&layout, &bank, 6, k, FrameletKind::Lowpass, &far)
            .unwrap()
            .norm();
        assert!(
            at_far <= 1e-2 * at_node,
            "far {at_far:.3e} vs peak {at_node:.3e}"
        );
    }

    #[test]
    fn highpass_framelet_has_no_low_frequency_content() {
        let bank = paper_bank_s2();
        let j = 4u32;
        // all wavelet profiles vanish below lambda / 2^j = 1/4
        for psi in &bank.wavelets {
            for l in 0..4usize {
                assert_eq!(psi.eval(eigenvalue(l) / 16.0), 0.0);
            }
        }
        // and the kernel of a profile evaluated entirely below its support
        // floor is identically zero
        let spec = KernelSpec::new(bank.wavelets[1].clone(), j);
        let x = SphericalPoint::from_angles(0.4, 0.3).unwrap();
        let low_only: f64 = (0..8)
            .map(|l| spec.profile.eval(eigenvalue(l) / 16.0).abs())
            .sum();
        assert_eq!(low_only, 0.0);
        let _ = eval_kernel(&spec, &x, &x).unwrap();
    }
}
