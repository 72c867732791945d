//! Filter symbols, generator profiles, and tightness validators.
//!
//! A bank couples a low-pass symbol `a` with `r` high-pass symbols `b^n`
//! (1-periodic, even) to generator profiles `phi` (refinable) and `psi^n`
//! through the refinement identities
//!
//! ```text
//! phi(2 xi) = a(xi) phi(xi),    psi^n(2 xi) = b^n(xi) phi(xi).
//! ```
//!
//! Symbols are kept as callables, never as tap sequences: the transforms
//! only ever evaluate `h(lambda_l / 2^j)`, and the shipped band-limited
//! symbols have infinitely many taps in the time domain. Tightness reduces
//! to the sum-of-squares identity `|a|^2 + sum_n |b^n|^2 = 1` wherever the
//! dilated refinable profile is nonzero; [`validate_uep`] checks exactly
//! that, and [`validate_partition_limit`] checks the telescoping identity
//! the generators inherit from it.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::ops::RangeInclusive;
use std::sync::Arc;

use crate::error::{Error, Result};

/// `nu(t) = t^4 (35 - 84 t + 70 t^2 - 20 t^3)`, the polynomial blend behind
/// every transition edge in the shipped banks. `nu(0) = 0`, `nu(1) = 1`,
/// `nu(1/2) = 1/2`, and `nu(t) + nu(1 - t) = 1`.
pub fn nu(t: f64) -> f64 {
    t * t * t * t * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t * t * t)
}

/// Even real symbol profile: a callable on `xi >= 0` with a declared
/// support interval. Mask symbols are 1-periodic and fold their argument
/// into `[0, 1/2]`; generator profiles evaluate on all of `[0, inf)`.
#[derive(Clone)]
pub struct SymbolProfile {
    name: String,
    support: (f64, f64),
    smoothness: &'static str,
    periodic: bool,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for SymbolProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymbolProfile")
            .field("name", &self.name)
            .field("support", &self.support)
            .field("smoothness", &self.smoothness)
            .field("periodic", &self.periodic)
            .finish()
    }
}

impl SymbolProfile {
    pub fn new(
        name: impl Into<String>,
        support: (f64, f64),
        smoothness: &'static str,
        periodic: bool,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            support,
            smoothness,
            periodic,
            f: Arc::new(f),
        }
    }

    /// Evaluates the profile; even in `xi`, and folded 1-periodically for
    /// mask symbols.
    pub fn eval(&self, xi: f64) -> f64 {
        let x = if self.periodic {
            (xi - xi.round()).abs()
        } else {
            xi.abs()
        };
        (self.f)(x)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Declared support of the profile on `xi >= 0`.
    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn smoothness(&self) -> &'static str {
        self.smoothness
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }
}

const C4: &str = "C^(4-eps)";

fn cos_edge(u: f64) -> f64 {
    (FRAC_PI_2 * nu(u)).cos()
}

fn sin_edge(u: f64) -> f64 {
    (FRAC_PI_2 * nu(u)).sin()
}

/// Low-pass mask of the explicit sphere bank: 1 below 1/8, cosine edge on
/// `[1/8, 1/4]`, 0 beyond.
pub fn paper_lowpass() -> SymbolProfile {
    SymbolProfile::new("a", (0.0, 0.25), C4, true, |x| {
        if x < 0.125 {
            1.0
        } else if x <= 0.25 {
            cos_edge(8.0 * x - 1.0)
        } else {
            0.0
        }
    })
}

fn paper_highpass1() -> SymbolProfile {
    SymbolProfile::new("b1", (0.125, 0.5), C4, true, |x| {
        if x < 0.125 {
            0.0
        } else if x <= 0.25 {
            sin_edge(8.0 * x - 1.0)
        } else if x <= 0.5 {
            cos_edge(4.0 * x - 1.0)
        } else {
            0.0
        }
    })
}

fn paper_highpass2() -> SymbolProfile {
    SymbolProfile::new("b2", (0.25, 0.5), C4, true, |x| {
        if x < 0.25 {
            0.0
        } else if x <= 0.5 {
            sin_edge(4.0 * x - 1.0)
        } else {
            0.0
        }
    })
}

/// Refinable profile of the shipped banks: 1 below 1/4, cosine edge on
/// `[1/4, 1/2]`, 0 beyond. Satisfies `phi(2 xi) = a(xi) phi(xi)`.
pub fn paper_scaling() -> SymbolProfile {
    SymbolProfile::new("phi", (0.0, 0.5), C4, false, |x| {
        if x < 0.25 {
            1.0
        } else if x <= 0.5 {
            cos_edge(4.0 * x - 1.0)
        } else {
            0.0
        }
    })
}

fn paper_wavelet1() -> SymbolProfile {
    SymbolProfile::new("psi1", (0.25, 1.0), C4, false, |x| {
        if x < 0.25 {
            0.0
        } else if x < 0.5 {
            sin_edge(4.0 * x - 1.0)
        } else if x <= 1.0 {
            let c = cos_edge(2.0 * x - 1.0);
            c * c
        } else {
            0.0
        }
    })
}

fn paper_wavelet2() -> SymbolProfile {
    SymbolProfile::new("psi2", (0.5, 1.0), C4, false, |x| {
        if !(0.5..=1.0).contains(&x) {
            0.0
        } else {
            cos_edge(2.0 * x - 1.0) * sin_edge(2.0 * x - 1.0)
        }
    })
}

/// Smooth bump supported on `[cl - el, cr + er]`: sine edge up over
/// `[cl - el, cl + el]`, plateau 1 on `[cl + el, cr - er]`, cosine edge
/// down over `[cr - er, cr + er]`. Even in `xi`.
pub fn chi_profile(cl: f64, cr: f64, el: f64, er: f64) -> Result<SymbolProfile> {
    if !(el > 0.0 && er > 0.0 && cl + el <= cr - er) {
        return Err(Error::InvalidArgument(format!(
            "chi profile needs cl - el < cl + el <= cr - er < cr + er, got \
             cl={cl} cr={cr} el={el} er={er}"
        )));
    }
    let name = format!("chi[{cl},{cr};{el},{er}]");
    let support = ((cl - el).max(0.0), cr + er);
    Ok(SymbolProfile::new(name, support, C4, true, move |x| {
        if x < cl - el || x > cr + er {
            0.0
        } else if x < cl + el {
            sin_edge((x - cl + el) / (2.0 * el))
        } else if x <= cr - er {
            1.0
        } else {
            cos_edge((x - cr + er) / (2.0 * er))
        }
    }))
}

/// Filter bank: mask symbols plus the generator profiles they refine.
#[derive(Debug, Clone)]
pub struct FilterBank {
    pub name: String,
    pub lowpass: SymbolProfile,
    pub highpass: Vec<SymbolProfile>,
    /// Refinable generator profile `phi`.
    pub scaling: SymbolProfile,
    /// Framelet generator profiles `psi^n`, one per high-pass symbol.
    pub wavelets: Vec<SymbolProfile>,
}

impl FilterBank {
    /// Number of high-pass channels.
    pub fn channels(&self) -> usize {
        self.highpass.len()
    }
}

/// The explicit two-high-pass bank on the sphere, with its closed-form
/// generators.
pub fn paper_bank_s2() -> FilterBank {
    FilterBank {
        name: "paper".into(),
        lowpass: paper_lowpass(),
        highpass: vec![paper_highpass1(), paper_highpass2()],
        scaling: paper_scaling(),
        wavelets: vec![paper_wavelet1(), paper_wavelet2()],
    }
}

/// Generator profile derived from a mask through the refinement relation:
/// `psi(xi) = mask(xi / 2) * phi(xi / 2)`.
fn derived_wavelet(n: usize, mask: &SymbolProfile, phi: &SymbolProfile) -> SymbolProfile {
    let (mask, phi_c) = (mask.clone(), phi.clone());
    let (lo, hi) = mask.support();
    let support = (2.0 * lo, (2.0 * hi).min(2.0 * phi.support().1));
    SymbolProfile::new(format!("psi{n}"), support, C4, false, move |x| {
        mask.eval(x / 2.0) * phi_c.eval(x / 2.0)
    })
}

fn chi_bank(name: &str, highpass: Vec<SymbolProfile>) -> Result<FilterBank> {
    // All the example banks share the reference low-pass (chi with these
    // parameters reduces to it exactly), hence also its refinable profile.
    let lowpass = chi_profile(-3.0 / 16.0, 3.0 / 16.0, 1.0 / 16.0, 1.0 / 16.0)?;
    let scaling = paper_scaling();
    let wavelets = highpass
        .iter()
        .enumerate()
        .map(|(i, h)| derived_wavelet(i + 1, h, &scaling))
        .collect();
    let bank = FilterBank {
        name: name.into(),
        lowpass,
        highpass,
        scaling,
        wavelets,
    };
    let report = validate_uep(&bank, 1e-3, 1e-10);
    if !report.pass {
        return Err(Error::InvalidBank {
            name: bank.name,
            msg: format!(
                "sum-of-squares identity off by {:.3e} at xi = {:.6}",
                report.max_deviation, report.worst_xi
            ),
        });
    }
    Ok(bank)
}

/// The three example banks sharing one low-pass filter, with 1, 2 and 3
/// high-pass channels splitting the same band.
#[derive(Debug, Clone)]
pub struct ExampleBanks {
    pub eta1: FilterBank,
    pub eta2: FilterBank,
    pub eta3: FilterBank,
}

pub fn example_banks() -> Result<ExampleBanks> {
    let s = 1.0 / 16.0;
    let eta1 = chi_bank(
        "eta1",
        vec![chi_profile(3.0 / 16.0, 9.0 / 16.0, s, s)?],
    )?;
    let eta2 = chi_bank(
        "eta2",
        vec![
            chi_profile(3.0 / 16.0, 3.0 / 8.0, s, 2.0 * s)?,
            chi_profile(3.0 / 8.0, 9.0 / 16.0, 2.0 * s, s)?,
        ],
    )?;
    let eta3 = chi_bank(
        "eta3",
        vec![
            chi_profile(3.0 / 16.0, 5.0 / 16.0, s, s)?,
            chi_profile(5.0 / 16.0, 7.0 / 16.0, s, s)?,
            chi_profile(7.0 / 16.0, 9.0 / 16.0, s, s)?,
        ],
    )?;
    Ok(ExampleBanks { eta1, eta2, eta3 })
}

/// Report of a grid validation.
#[derive(Debug, Clone, Copy)]
pub struct ValidationReport {
    pub pass: bool,
    pub max_deviation: f64,
    /// Grid point where the deviation peaked.
    pub worst_xi: f64,
    pub points_checked: usize,
}

/// Checks `|a(xi)|^2 + sum_n |b^n(xi)|^2 = 1` on a grid of `[0, 1/2]`,
/// restricted to points where the dilated refinable profile `phi(2 xi)` is
/// nonzero (tightness only constrains the masks there).
pub fn validate_uep(bank: &FilterBank, grid_step: f64, tol: f64) -> ValidationReport {
    assert!(grid_step > 0.0, "grid step must be positive");
    let steps = (0.5 / grid_step).round() as usize;
    let mut max_deviation = 0.0f64;
    let mut worst_xi = 0.0;
    let mut points_checked = 0;
    for k in 0..=steps {
        let xi = (k as f64 * grid_step).min(0.5);
        if bank.scaling.eval(2.0 * xi).abs() <= 1e-14 {
            continue;
        }
        points_checked += 1;
        let mut sum = bank.lowpass.eval(xi).powi(2);
        for h in &bank.highpass {
            sum += h.eval(xi).powi(2);
        }
        let dev = (sum - 1.0).abs();
        if dev > max_deviation {
            max_deviation = dev;
            worst_xi = xi;
        }
    }
    ValidationReport {
        pass: max_deviation <= tol,
        max_deviation,
        worst_xi,
        points_checked,
    }
}

/// Checks the generator telescoping identity
/// `|phi(lam / 2^(j+1))|^2 = |phi(lam / 2^j)|^2 + sum_n |psi^n(lam / 2^j)|^2`
/// for every eigenvalue and level in range, plus the monotone onset of
/// `|phi(lam / 2^j)| -> 1` as `j` grows.
pub fn validate_partition_limit(
    bank: &FilterBank,
    levels: RangeInclusive<u32>,
    eigenvalues: &[f64],
    tol: f64,
) -> ValidationReport {
    let mut max_deviation = 0.0f64;
    let mut worst_xi = 0.0;
    let mut points_checked = 0;
    for &lam in eigenvalues {
        let mut prev = f64::NEG_INFINITY;
        for j in levels.clone() {
            let xi = lam / f64::powi(2.0, j as i32);
            let lhs = bank.scaling.eval(xi / 2.0).powi(2);
            let mut rhs = bank.scaling.eval(xi).powi(2);
            for psi in &bank.wavelets {
                rhs += psi.eval(xi).powi(2);
            }
            let dev = (lhs - rhs).abs();
            points_checked += 1;
            if dev > max_deviation {
                max_deviation = dev;
                worst_xi = xi;
            }
            // onset: |phi(lam / 2^j)| never decreases as j grows
            let onset = bank.scaling.eval(xi).abs();
            if onset + 1e-12 < prev {
                max_deviation = f64::max(max_deviation, prev - onset);
                worst_xi = xi;
            }
            prev = onset;
        }
        // once the argument is inside the plateau the profile must sit at 1
        let final_xi = lam / f64::powi(2.0, *levels.end() as i32);
        if final_xi < 0.25 {
            let dev = (bank.scaling.eval(final_xi).abs() - 1.0).abs();
            if dev > max_deviation {
                max_deviation = dev;
                worst_xi = final_xi;
            }
        }
    }
    ValidationReport {
        pass: max_deviation <= tol,
        max_deviation,
        worst_xi,
        points_checked,
    }
}
