//! Spherical harmonic machinery: basis evaluation, the discrete transform
//! pair, and least-squares projection.
//!
//! Conventions, fixed once here and relied on everywhere else:
//!
//! * the surface measure is normalized (`mu(S^2) = 1`), so `Y_00 = 1` and
//!   the harmonics are orthonormal without any `4 pi` factor;
//! * coefficient vectors are flat with index `l^2 + l + m`, `l` ascending,
//!   `m` from `-l` to `l`;
//! * the transform `synth` maps coefficients `c` to node values
//!   `v_k = sum_{l,m} c_lm sqrt(w_k) Y_lm(x_k)` and `adjoint` is its exact
//!   adjoint `c_lm = sum_k v_k sqrt(w_k) conj(Y_lm(x_k))`. On a rule that
//!   integrates products of two bandlimited harmonics exactly, the pair is
//!   unitary on the band.
//!
//! Gauss-Legendre grids take a separable path (longitude FFT plus one
//! latitude Legendre matrix per order), `O(L^3)` for bandlimit `L`; every
//! other rule takes dense evaluation, `O(N L^2)`.

use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::legendre::AlfTables;
use crate::quadrature::{QuadratureRule, RuleFamily, SphericalPoint};

/// Laplace-Beltrami eigenvalue magnitude `sqrt(l (l + 1))`.
pub fn eigenvalue(ell: usize) -> f64 {
    let l = ell as f64;
    (l * (l + 1.0)).sqrt()
}

/// Index `(l, m)` with `|m| <= l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HarmonicIndex {
    pub ell: usize,
    pub m: i64,
}

impl HarmonicIndex {
    pub fn new(ell: usize, m: i64) -> Result<Self> {
        if m.unsigned_abs() as usize > ell {
            return Err(Error::InvalidArgument(format!(
                "harmonic order |{m}| exceeds degree {ell}"
            )));
        }
        Ok(Self { ell, m })
    }

    #[inline]
    pub fn flat(&self) -> usize {
        self.ell * self.ell + (self.ell as i64 + self.m) as usize
    }
}

/// `Y_lm` at a point, in the normalized-measure convention.
pub fn eval_harmonic(idx: HarmonicIndex, pt: &SphericalPoint) -> Complex64 {
    let mabs = idx.m.unsigned_abs() as usize;
    let q = crate::legendre::normalized_alf(idx.ell, mabs, pt.cos_theta());
    let phase = Complex64::from_polar(1.0, mabs as f64 * pt.phi());
    if idx.m >= 0 {
        q * phase
    } else {
        let sign = if mabs.is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * q * phase.conj()
    }
}

/// Complex coefficients for all `(l, m)` with `l < bandlimit`, flat order.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicCoefficients {
    bandlimit: usize,
    values: Vec<Complex64>,
}

impl HarmonicCoefficients {
    pub fn zeros(bandlimit: usize) -> Self {
        Self {
            bandlimit,
            values: vec![Complex64::default(); bandlimit * bandlimit],
        }
    }

    pub fn from_values(bandlimit: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != bandlimit * bandlimit {
            return Err(Error::ShapeMismatch(format!(
                "bandlimit {bandlimit} needs {} coefficients, got {}",
                bandlimit * bandlimit,
                values.len()
            )));
        }
        Ok(Self { bandlimit, values })
    }

    pub fn bandlimit(&self) -> usize {
        self.bandlimit
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn get(&self, idx: HarmonicIndex) -> Complex64 {
        self.values[idx.flat()]
    }

    pub fn set(&mut self, idx: HarmonicIndex, v: Complex64) {
        self.values[idx.flat()] = v;
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Keeps entries with `l < new_bandlimit`.
    pub fn truncated(&self, new_bandlimit: usize) -> Self {
        assert!(new_bandlimit <= self.bandlimit);
        Self {
            bandlimit: new_bandlimit,
            values: self.values[..new_bandlimit * new_bandlimit].to_vec(),
        }
    }

    /// Zero-pads up to `new_bandlimit`.
    pub fn extended(&self, new_bandlimit: usize) -> Self {
        assert!(new_bandlimit >= self.bandlimit);
        let mut values = self.values.clone();
        values.resize(new_bandlimit * new_bandlimit, Complex64::default());
        Self {
            bandlimit: new_bandlimit,
            values,
        }
    }
}

/// Values on a rule's nodes, tagged with the level, plus an optional cache
/// of the discrete Fourier coefficients that synthesize them.
#[derive(Debug, Clone)]
pub struct CoefficientSequence {
    level: u32,
    rule: Arc<QuadratureRule>,
    values: Vec<Complex64>,
    fourier: Option<HarmonicCoefficients>,
}

/// Bandlimit (`l`-range bound) of level-`j` sequences: harmonics with
/// `l < 2^(j-1)` (the sphere has product constant `c = 2`).
pub fn bandlimit_for_level(level: u32) -> usize {
    assert!(level >= 1, "levels start at 1");
    1usize << (level - 1)
}

impl CoefficientSequence {
    pub fn new(level: u32, rule: Arc<QuadratureRule>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != rule.node_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} values on a rule with {} nodes",
                values.len(),
                rule.node_count()
            )));
        }
        Ok(Self {
            level,
            rule,
            values,
            fourier: None,
        })
    }

    pub fn with_fourier(mut self, fourier: HarmonicCoefficients) -> Result<Self> {
        if fourier.bandlimit() != bandlimit_for_level(self.level) {
            return Err(Error::ShapeMismatch(format!(
                "fourier cache bandlimit {} does not match level {} (expects {})",
                fourier.bandlimit(),
                self.level,
                bandlimit_for_level(self.level)
            )));
        }
        self.fourier = Some(fourier);
        Ok(self)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn rule(&self) -> &Arc<QuadratureRule> {
        &self.rule
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn fourier(&self) -> Option<&HarmonicCoefficients> {
        self.fourier.as_ref()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}

// ---------------------------------------------------------------------------
// transform plans
// ---------------------------------------------------------------------------

/// Precomputed transform for one `(rule, bandlimit)` pair.
#[derive(Clone)]
pub enum TransformPlan {
    Separable(SeparablePlan),
    Dense(DensePlan),
}

impl TransformPlan {
    /// Separable plan on Gauss-Legendre grids, dense otherwise.
    pub fn new(rule: Arc<QuadratureRule>, bandlimit: usize) -> Self {
        match rule.family() {
            RuleFamily::GaussLegendre { .. } => {
                TransformPlan::Separable(SeparablePlan::new(rule, bandlimit))
            }
            _ => TransformPlan::Dense(DensePlan::new(rule, bandlimit)),
        }
    }

    /// Dense evaluation regardless of grid structure (reference path).
    pub fn dense(rule: Arc<QuadratureRule>, bandlimit: usize) -> Self {
        TransformPlan::Dense(DensePlan::new(rule, bandlimit))
    }

    pub fn bandlimit(&self) -> usize {
        match self {
            TransformPlan::Separable(p) => p.bandlimit,
            TransformPlan::Dense(p) => p.bandlimit,
        }
    }

    pub fn rule(&self) -> &Arc<QuadratureRule> {
        match self {
            TransformPlan::Separable(p) => &p.rule,
            TransformPlan::Dense(p) => &p.rule,
        }
    }

    /// `v_k = sum c_lm sqrt(w_k) Y_lm(x_k)`.
    pub fn synth(&self, coeffs: &HarmonicCoefficients) -> Result<Vec<Complex64>> {
        if coeffs.bandlimit() != self.bandlimit() {
            return Err(Error::ShapeMismatch(format!(
                "plan bandlimit {} vs coefficients {}",
                self.bandlimit(),
                coeffs.bandlimit()
            )));
        }
        Ok(match self {
            TransformPlan::Separable(p) => p.synth(coeffs.values()),
            TransformPlan::Dense(p) => p.synth(coeffs.values()),
        })
    }

    /// `c_lm = sum_k v_k sqrt(w_k) conj(Y_lm(x_k))`.
    pub fn adjoint(&self, values: &[Complex64]) -> Result<HarmonicCoefficients> {
        if values.len() != self.rule().node_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} values on a rule with {} nodes",
                values.len(),
                self.rule().node_count()
            )));
        }
        let out = match self {
            TransformPlan::Separable(p) => p.adjoint(values),
            TransformPlan::Dense(p) => p.adjoint(values),
        };
        HarmonicCoefficients::from_values(self.bandlimit(), out)
    }
}

/// Longitude-FFT plus per-order latitude matrices on a Gauss-Legendre grid.
#[derive(Clone)]
pub struct SeparablePlan {
    rule: Arc<QuadratureRule>,
    bandlimit: usize,
    n_lat: usize,
    n_lon: usize,
    sqrt_ring_w: Vec<f64>,
    /// `p[m]` is latitude-major: `p[m][a * (L - m) + (l - m)] = Q_lm(t_a)`.
    p: Vec<Vec<f64>>,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
}

impl SeparablePlan {
    fn new(rule: Arc<QuadratureRule>, bandlimit: usize) -> Self {
        let (lats, lat_weights, n_lon) = match rule.family() {
            RuleFamily::GaussLegendre {
                lats,
                lat_weights,
                n_lon,
                ..
            } => (lats.clone(), lat_weights.clone(), *n_lon),
            _ => panic!("separable plan requires a Gauss-Legendre rule"),
        };
        let n_lat = lats.len();
        let tables = AlfTables::new(bandlimit);
        let mut p: Vec<Vec<f64>> = (0..bandlimit)
            .map(|m| vec![0.0; n_lat * (bandlimit - m)])
            .collect();
        let mut col = vec![0.0; bandlimit];
        for (a, &t) in lats.iter().enumerate() {
            let s = (1.0 - t * t).max(0.0).sqrt();
            let mut seed = 1.0;
            for (m, pm) in p.iter_mut().enumerate() {
                if m > 0 {
                    seed = tables.diag_step(m, s, seed);
                }
                let len = bandlimit - m;
                tables.column_into(m, t, seed, &mut col[..len]);
                pm[a * len..(a + 1) * len].copy_from_slice(&col[..len]);
            }
        }
        let mut planner = FftPlanner::new();
        let fft_fwd = planner.plan_fft(n_lon, FftDirection::Forward);
        let fft_inv = planner.plan_fft(n_lon, FftDirection::Inverse);
        Self {
            rule,
            bandlimit,
            n_lat,
            n_lon,
            sqrt_ring_w: lat_weights.iter().map(|w| w.sqrt()).collect(),
            p,
            fft_fwd,
            fft_inv,
        }
    }

    fn synth(&self, c: &[Complex64]) -> Vec<Complex64> {
        let (n_lat, n_lon, lmax) = (self.n_lat, self.n_lon, self.bandlimit);
        let mut grid = vec![Complex64::default(); n_lat * n_lon];
        let mut cm = vec![Complex64::default(); lmax];
        for m in 0..lmax {
            let len = lmax - m;
            let bin_pos = m % n_lon;
            let bin_neg = (n_lon - bin_pos) % n_lon;
            let neg_sign = if m % 2 == 0 { 1.0 } else { -1.0 };

            for l in m..lmax {
                cm[l - m] = c[l * l + l + m];
            }
            for a in 0..n_lat {
                let row = &self.p[m][a * len..(a + 1) * len];
                let mut acc = Complex64::default();
                for (pi, ci) in row.iter().zip(&cm[..len]) {
                    acc += ci * pi;
                }
                grid[a * n_lon + bin_pos] += acc;
            }
            if m > 0 {
                for l in m..lmax {
                    cm[l - m] = c[l * l + l - m];
                }
                for a in 0..n_lat {
                    let row = &self.p[m][a * len..(a + 1) * len];
                    let mut acc = Complex64::default();
                    for (pi, ci) in row.iter().zip(&cm[..len]) {
                        acc += ci * pi;
                    }
                    grid[a * n_lon + bin_neg] += neg_sign * acc;
                }
            }
        }
        for a in 0..n_lat {
            let row = &mut grid[a * n_lon..(a + 1) * n_lon];
            self.fft_inv.process(row);
            let sw = self.sqrt_ring_w[a];
            for v in row.iter_mut() {
                *v *= sw;
            }
        }
        grid
    }

    fn adjoint(&self, values: &[Complex64]) -> Vec<Complex64> {
        let (n_lat, n_lon, lmax) = (self.n_lat, self.n_lon, self.bandlimit);
        let mut grid = values.to_vec();
        for a in 0..n_lat {
            let row = &mut grid[a * n_lon..(a + 1) * n_lon];
            let sw = self.sqrt_ring_w[a];
            for v in row.iter_mut() {
                *v *= sw;
            }
            self.fft_fwd.process(row);
        }
        let mut c = vec![Complex64::default(); lmax * lmax];
        for m in 0..lmax {
            let len = lmax - m;
            let bin_pos = m % n_lon;
            let bin_neg = (n_lon - bin_pos) % n_lon;
            let neg_sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            for a in 0..n_lat {
                let row = &self.p[m][a * len..(a + 1) * len];
                let f_pos = grid[a * n_lon + bin_pos];
                for (i, pi) in row.iter().enumerate() {
                    let l = m + i;
                    c[l * l + l + m] += pi * f_pos;
                }
                if m > 0 {
                    let f_neg = neg_sign * grid[a * n_lon + bin_neg];
                    for (i, pi) in row.iter().enumerate() {
                        let l = m + i;
                        c[l * l + l - m] += pi * f_neg;
                    }
                }
            }
        }
        c
    }
}

/// Point-by-point evaluation via the Legendre recurrence; works on any rule.
#[derive(Clone)]
pub struct DensePlan {
    rule: Arc<QuadratureRule>,
    bandlimit: usize,
    tables: Arc<AlfTables>,
    sqrt_w: Vec<f64>,
}

impl DensePlan {
    fn new(rule: Arc<QuadratureRule>, bandlimit: usize) -> Self {
        let sqrt_w = rule.weights().iter().map(|w| w.sqrt()).collect();
        Self {
            rule,
            bandlimit,
            tables: Arc::new(AlfTables::new(bandlimit)),
            sqrt_w,
        }
    }

    fn synth(&self, c: &[Complex64]) -> Vec<Complex64> {
        let lmax = self.bandlimit;
        let mut out = vec![Complex64::default(); self.rule.node_count()];
        let mut col = vec![0.0; lmax];
        for (k, pt) in self.rule.points().iter().enumerate() {
            let t = pt.cos_theta();
            let s = (1.0 - t * t).max(0.0).sqrt();
            let e1 = Complex64::from_polar(1.0, pt.phi());
            let mut phase = Complex64::new(1.0, 0.0);
            let mut seed = 1.0;
            let mut acc = Complex64::default();
            for m in 0..lmax {
                if m > 0 {
                    seed = self.tables.diag_step(m, s, seed);
                    phase *= e1;
                }
                let len = lmax - m;
                self.tables.column_into(m, t, seed, &mut col[..len]);
                let mut pos = Complex64::default();
                let mut neg = Complex64::default();
                for (i, &q) in col[..len].iter().enumerate() {
                    let l = m + i;
                    pos += c[l * l + l + m] * q;
                    if m > 0 {
                        neg += c[l * l + l - m] * q;
                    }
                }
                acc += pos * phase;
                if m > 0 {
                    let neg_sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    acc += neg * neg_sign * phase.conj();
                }
            }
            out[k] = acc * self.sqrt_w[k];
        }
        out
    }

    fn adjoint(&self, values: &[Complex64]) -> Vec<Complex64> {
        let lmax = self.bandlimit;
        let mut c = vec![Complex64::default(); lmax * lmax];
        let mut col = vec![0.0; lmax];
        for (k, pt) in self.rule.points().iter().enumerate() {
            let v = values[k] * self.sqrt_w[k];
            if v == Complex64::default() {
                continue;
            }
            let t = pt.cos_theta();
            let s = (1.0 - t * t).max(0.0).sqrt();
            let e1 = Complex64::from_polar(1.0, pt.phi());
            let mut phase = Complex64::new(1.0, 0.0);
            let mut seed = 1.0;
            for m in 0..lmax {
                if m > 0 {
                    seed = self.tables.diag_step(m, s, seed);
                    phase *= e1;
                }
                let len = lmax - m;
                self.tables.column_into(m, t, seed, &mut col[..len]);
                // conj(Y_lm) = Q e^{-im phi}; conj(Y_{l,-m}) = (-1)^m Q e^{+im phi}
                let vp = v * phase.conj();
                let vn = if m > 0 {
                    let neg_sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    v * phase * neg_sign
                } else {
                    Complex64::default()
                };
                for (i, &q) in col[..len].iter().enumerate() {
                    let l = m + i;
                    c[l * l + l + m] += vp * q;
                    if m > 0 {
                        c[l * l + l - m] += vn * q;
                    }
                }
            }
        }
        c
    }
}

/// One-shot synthesis without keeping a plan.
pub fn synth(coeffs: &HarmonicCoefficients, rule: &Arc<QuadratureRule>) -> Vec<Complex64> {
    TransformPlan::new(rule.clone(), coeffs.bandlimit())
        .synth(coeffs)
        .expect("bandlimit matches by construction")
}

/// One-shot adjoint without keeping a plan.
pub fn adjoint(
    values: &[Complex64],
    rule: &Arc<QuadratureRule>,
    bandlimit: usize,
) -> Result<HarmonicCoefficients> {
    TransformPlan::new(rule.clone(), bandlimit).adjoint(values)
}

/// Dense Gram matrix `sum_k w_k Y(x_k) Y(x_k)^H` over all `(l, m)` with
/// `l < degree`, row-major `degree^2 x degree^2`.
pub(crate) fn gram_matrix(rule: &QuadratureRule, degree: usize) -> Vec<Complex64> {
    let dim = degree * degree;
    let tables = AlfTables::new(degree);
    let mut gram = vec![Complex64::default(); dim * dim];
    let mut row = vec![Complex64::default(); dim];
    let mut col = vec![0.0; degree];
    for (k, pt) in rule.points().iter().enumerate() {
        let w = rule.weights()[k];
        basis_row(&tables, pt, &mut col, &mut row);
        for i in 0..dim {
            let yi = row[i] * w;
            for j in i..dim {
                gram[i * dim + j] += yi * row[j].conj();
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            gram[i * dim + j] = gram[j * dim + i].conj();
        }
    }
    gram
}

/// Fills `out[flat(l, m)] = Y_lm(pt)` for all `l < tables.bandlimit()`.
fn basis_row(tables: &AlfTables, pt: &SphericalPoint, col: &mut [f64], out: &mut [Complex64]) {
    let lmax = tables.bandlimit();
    let t = pt.cos_theta();
    let s = (1.0 - t * t).max(0.0).sqrt();
    let e1 = Complex64::from_polar(1.0, pt.phi());
    let mut phase = Complex64::new(1.0, 0.0);
    let mut seed = 1.0;
    for m in 0..lmax {
        if m > 0 {
            seed = tables.diag_step(m, s, seed);
            phase *= e1;
        }
        let len = lmax - m;
        tables.column_into(m, t, seed, &mut col[..len]);
        let neg_sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        for (i, &q) in col[..len].iter().enumerate() {
            let l = m + i;
            out[l * l + l + m] = q * phase;
            if m > 0 {
                out[l * l + l - m] = neg_sign * q * phase.conj();
            }
        }
    }
}

// ---------------------------------------------------------------------------
// least-squares projection
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub coefficients: HarmonicCoefficients,
    /// Synthesis of the fitted coefficients on the rule's nodes.
    pub values: Vec<Complex64>,
    /// `raw - values`.
    pub residual: Vec<Complex64>,
    pub iterations: usize,
    /// Final CG residual relative to the right-hand side.
    pub relative_residual: f64,
}

/// Projects `raw` onto the span of harmonics with `l < bandlimit` by solving
/// the normal equations with conjugate gradients. On a rule whose Gram at
/// `bandlimit` is the identity this converges in one iteration.
pub fn project(raw: &[Complex64], plan: &TransformPlan, opts: &CgOptions) -> Result<Projection> {
    let bandlimit = plan.bandlimit();
    let dim = bandlimit * bandlimit;
    if dim > raw.len() {
        return Err(Error::ShapeMismatch(format!(
            "projection needs at least {dim} nodes for bandlimit {bandlimit}, rule has {}",
            raw.len()
        )));
    }
    let rhs = plan.adjoint(raw)?;
    let rhs_norm = rhs.norm();
    if rhs_norm == 0.0 {
        let coefficients = HarmonicCoefficients::zeros(bandlimit);
        let values = vec![Complex64::default(); raw.len()];
        return Ok(Projection {
            coefficients,
            values,
            residual: raw.to_vec(),
            iterations: 0,
            relative_residual: 0.0,
        });
    }

    let apply = |c: &HarmonicCoefficients| -> Result<HarmonicCoefficients> {
        plan.adjoint(&plan.synth(c)?)
    };

    let mut x = HarmonicCoefficients::zeros(bandlimit);
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rs = r.values().iter().map(|v| v.norm_sqr()).sum::<f64>();
    let mut iterations = 0;
    let mut rel = rs.sqrt() / rhs_norm;
    while rel > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::CgDidNotConverge {
                iterations,
                residual: rel,
            });
        }
        let ap = apply(&p)?;
        let pap: f64 = p
            .values()
            .iter()
            .zip(ap.values())
            .map(|(pi, api)| (pi.conj() * api).re)
            .sum();
        let alpha = rs / pap;
        for ((xi, pi), (ri, api)) in x
            .values_mut()
            .iter_mut()
            .zip(p.values())
            .zip(r.values_mut().iter_mut().zip(ap.values()))
        {
            *xi += alpha * pi;
            *ri -= alpha * api;
        }
        let rs_next = r.values().iter().map(|v| v.norm_sqr()).sum::<f64>();
        let beta = rs_next / rs;
        for (pi, ri) in p.values_mut().iter_mut().zip(r.values()) {
            *pi = ri + beta * *pi;
        }
        rs = rs_next;
        rel = rs.sqrt() / rhs_norm;
        iterations += 1;
    }

    let values = plan.synth(&x)?;
    let residual = raw
        .iter()
        .zip(&values)
        .map(|(a, b)| a - b)
        .collect::<Vec<_>>();
    Ok(Projection {
        coefficients: x,
        values,
        residual,
        iterations,
        relative_residual: rel,
    })
}

// ---------------------------------------------------------------------------
// file formats
// ---------------------------------------------------------------------------

/// CSV `ell,m,re,im`, rows in flat order.
pub fn write_coefficients(path: impl AsRef<Path>, coeffs: &HarmonicCoefficients) -> Result<()> {
    let mut out = fs::File::create(path)?;
    writeln!(out, "ell,m,re,im")?;
    for l in 0..coeffs.bandlimit() {
        for m in -(l as i64)..=(l as i64) {
            let v = coeffs.values()[l * l + (l as i64 + m) as usize];
            writeln!(out, "{l},{m},{},{}", v.re, v.im)?;
        }
    }
    Ok(())
}

pub fn read_coefficients(path: impl AsRef<Path>) -> Result<HarmonicCoefficients> {
    let path = path.as_ref();
    let pstr = path.display().to_string();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut entries: Vec<(usize, i64, Complex64)> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if lineno == 0 || trimmed.is_empty() {
            continue; // header
        }
        let cols: Vec<&str> = trimmed.split(',').collect();
        let parse_err = |msg: String| Error::Parse {
            path: pstr.clone(),
            line: lineno + 1,
            msg,
        };
        if cols.len() != 4 {
            return Err(parse_err(format!("expected 4 columns, got {}", cols.len())));
        }
        let l: usize = cols[0].parse().map_err(|e| parse_err(format!("{e}")))?;
        let m: i64 = cols[1].parse().map_err(|e| parse_err(format!("{e}")))?;
        let re: f64 = cols[2].parse().map_err(|e| parse_err(format!("{e}")))?;
        let im: f64 = cols[3].parse().map_err(|e| parse_err(format!("{e}")))?;
        entries.push((l, m, Complex64::new(re, im)));
    }
    let bandlimit = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
    let mut coeffs = HarmonicCoefficients::zeros(bandlimit);
    for (l, m, v) in entries {
        coeffs.set(HarmonicIndex::new(l, m)?, v);
    }
    Ok(coeffs)
}

/// CSV `k,re,im` with a leading `# level=<j> N=<N> rule=<tag>` comment.
pub fn write_sequence(path: impl AsRef<Path>, seq: &CoefficientSequence) -> Result<()> {
    let mut out = fs::File::create(path)?;
    writeln!(
        out,
        "# level={} N={} rule={}",
        seq.level(),
        seq.values().len(),
        seq.rule().spec()
    )?;
    writeln!(out, "k,re,im")?;
    for (k, v) in seq.values().iter().enumerate() {
        writeln!(out, "{k},{},{}", v.re, v.im)?;
    }
    Ok(())
}

/// Header and values of a sequence file; the rule is rebound by the caller.
#[derive(Debug, Clone)]
pub struct SequenceFile {
    pub level: u32,
    pub node_count: usize,
    pub rule_spec: String,
    pub values: Vec<Complex64>,
}

pub fn read_sequence(path: impl AsRef<Path>) -> Result<SequenceFile> {
    let path = path.as_ref();
    let pstr = path.display().to_string();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut header: Option<(u32, usize, String)> = None;
    let mut values = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        let parse_err = |msg: String| Error::Parse {
            path: pstr.clone(),
            line: lineno + 1,
            msg,
        };
        if trimmed.starts_with('#') {
            let mut level = None;
            let mut n = None;
            let mut rule = None;
            for tok in trimmed.trim_start_matches('#').split_whitespace() {
                if let Some(v) = tok.strip_prefix("level=") {
                    level = v.parse::<u32>().ok();
                } else if let Some(v) = tok.strip_prefix("N=") {
                    n = v.parse::<usize>().ok();
                } else if let Some(v) = tok.strip_prefix("rule=") {
                    rule = Some(v.to_string());
                }
            }
            match (level, n, rule) {
                (Some(l), Some(n), Some(r)) => header = Some((l, n, r)),
                _ => return Err(parse_err("malformed sequence header".into())),
            }
            continue;
        }
        if trimmed.is_empty() || trimmed.starts_with("k,") {
            continue;
        }
        let cols: Vec<&str> = trimmed.split(',').collect();
        if cols.len() != 3 {
            return Err(parse_err(format!("expected 3 columns, got {}", cols.len())));
        }
        let re: f64 = cols[1].parse().map_err(|e| parse_err(format!("{e}")))?;
        let im: f64 = cols[2].parse().map_err(|e| parse_err(format!("{e}")))?;
        values.push(Complex64::new(re, im));
    }
    let (level, node_count, rule_spec) = header.ok_or_else(|| Error::Parse {
        path: pstr.clone(),
        line: 1,
        msg: "missing `# level=.. N=.. rule=..` header".into(),
    })?;
    if node_count != values.len() {
        return Err(Error::ShapeMismatch(format!(
            "header says N={node_count} but file has {} rows",
            values.len()
        )));
    }
    Ok(SequenceFile {
        level,
        node_count,
        rule_spec,
        values,
    })
}
