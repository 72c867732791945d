//! Weighted point sets on the 2-sphere used as per-level sampling sets.
//!
//! All rules integrate against the normalized surface measure
//! (`mu(S^2) = 1`), so weights of a sensible rule sum to one. A rule carries
//! a polynomial-exactness certificate `exactness_degree`: degree `n` means
//! the rule integrates every spherical polynomial spanned by harmonics of
//! degree `< n` exactly. Constructed Gauss-Legendre rules certify their
//! degree analytically; loaded point sets start uncertified and can be
//! promoted through [`verify_exactness`].

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sht;

/// Point on the unit sphere, stored as colatitude/longitude plus the
/// derived unit vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalPoint {
    theta: f64,
    phi: f64,
    vec: [f64; 3],
}

impl SphericalPoint {
    /// Colatitude in `[0, pi]`, longitude in `[0, 2pi)`.
    pub fn from_angles(theta: f64, phi: f64) -> Result<Self> {
        if !(0.0..=std::f64::consts::PI).contains(&theta) {
            return Err(Error::InvalidArgument(format!(
                "colatitude {theta} outside [0, pi]"
            )));
        }
        if !(0.0..std::f64::consts::TAU).contains(&phi) {
            return Err(Error::InvalidArgument(format!(
                "longitude {phi} outside [0, 2pi)"
            )));
        }
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Ok(Self {
            theta,
            phi,
            vec: [st * cp, st * sp, ct],
        })
    }

    /// Builds from a vector that must be unit length to within `1e-8`.
    /// Vectors already unit to 1e-12 are kept verbatim (so canonical files
    /// round-trip bit-exactly); anything coarser is renormalized.
    pub fn from_vector(v: [f64; 3]) -> Result<Self> {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidArgument(format!(
                "vector norm {norm} more than 1e-8 from 1"
            )));
        }
        let v = if (norm - 1.0).abs() <= 1e-12 {
            v
        } else {
            [v[0] / norm, v[1] / norm, v[2] / norm]
        };
        let theta = v[2].clamp(-1.0, 1.0).acos();
        let mut phi = v[1].atan2(v[0]);
        if phi < 0.0 {
            phi += std::f64::consts::TAU;
        }
        if phi >= std::f64::consts::TAU {
            phi = 0.0;
        }
        Ok(Self { theta, phi, vec: v })
    }

    pub fn north_pole() -> Self {
        Self::from_angles(0.0, 0.0).expect("pole is valid")
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        self.vec
    }

    pub fn cos_theta(&self) -> f64 {
        self.vec[2]
    }

    /// Euclidean (chordal) distance to `other`.
    pub fn euclidean_distance(&self, other: &Self) -> f64 {
        let d = [
            self.vec[0] - other.vec[0],
            self.vec[1] - other.vec[1],
            self.vec[2] - other.vec[2],
        ];
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.vec[0] * other.vec[0] + self.vec[1] * other.vec[1] + self.vec[2] * other.vec[2]
    }
}

/// Construction family of a rule. Gauss-Legendre rules keep their grid
/// structure so transforms can take the separable fast path.
#[derive(Debug, Clone)]
pub enum RuleFamily {
    GaussLegendre {
        degree: usize,
        /// Latitude nodes `cos(theta)`, Gauss-Legendre points on `[-1, 1]`.
        lats: Vec<f64>,
        /// Per-ring weights, already divided by the longitude count; each
        /// node on ring `a` has weight `lat_weights[a]`.
        lat_weights: Vec<f64>,
        n_lon: usize,
    },
    Spiral,
    Generic,
}

impl RuleFamily {
    pub fn tag(&self) -> &'static str {
        match self {
            RuleFamily::GaussLegendre { .. } => "GL",
            RuleFamily::Spiral => "SP",
            RuleFamily::Generic => "GENERIC",
        }
    }
}

/// Weighted point set with an exactness certificate.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    points: Vec<SphericalPoint>,
    weights: Vec<f64>,
    exactness_degree: usize,
    family: RuleFamily,
    /// Human-readable origin, e.g. `gl:64`, `sp:512`, `file:designs/sd498.txt`.
    spec: String,
}

impl QuadratureRule {
    fn new(
        points: Vec<SphericalPoint>,
        weights: Vec<f64>,
        exactness_degree: usize,
        family: RuleFamily,
        spec: String,
    ) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} points vs {} weights",
                points.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| **w <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "nonpositive weight {w}; negative-weight rules are not supported"
            )));
        }
        Ok(Self {
            points,
            weights,
            exactness_degree,
            family,
            spec,
        })
    }

    pub fn node_count(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[SphericalPoint] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn exactness_degree(&self) -> usize {
        self.exactness_degree
    }

    pub fn family(&self) -> &RuleFamily {
        &self.family
    }

    pub fn spec(&self) -> &str {
        &self.spec
    }

    /// Runs [`verify_exactness`] at `degree` and returns a copy of the rule
    /// carrying the certificate, or the failing report.
    pub fn certified(self, degree: usize, opts: &VerifyOptions) -> Result<(Self, ExactnessReport)> {
        let report = verify_exactness(&self, degree, opts)?;
        if !report.pass {
            return Err(Error::InvalidArgument(format!(
                "rule failed exactness check at degree {degree}: max error {:.3e} > tol {:.1e}",
                report.max_error, report.tol
            )));
        }
        let mut rule = self;
        rule.exactness_degree = rule.exactness_degree.max(degree);
        Ok((rule, report))
    }
}

impl fmt::Display for QuadratureRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} rule, {} nodes, exactness degree {}",
            self.family.tag(),
            self.node_count(),
            self.exactness_degree
        )
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// degree-`n` Legendre polynomial. Weights sum to 2.
fn gauss_legendre_1d(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Tricomi-style initial guess, then Newton.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    nodes.reverse(); // ascending in cos(theta)
    weights.reverse();
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p2, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for l in 2..=n {
        let lf = l as f64;
        let p = ((2.0 * lf - 1.0) * x * p1 - (lf - 1.0) * p2) / lf;
        p2 = p1;
        p1 = p;
    }
    let dp = n as f64 * (x * p1 - p2) / (x * x - 1.0);
    (p1, dp)
}

/// Tensor-product Gauss-Legendre rule of degree `n`:
/// `floor((n-1)/2) + 1` Gauss-Legendre latitudes and `n` equispaced
/// longitudes, `N = n * (floor((n-1)/2) + 1)` nodes in total. Exact for
/// every spherical polynomial of harmonic degree `< n`.
pub fn gauss_legendre_rule(n: usize) -> Result<QuadratureRule> {
    if n < 1 {
        return Err(Error::InvalidArgument("degree must be at least 1".into()));
    }
    let n_lat = (n - 1) / 2 + 1;
    let (lats, w1d) = gauss_legendre_1d(n_lat);
    let lat_weights: Vec<f64> = w1d.iter().map(|w| w / 2.0 / n as f64).collect();
    let mut points = Vec::with_capacity(n_lat * n);
    let mut weights = Vec::with_capacity(n_lat * n);
    for (a, &t) in lats.iter().enumerate() {
        let theta = t.clamp(-1.0, 1.0).acos();
        for i in 0..n {
            let phi = std::f64::consts::TAU * i as f64 / n as f64;
            points.push(SphericalPoint::from_angles(theta, phi)?);
            weights.push(lat_weights[a]);
        }
    }
    QuadratureRule::new(
        points,
        weights,
        n,
        RuleFamily::GaussLegendre {
            degree: n,
            lats,
            lat_weights,
            n_lon: n,
        },
        format!("gl:{n}"),
    )
}

/// Generalized spiral points with equal weights `1/N`:
/// `theta_k = arccos(1 - (2k-1)/N)` and longitude angle `1.8 sqrt(N) theta_k`
/// for `k = 1..N`. Not polynomial-exact; `exactness_degree = 0`.
pub fn spiral_rule(count: usize) -> Result<QuadratureRule> {
    if count < 1 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    let n = count as f64;
    let c = 1.8 * n.sqrt();
    let mut points = Vec::with_capacity(count);
    for k in 1..=count {
        let z = 1.0 - (2.0 * k as f64 - 1.0) / n;
        let theta = z.clamp(-1.0, 1.0).acos();
        let mut phi = (c * theta).rem_euclid(std::f64::consts::TAU);
        if phi >= std::f64::consts::TAU {
            phi = 0.0; // rem_euclid can round up to the modulus
        }
        points.push(SphericalPoint::from_angles(theta, phi)?);
    }
    QuadratureRule::new(
        points,
        vec![1.0 / n; count],
        0,
        RuleFamily::Spiral,
        format!("sp:{count}"),
    )
}

/// Weight handling when loading a point-set file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// Fourth column required on every line.
    FromFile,
    /// Equal weights `1/N`.
    Equal,
}

/// Loads a point set from a UTF-8 text file: one point per line,
/// whitespace-separated `x y z` or `x y z w`; `#` starts a comment line.
/// The rule is tagged GENERIC with `exactness_degree = 0`; certify it
/// afterwards with [`QuadratureRule::certified`] if a degree is claimed.
pub fn load_pointset(path: impl AsRef<Path>, mode: WeightMode) -> Result<QuadratureRule> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let pstr = path.display().to_string();
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_id = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = trimmed.split_whitespace().collect();
        if cols.len() != 3 && cols.len() != 4 {
            return Err(Error::Parse {
                path: pstr,
                line: line_id,
                msg: format!("expected 3 or 4 columns, found {}", cols.len()),
            });
        }
        if mode == WeightMode::FromFile && cols.len() != 4 {
            return Err(Error::Parse {
                path: pstr,
                line: line_id,
                msg: "weight mode from_file requires 4 columns".into(),
            });
        }
        let mut vals = [0.0; 4];
        for (i, c) in cols.iter().enumerate() {
            vals[i] = c.parse::<f64>().map_err(|e| Error::Parse {
                path: pstr.clone(),
                line: line_id,
                msg: format!("bad number {c:?}: {e}"),
            })?;
        }
        let v = [vals[0], vals[1], vals[2]];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::NonUnitPoint {
                path: pstr,
                line: line_id,
                norm,
            });
        }
        points.push(SphericalPoint::from_vector(v)?);
        if mode == WeightMode::FromFile {
            weights.push(vals[3]);
        }
    }
    if points.is_empty() {
        return Err(Error::Parse {
            path: pstr,
            line: 0,
            msg: "no points in file".into(),
        });
    }
    if mode == WeightMode::Equal {
        weights = vec![1.0 / points.len() as f64; points.len()];
    }
    QuadratureRule::new(
        points,
        weights,
        0,
        RuleFamily::Generic,
        format!("file:{pstr}"),
    )
}

/// Serializes in the canonical 4-column format accepted by [`load_pointset`].
/// Floats use shortest round-trip formatting, so load-then-write of a
/// canonical file is byte-identical.
pub fn write_pointset(path: impl AsRef<Path>, rule: &QuadratureRule) -> Result<()> {
    let mut out = fs::File::create(path)?;
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        let v = p.unit_vector();
        writeln!(out, "{} {} {} {}", v[0], v[1], v[2], w)?;
    }
    Ok(())
}

/// Options for [`verify_exactness`].
#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub tol: f64,
    /// Guard on the dense Gram matrix size (degree^4 complex entries).
    pub max_gram_bytes: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_gram_bytes: 1 << 30,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExactnessReport {
    pub degree: usize,
    pub tol: f64,
    pub pass: bool,
    pub max_error: f64,
}

/// Checks the discrete orthonormality sums
/// `U_{(l,m),(l',m')} = sum_k w_k Y_{lm}(x_k) conj(Y_{l'm'}(x_k))`
/// against the identity for all `l, l' < degree` and reports the largest
/// deviation.
///
/// Passing at `degree` certifies that the rule integrates every product of
/// two harmonics of degree `< degree` exactly, which is the condition the
/// transform layer needs with bandlimit `degree`. Note the longitudinal
/// aliasing consequence for tensor rules: `gauss_legendre_rule(n)` passes
/// here for `degree <= (n + 1) / 2` but not at `degree = n`, because pairs
/// with `m - m' = +-n` alias on `n` equispaced longitudes.
pub fn verify_exactness(
    rule: &QuadratureRule,
    degree: usize,
    opts: &VerifyOptions,
) -> Result<ExactnessReport> {
    if degree < 1 {
        return Err(Error::InvalidArgument("degree must be at least 1".into()));
    }
    let dim = degree * degree;
    let bytes = (dim as u64) * (dim as u64) * 16;
    if bytes > opts.max_gram_bytes {
        return Err(Error::ResourceGuard {
            degree,
            bytes,
            limit: opts.max_gram_bytes,
        });
    }
    let gram = sht::gram_matrix(rule, degree);
    let mut max_error = 0.0f64;
    for row in 0..dim {
        for col in 0..dim {
            let want = if row == col { 1.0 } else { 0.0 };
            let dev = (gram[row * dim + col] - want).norm();
            if dev > max_error {
                max_error = dev;
            }
        }
    }
    Ok(ExactnessReport {
        degree,
        tol: opts.tol,
        pass: max_error <= opts.tol,
        max_error,
    })
}
