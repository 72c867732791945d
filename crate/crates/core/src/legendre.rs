//! Stable evaluation of normalized associated Legendre functions.
//!
//! `Q(l, m, t)` is scaled so that `Y_lm(theta, phi) = Q(l, m, cos theta) e^{i m phi}`
//! is orthonormal with respect to the normalized surface measure
//! (`mu(S^2) = 1`, so `Q(0, 0, .) = 1`). The Condon-Shortley phase is kept
//! inside `Q`. Everything goes through the m-diagonal seed plus the
//! three-term recurrence in `l`; factorial ratios are never formed, which
//! keeps the values finite far beyond degree 1000.

/// Recurrence coefficients for a fixed order `m`:
/// `Q(l, m) = a(l, m) * t * Q(l-1, m) - b(l, m) * Q(l-2, m)`.
#[inline]
fn coeff_a(l: usize, m: usize) -> f64 {
    let (l, m) = (l as f64, m as f64);
    ((4.0 * l * l - 1.0) / ((l - m) * (l + m))).sqrt()
}

#[inline]
fn coeff_b(l: usize, m: usize) -> f64 {
    let (l, m) = (l as f64, m as f64);
    ((2.0 * l + 1.0) * (l - 1.0 - m) * (l - 1.0 + m) / ((2.0 * l - 3.0) * (l - m) * (l + m))).sqrt()
}

/// Diagonal step factor: `Q(m, m) = diag_factor(m) * sin(theta) * Q(m-1, m-1)`.
#[inline]
fn diag_factor(m: usize) -> f64 {
    let m = m as f64;
    -((2.0 * m + 1.0) / (2.0 * m)).sqrt()
}

/// Single value `Q(l, m, t)` for `0 <= m <= l`, `|t| <= 1`.
pub fn normalized_alf(l: usize, m: usize, t: f64) -> f64 {
    assert!(m <= l, "order {m} exceeds degree {l}");
    let s = (1.0 - t * t).max(0.0).sqrt();
    let mut qmm = 1.0;
    for mm in 1..=m {
        qmm *= diag_factor(mm) * s;
    }
    if l == m {
        return qmm;
    }
    let mut q1 = ((2 * m + 3) as f64).sqrt() * t * qmm;
    if l == m + 1 {
        return q1;
    }
    let mut q2 = qmm;
    for ll in (m + 2)..=l {
        let q = coeff_a(ll, m) * t * q1 - coeff_b(ll, m) * q2;
        q2 = q1;
        q1 = q;
    }
    q1
}

/// Precomputed recurrence coefficients for all `(l, m)` with `l < bandlimit`.
///
/// Shared across many evaluation points so the square roots are paid once.
#[derive(Debug, Clone)]
pub struct AlfTables {
    bandlimit: usize,
    diag: Vec<f64>,
    // a[m] and b[m] hold coefficients for l = m+2 .. bandlimit-1
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

impl AlfTables {
    pub fn new(bandlimit: usize) -> Self {
        assert!(bandlimit >= 1);
        let diag = (0..bandlimit)
            .map(|m| if m == 0 { 1.0 } else { diag_factor(m) })
            .collect();
        let mut a = Vec::with_capacity(bandlimit);
        let mut b = Vec::with_capacity(bandlimit);
        for m in 0..bandlimit {
            let ls = (m + 2)..bandlimit;
            a.push(ls.clone().map(|l| coeff_a(l, m)).collect());
            b.push(ls.map(|l| coeff_b(l, m)).collect());
        }
        Self { bandlimit, diag, a, b }
    }

    pub fn bandlimit(&self) -> usize {
        self.bandlimit
    }

    /// Fills `out[i] = Q(m + i, m, t)` for `i < bandlimit - m`.
    ///
    /// `qmm_seed` must be `Q(m, m, t)`; use [`AlfTables::diag_step`] to carry
    /// it across consecutive orders.
    pub fn column_into(&self, m: usize, t: f64, qmm_seed: f64, out: &mut [f64]) {
        let len = self.bandlimit - m;
        debug_assert_eq!(out.len(), len);
        out[0] = qmm_seed;
        if len == 1 {
            return;
        }
        out[1] = ((2 * m + 3) as f64).sqrt() * t * qmm_seed;
        let (am, bm) = (&self.a[m], &self.b[m]);
        for i in 2..len {
            out[i] = am[i - 2] * t * out[i - 1] - bm[i - 2] * out[i - 2];
        }
    }

    /// Advances the diagonal seed from `Q(m-1, m-1, t)` to `Q(m, m, t)`.
    #[inline]
    pub fn diag_step(&self, m: usize, s: f64, seed_prev: f64) -> f64 {
        self.diag[m] * s * seed_prev
    }
}

/// Unnormalized Legendre polynomial `P_l(t)` by the classic recurrence.
pub fn legendre(l: usize, t: f64) -> f64 {
    match l {
        0 => 1.0,
        1 => t,
        _ => {
            let (mut p2, mut p1) = (1.0, t);
            for ll in 2..=l {
                let llf = ll as f64;
                let p = ((2.0 * llf - 1.0) * t * p1 - (llf - 1.0) * p2) / llf;
                p2 = p1;
                p1 = p;
            }
            p1
        }
    }
}
