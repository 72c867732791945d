//! Multi-level framelet filter bank transforms.
//!
//! A [`LevelLayout`] fixes, for each level `j`, the sampling rule and the
//! bandlimit `2^(j-1)` (harmonics with `l < 2^(j-1)`; the number of
//! coefficients is its square). Decomposition convolves with the starred
//! masks and downsamples; reconstruction upsamples, convolves, and sums.
//! Every convolution is a pointwise multiply in the frequency domain, so
//! the multi-level decomposition performs exactly one analysis transform at
//! the top level and one synthesis per output sequence, and reconstruction
//! mirrors that.
//!
//! On a level whose rule integrates products of two bandlimited harmonics
//! exactly (`exactness_degree >= 2^j - 1`), the adjoint transform inverts
//! synthesis on the band and the transform pair reconstructs perfectly. On
//! other rules the adjoint is replaced by a conjugate-gradient
//! least-squares inverse and the per-stage residuals are reported instead
//! of being silently dropped.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::filterbank::{FilterBank, SymbolProfile};
use crate::quadrature::{gauss_legendre_rule, spiral_rule, QuadratureRule};
use crate::sht::{
    bandlimit_for_level, eigenvalue, project, read_sequence, write_sequence, CgOptions,
    CoefficientSequence, HarmonicCoefficients, TransformPlan,
};

/// One level of a layout.
pub struct Level {
    pub j: u32,
    pub rule: Arc<QuadratureRule>,
    pub plan: TransformPlan,
    /// Bound on harmonic degrees at this level: content has `l < bandlimit`.
    pub bandlimit: usize,
    /// Whether the rule's certificate covers products of two bandlimited
    /// harmonics (`exactness_degree >= 2^j - 1`), which makes the adjoint
    /// transform exact on the band.
    pub certified: bool,
}

/// Contiguous levels `j0 ..= j_max` with one rule per level.
pub struct LevelLayout {
    levels: Vec<Level>,
}

impl LevelLayout {
    pub fn from_rules(j0: u32, rules: Vec<Arc<QuadratureRule>>) -> Result<Self> {
        if j0 < 1 {
            return Err(Error::InvalidArgument(
                "levels start at 1 (bandlimit 2^(j-1) degenerates below)".into(),
            ));
        }
        if rules.is_empty() {
            return Err(Error::InvalidArgument("layout needs at least one level".into()));
        }
        let mut levels = Vec::with_capacity(rules.len());
        for (i, rule) in rules.into_iter().enumerate() {
            let j = j0 + i as u32;
            let bandlimit = bandlimit_for_level(j);
            let coeffs = bandlimit * bandlimit;
            if coeffs > rule.node_count() {
                return Err(Error::ShapeMismatch(format!(
                    "level {j} needs at least {coeffs} nodes, rule {} has {}",
                    rule.spec(),
                    rule.node_count()
                )));
            }
            let certified = rule.exactness_degree() >= (1usize << j) - 1;
            let plan = TransformPlan::new(rule.clone(), bandlimit);
            levels.push(Level {
                j,
                rule,
                plan,
                bandlimit,
                certified,
            });
        }
        Ok(Self { levels })
    }

    /// Default layout: level `j` sampled on the Gauss-Legendre rule of
    /// degree `2^j`, which certifies the transform pair by construction.
    pub fn gauss_legendre(j0: u32, j_max: u32) -> Result<Self> {
        let rules = (j0..=j_max)
            .map(|j| gauss_legendre_rule(1usize << j).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        Self::from_rules(j0, rules)
    }

    /// Gauss-Legendre layout fixed by the finest degree, halving downwards
    /// (`gl:255` at the top gives `gl:127`, `gl:63`, ... below).
    pub fn gauss_legendre_halving(j0: u32, j_max: u32, finest_degree: usize) -> Result<Self> {
        let mut degs = vec![0usize; (j_max - j0 + 1) as usize];
        let mut d = finest_degree;
        for slot in degs.iter_mut().rev() {
            *slot = d;
            d /= 2;
        }
        let rules = degs
            .into_iter()
            .map(|deg| gauss_legendre_rule(deg).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        Self::from_rules(j0, rules)
    }

    /// Spiral-point layout fixed by the finest node count, quartering
    /// downwards (the usual `N_j ~ 4 N_{j-1}` growth). Not polynomial
    /// exact: all levels run through the least-squares inverse.
    pub fn spiral_quartering(j0: u32, j_max: u32, finest_count: usize) -> Result<Self> {
        let mut counts = vec![0usize; (j_max - j0 + 1) as usize];
        let mut n = finest_count;
        for slot in counts.iter_mut().rev() {
            *slot = n;
            n /= 4;
        }
        let rules = counts
            .into_iter()
            .map(|n| spiral_rule(n).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        Self::from_rules(j0, rules)
    }

    pub fn j0(&self) -> u32 {
        self.levels[0].j
    }

    pub fn j_max(&self) -> u32 {
        self.levels[self.levels.len() - 1].j
    }

    pub fn level(&self, j: u32) -> Result<&Level> {
        if j < self.j0() || j > self.j_max() {
            return Err(Error::InvalidArgument(format!(
                "level {j} outside layout range [{}, {}]",
                self.j0(),
                self.j_max()
            )));
        }
        Ok(&self.levels[(j - self.j0()) as usize])
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// Builds the level-`j` sequence for raw node values, projecting onto
    /// the level's band (an exact adjoint when the rule is certified).
    pub fn sequence_from_values(
        &self,
        j: u32,
        values: Vec<Complex64>,
        cg: &CgOptions,
    ) -> Result<CoefficientSequence> {
        let level = self.level(j)?;
        let proj = project(&values, &level.plan, cg)?;
        CoefficientSequence::new(j, level.rule.clone(), proj.values)?
            .with_fourier(proj.coefficients)
    }
}

/// How a sequence's Fourier coefficients were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InverseMethod {
    Cached,
    Adjoint,
    LeastSquares,
}

#[derive(Debug, Clone, Copy)]
pub struct CoeffStats {
    pub j: u32,
    pub method: InverseMethod,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Fourier coefficients of a sequence: the cache when present, the plain
/// adjoint on certified rules, conjugate-gradient least squares otherwise.
fn coefficients_of(
    level: &Level,
    seq: &CoefficientSequence,
    cg: &CgOptions,
) -> Result<(HarmonicCoefficients, CoeffStats)> {
    if let Some(cached) = seq.fourier() {
        return Ok((
            cached.clone(),
            CoeffStats {
                j: level.j,
                method: InverseMethod::Cached,
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    if level.certified {
        let coeffs = level.plan.adjoint(seq.values())?;
        Ok((
            coeffs,
            CoeffStats {
                j: level.j,
                method: InverseMethod::Adjoint,
                iterations: 0,
                relative_residual: 0.0,
            },
        ))
    } else {
        let proj = project(seq.values(), &level.plan, cg)?;
        let raw_norm = seq.norm();
        let res = proj.residual.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        Ok((
            proj.coefficients,
            CoeffStats {
                j: level.j,
                method: InverseMethod::LeastSquares,
                iterations: proj.iterations,
                relative_residual: if raw_norm > 0.0 { res / raw_norm } else { 0.0 },
            },
        ))
    }
}

/// Per-flat-index mask arguments `lambda_l / 2^j` for `l < bandlimit`.
fn mask_arguments(bandlimit: usize, j: u32) -> Vec<f64> {
    let scale = f64::powi(2.0, j as i32);
    let mut out = Vec::with_capacity(bandlimit * bandlimit);
    for l in 0..bandlimit {
        let xi = eigenvalue(l) / scale;
        out.extend(std::iter::repeat_n(xi, 2 * l + 1));
    }
    out
}

/// `c_lm * s(lambda_l / 2^j)`, or the conjugate symbol when `star` is set
/// (a no-op for the real-valued shipped symbols, kept for the operator
/// identity `conv(h*)` = adjoint of `conv(h)`).
fn apply_symbol(
    coeffs: &HarmonicCoefficients,
    symbol: &SymbolProfile,
    j: u32,
    _star: bool,
) -> HarmonicCoefficients {
    let mut out = coeffs.clone();
    for (v, xi) in out
        .values_mut()
        .iter_mut()
        .zip(mask_arguments(coeffs.bandlimit(), j))
    {
        *v *= symbol.eval(xi);
    }
    out
}

/// Discrete convolution at the sequence's level: pointwise symbol multiply
/// in the frequency domain, re-synthesized on the same rule.
pub fn convolve(
    layout: &LevelLayout,
    seq: &CoefficientSequence,
    symbol: &SymbolProfile,
    star: bool,
) -> Result<CoefficientSequence> {
    let level = layout.level(seq.level())?;
    let (coeffs, _) = coefficients_of(level, seq, &CgOptions::default())?;
    let filtered = apply_symbol(&coeffs, symbol, seq.level(), star);
    let values = level.plan.synth(&filtered)?;
    CoefficientSequence::new(seq.level(), level.rule.clone(), values)?.with_fourier(filtered)
}

#[derive(Debug, Clone, Copy)]
pub struct TruncationStats {
    pub j: u32,
    /// Norm fraction of the coefficients dropped by the bandlimit cut.
    pub truncated_ratio: f64,
    /// Set when the dropped mass exceeds 1e-10 of the total.
    pub warning: bool,
}

/// Re-synthesis on the next-coarser rule. Coefficients above the coarse
/// bandlimit are cut; their mass is reported and should be negligible
/// whenever the input was low-pass filtered first.
pub fn downsample(
    layout: &LevelLayout,
    seq: &CoefficientSequence,
) -> Result<(CoefficientSequence, TruncationStats)> {
    let j = seq.level();
    let coarse = layout.level(j - 1)?;
    let fine = layout.level(j)?;
    let (coeffs, _) = coefficients_of(fine, seq, &CgOptions::default())?;
    let kept = coeffs.truncated(coarse.bandlimit);
    let total = coeffs.norm();
    let kept_norm = kept.norm();
    let cut = (total * total - kept_norm * kept_norm).max(0.0).sqrt();
    let ratio = if total > 0.0 { cut / total } else { 0.0 };
    let values = coarse.plan.synth(&kept)?;
    let out = CoefficientSequence::new(j - 1, coarse.rule.clone(), values)?.with_fourier(kept)?;
    Ok((
        out,
        TruncationStats {
            j,
            truncated_ratio: ratio,
            warning: ratio > 1e-10,
        },
    ))
}

/// Re-synthesis on the next-finer rule; coefficients are kept verbatim.
pub fn upsample(layout: &LevelLayout, seq: &CoefficientSequence) -> Result<CoefficientSequence> {
    let j = seq.level();
    let fine = layout.level(j + 1)?;
    let coarse = layout.level(j)?;
    let (coeffs, _) = coefficients_of(coarse, seq, &CgOptions::default())?;
    let extended = coeffs.extended(fine.bandlimit);
    let values = fine.plan.synth(&extended)?;
    CoefficientSequence::new(j + 1, fine.rule.clone(), values)?.with_fourier(extended)
}

/// One decomposition step at the sequence's level `j`: the coarse
/// approximation lands on the level-`(j-1)` rule, the `r` detail sequences
/// stay on the level-`j` rule.
pub struct OneLevelDecomposition {
    pub coarse: CoefficientSequence,
    pub details: Vec<CoefficientSequence>,
    pub truncation: TruncationStats,
}

pub fn decompose_one(
    layout: &LevelLayout,
    seq: &CoefficientSequence,
    bank: &FilterBank,
) -> Result<OneLevelDecomposition> {
    let lowpassed = convolve(layout, seq, &bank.lowpass, true)?;
    let (coarse, truncation) = downsample(layout, &lowpassed)?;
    let details = bank
        .highpass
        .iter()
        .map(|b| convolve(layout, seq, b, true))
        .collect::<Result<Vec<_>>>()?;
    Ok(OneLevelDecomposition {
        coarse,
        details,
        truncation,
    })
}

/// Inverse of [`decompose_one`]: upsample, convolve, and add the detail
/// channels back.
pub fn reconstruct_one(
    layout: &LevelLayout,
    coarse: &CoefficientSequence,
    details: &[CoefficientSequence],
    bank: &FilterBank,
) -> Result<CoefficientSequence> {
    if details.len() != bank.channels() {
        return Err(Error::ShapeMismatch(format!(
            "{} detail sequences for a bank with {} channels",
            details.len(),
            bank.channels()
        )));
    }
    let up = upsample(layout, coarse)?;
    let mut acc = convolve(layout, &up, &bank.lowpass, false)?;
    let j = acc.level();
    let level = layout.level(j)?;
    let mut coeffs = acc.fourier().expect("convolve caches fourier").clone();
    for (n, detail) in details.iter().enumerate() {
        if detail.level() != j {
            return Err(Error::ShapeMismatch(format!(
                "detail {n} at level {} but reconstruction targets {j}",
                detail.level()
            )));
        }
        let term = convolve(layout, detail, &bank.highpass[n], false)?;
        for (a, b) in coeffs
            .values_mut()
            .iter_mut()
            .zip(term.fourier().expect("cached").values())
        {
            *a += b;
        }
    }
    let values = level.plan.synth(&coeffs)?;
    acc = CoefficientSequence::new(j, level.rule.clone(), values)?.with_fourier(coeffs)?;
    Ok(acc)
}

/// Multi-level decomposition output: the level-`j0` approximation plus,
/// for each scale index `dj` in `[j0, j_max - 1]` and channel `n`, a detail
/// sequence living on the level-`(dj + 1)` rule.
pub struct FrameletDecomposition {
    pub j0: u32,
    pub j_max: u32,
    pub bank_name: String,
    pub lowpass: CoefficientSequence,
    details: Vec<Vec<CoefficientSequence>>,
}

impl FrameletDecomposition {
    pub fn channels(&self) -> usize {
        self.details.first().map_or(0, Vec::len)
    }

    pub fn detail(&self, dj: u32, n: usize) -> Result<&CoefficientSequence> {
        self.detail_scales()
            .position(|d| d == dj)
            .and_then(|i| self.details[i].get(n - 1))
            .ok_or_else(|| Error::InvalidArgument(format!("no detail ({dj}, {n})")))
    }

    pub fn detail_mut(&mut self, dj: u32, n: usize) -> Result<&mut CoefficientSequence> {
        let i = self
            .detail_scales()
            .position(|d| d == dj)
            .ok_or_else(|| Error::InvalidArgument(format!("no detail scale {dj}")))?;
        self.details[i]
            .get_mut(n - 1)
            .ok_or_else(|| Error::InvalidArgument(format!("no detail channel {n}")))
    }

    pub fn detail_scales(&self) -> impl Iterator<Item = u32> {
        self.j0..self.j_max
    }

    /// Total number of output values: `N_{j0} + r * sum_{j > j0} N_j`.
    pub fn total_output_len(&self) -> usize {
        self.lowpass.values().len()
            + self
                .details
                .iter()
                .flat_map(|per_scale| per_scale.iter().map(|d| d.values().len()))
                .sum::<usize>()
    }

    pub fn all_details(&self) -> impl Iterator<Item = &CoefficientSequence> {
        self.details.iter().flatten()
    }

    pub fn all_details_mut(&mut self) -> impl Iterator<Item = &mut CoefficientSequence> {
        self.details.iter_mut().flatten()
    }
}

#[derive(Debug, Clone, Default)]
pub struct DecomposeReport {
    pub initial: Option<CoeffStats>,
    pub truncation: Vec<TruncationStats>,
}

#[derive(Debug, Clone, Default)]
pub struct ReconstructReport {
    pub inversions: Vec<CoeffStats>,
}

/// Multi-level decomposition down to `j0`, entirely in the frequency
/// domain: one analysis transform of the input, one synthesis per output.
/// Bit-for-bit it matches iterating [`decompose_one`] because both sides
/// multiply the same symbol values onto the same coefficients.
pub fn decompose(
    layout: &LevelLayout,
    seq: &CoefficientSequence,
    bank: &FilterBank,
    j0: u32,
) -> Result<FrameletDecomposition> {
    decompose_with_report(layout, seq, bank, j0, &CgOptions::default()).map(|(d, _)| d)
}

pub fn decompose_with_report(
    layout: &LevelLayout,
    seq: &CoefficientSequence,
    bank: &FilterBank,
    j0: u32,
    cg: &CgOptions,
) -> Result<(FrameletDecomposition, DecomposeReport)> {
    let j_top = seq.level();
    if j0 >= j_top {
        return Err(Error::InvalidArgument(format!(
            "decomposition needs j0 < level, got j0={j0}, level={j_top}"
        )));
    }
    layout.level(j0)?;
    let mut report = DecomposeReport::default();
    let (mut coeffs, stats) = coefficients_of(layout.level(j_top)?, seq, cg)?;
    report.initial = Some(stats);

    let mut details: Vec<Vec<CoefficientSequence>> = Vec::new();
    for j in ((j0 + 1)..=j_top).rev() {
        let level = layout.level(j)?;
        let mut per_scale = Vec::with_capacity(bank.channels());
        for b in &bank.highpass {
            let filtered = apply_symbol(&coeffs, b, j, true);
            let values = level.plan.synth(&filtered)?;
            per_scale.push(
                CoefficientSequence::new(j, level.rule.clone(), values)?.with_fourier(filtered)?,
            );
        }
        details.push(per_scale);

        let coarse = layout.level(j - 1)?;
        let low = apply_symbol(&coeffs, &bank.lowpass, j, true);
        let total = low.norm();
        let kept = low.truncated(coarse.bandlimit);
        let cut = (total * total - kept.norm().powi(2)).max(0.0).sqrt();
        let ratio = if total > 0.0 { cut / total } else { 0.0 };
        report.truncation.push(TruncationStats {
            j,
            truncated_ratio: ratio,
            warning: ratio > 1e-10,
        });
        coeffs = kept;
    }
    details.reverse(); // scale index ascending: details[dj - j0]

    let bottom = layout.level(j0)?;
    let values = bottom.plan.synth(&coeffs)?;
    let lowpass = CoefficientSequence::new(j0, bottom.rule.clone(), values)?.with_fourier(coeffs)?;
    Ok((
        FrameletDecomposition {
            j0,
            j_max: j_top,
            bank_name: bank.name.clone(),
            lowpass,
            details,
        },
        report,
    ))
}

/// Multi-level reconstruction; inverse of [`decompose`] on certified
/// layouts.
pub fn reconstruct(
    layout: &LevelLayout,
    dec: &FrameletDecomposition,
    bank: &FilterBank,
) -> Result<CoefficientSequence> {
    reconstruct_with_report(layout, dec, bank, &CgOptions::default()).map(|(v, _)| v)
}

pub fn reconstruct_with_report(
    layout: &LevelLayout,
    dec: &FrameletDecomposition,
    bank: &FilterBank,
    cg: &CgOptions,
) -> Result<(CoefficientSequence, ReconstructReport)> {
    if bank.channels() != dec.channels() {
        return Err(Error::ShapeMismatch(format!(
            "bank {} has {} channels, decomposition stores {}",
            bank.name,
            bank.channels(),
            dec.channels()
        )));
    }
    let mut report = ReconstructReport::default();
    let (mut coeffs, stats) = coefficients_of(layout.level(dec.j0)?, &dec.lowpass, cg)?;
    report.inversions.push(stats);
    for j in (dec.j0 + 1)..=dec.j_max {
        let level = layout.level(j)?;
        let mut acc = apply_symbol(&coeffs.extended(level.bandlimit), &bank.lowpass, j, false);
        for (n, b) in bank.highpass.iter().enumerate() {
            let detail = dec.detail(j - 1, n + 1)?;
            let (dc, stats) = coefficients_of(level, detail, cg)?;
            report.inversions.push(stats);
            let term = apply_symbol(&dc, b, j, false);
            for (a, t) in acc.values_mut().iter_mut().zip(term.values()) {
                *a += t;
            }
        }
        coeffs = acc;
    }
    let top = layout.level(dec.j_max)?;
    let values = top.plan.synth(&coeffs)?;
    let seq = CoefficientSequence::new(dec.j_max, top.rule.clone(), values)?.with_fourier(coeffs)?;
    Ok((seq, report))
}

// ---------------------------------------------------------------------------
// directory format
// ---------------------------------------------------------------------------

/// Writes `lowpass.csv`, `detail_j<dj>_n<n>.csv` and a flat `manifest.txt`.
pub fn write_decomposition(dir: impl AsRef<Path>, dec: &FrameletDecomposition) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    manifest.push_str(&format!("j0={}\n", dec.j0));
    manifest.push_str(&format!("j={}\n", dec.j_max));
    manifest.push_str(&format!("channels={}\n", dec.channels()));
    manifest.push_str(&format!("bank={}\n", dec.bank_name));
    manifest.push_str(&format!("rule_j{}={}\n", dec.j0, dec.lowpass.rule().spec()));
    write_sequence(dir.join("lowpass.csv"), &dec.lowpass)?;
    for dj in dec.detail_scales() {
        for n in 1..=dec.channels() {
            let d = dec.detail(dj, n)?;
            if n == 1 {
                manifest.push_str(&format!("rule_j{}={}\n", dj + 1, d.rule().spec()));
            }
            write_sequence(dir.join(format!("detail_j{dj}_n{n}.csv")), d)?;
        }
    }
    fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}

fn manifest_map(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    Ok(map)
}

fn manifest_get<T: std::str::FromStr>(
    map: &BTreeMap<String, String>,
    key: &str,
    path: &Path,
) -> Result<T> {
    map.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: format!("missing or malformed key {key}"),
        })
}

/// Reads a decomposition directory back, rebinding sequences to the
/// layout's rules (specs must match the manifest).
pub fn read_decomposition(
    dir: impl AsRef<Path>,
    layout: &LevelLayout,
) -> Result<FrameletDecomposition> {
    let dir = dir.as_ref();
    let manifest = manifest_map(&dir.join("manifest.txt"))?;
    let j0: u32 = manifest_get(&manifest, "j0", dir)?;
    let j_max: u32 = manifest_get(&manifest, "j", dir)?;
    let channels: usize = manifest_get(&manifest, "channels", dir)?;
    let bank_name: String = manifest_get(&manifest, "bank", dir)?;

    let bind = |file: crate::sht::SequenceFile, j: u32| -> Result<CoefficientSequence> {
        let level = layout.level(j)?;
        if level.rule.spec() != file.rule_spec {
            return Err(Error::ShapeMismatch(format!(
                "level {j}: layout rule {} but file was written on {}",
                level.rule.spec(),
                file.rule_spec
            )));
        }
        CoefficientSequence::new(j, level.rule.clone(), file.values)
    };

    let low_file = read_sequence(dir.join("lowpass.csv"))?;
    let lowpass = bind(low_file, j0)?;
    let mut details = Vec::new();
    for dj in j0..j_max {
        let mut per_scale = Vec::with_capacity(channels);
        for n in 1..=channels {
            let f = read_sequence(dir.join(format!("detail_j{dj}_n{n}.csv")))?;
            per_scale.push(bind(f, dj + 1)?);
        }
        details.push(per_scale);
    }
    Ok(FrameletDecomposition {
        j0,
        j_max,
        bank_name,
        lowpass,
        details,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::paper_bank_s2;
    use crate::sht::HarmonicIndex;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_sequence(layout: &LevelLayout, j: u32, seed: u64) -> CoefficientSequence {
        let level = layout.level(j).unwrap();
        let mut rng = StdRng::seed_from_u64(seed);
        let dim = level.bandlimit * level.bandlimit;
        let values = (0..dim)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let coeffs = HarmonicCoefficients::from_values(level.bandlimit, values).unwrap();
        let v = level.plan.synth(&coeffs).unwrap();
        CoefficientSequence::new(j, level.rule.clone(), v)
            .unwrap()
            .with_fourier(coeffs)
            .unwrap()
    }

    fn constant_sequence(layout: &LevelLayout, j: u32) -> CoefficientSequence {
        let level = layout.level(j).unwrap();
        let mut coeffs = HarmonicCoefficients::zeros(level.bandlimit);
        coeffs.set(
            HarmonicIndex::new(0, 0).unwrap(),
            Complex64::new(1.0, 0.0),
        );
        let v = level.plan.synth(&coeffs).unwrap();
        CoefficientSequence::new(j, level.rule.clone(), v)
            .unwrap()
            .with_fourier(coeffs)
            .unwrap()
    }

    fn max_dev(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn convolve_with_identity_symbol() {
        let layout = LevelLayout::gauss_legendre(4, 5).unwrap();
        let seq = random_sequence(&layout, 5, 1);
        let one = SymbolProfile::new("one", (0.0, f64::INFINITY), "C", false, |_| 1.0);
        let out = convolve(&layout, &seq, &one, false).unwrap();
        assert!(max_dev(out.values(), seq.values()) <= 1e-12 * seq.norm());
    }

    #[test]
    fn convolve_with_lowpass_is_identity_below_the_plateau() {
        let layout = LevelLayout::gauss_legendre(4, 5).unwrap();
        let level = layout.level(5).unwrap();
        // content with lambda_l / 2^5 < 1/8, i.e. l <= 3
        let mut coeffs = HarmonicCoefficients::zeros(level.bandlimit);
        for l in 0..4usize {
            for m in -(l as i64)..=(l as i64) {
                coeffs.set(
                    HarmonicIndex::new(l, m).unwrap(),
                    Complex64::new(0.3 + l as f64, m as f64),
                );
            }
        }
        let v = level.plan.synth(&coeffs).unwrap();
        let seq = CoefficientSequence::new(5, level.rule.clone(), v)
            .unwrap()
            .with_fourier(coeffs)
            .unwrap();
        let bank = paper_bank_s2();
        let out = convolve(&layout, &seq, &bank.lowpass, true).unwrap();
        assert!(max_dev(out.values(), seq.values()) <= 1e-12 * seq.norm());
    }

    #[test]
    fn convolve_multiplies_in_the_frequency_domain() {
        let layout = LevelLayout::gauss_legendre(4, 5).unwrap();
        let seq = random_sequence(&layout, 5, 2);
        let bank = paper_bank_s2();
        let out = convolve(&layout, &seq, &bank.lowpass, true).unwrap();
        let got = out.fourier().unwrap();
        let src = seq.fourier().unwrap();
        let scale = f64::powi(2.0, 5);
        for l in 0..src.bandlimit() {
            let s = bank.lowpass.eval(eigenvalue(l) / scale);
            for m in -(l as i64)..=(l as i64) {
                let idx = HarmonicIndex::new(l, m).unwrap();
                let want = src.get(idx) * s;
                assert_abs_diff_eq!(got.get(idx).re, want.re, epsilon = 1e-12);
                assert_abs_diff_eq!(got.get(idx).im, want.im, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn downsample_constant_lands_on_coarse_weights() {
        let layout = LevelLayout::gauss_legendre(3, 4).unwrap();
        let seq = constant_sequence(&layout, 4);
        let (down, stats) = downsample(&layout, &seq).unwrap();
        assert_eq!(down.level(), 3);
        assert!(!stats.warning);
        for (v, w) in down.values().iter().zip(down.rule().weights()) {
            assert_abs_diff_eq!(v.re, w.sqrt(), epsilon = 1e-13);
        }
    }

    #[test]
    fn downsample_after_upsample_is_identity() {
        let layout = LevelLayout::gauss_legendre(3, 4).unwrap();
        let seq = random_sequence(&layout, 3, 5);
        let up = upsample(&layout, &seq).unwrap();
        let (down, stats) = downsample(&layout, &up).unwrap();
        assert!(stats.truncated_ratio <= 1e-12);
        assert!(max_dev(down.values(), seq.values()) <= 1e-12 * seq.norm());
        // norm preserved on certified rules for band-limited content
        assert_abs_diff_eq!(up.norm(), seq.norm(), epsilon = 1e-10 * seq.norm());
    }

    #[test]
    fn upsample_zero_and_coefficient_preservation() {
        let layout = LevelLayout::gauss_legendre(3, 4).unwrap();
        let level = layout.level(3).unwrap();
        let zero = CoefficientSequence::new(
            3,
            level.rule.clone(),
            vec![Complex64::default(); level.rule.node_count()],
        )
        .unwrap();
        let up = upsample(&layout, &zero).unwrap();
        assert!(up.values().iter().all(|z| z.norm() == 0.0));

        let seq = random_sequence(&layout, 3, 9);
        let up = upsample(&layout, &seq).unwrap();
        let uc = up.fourier().unwrap();
        let sc = seq.fourier().unwrap();
        for (i, v) in sc.values().iter().enumerate() {
            assert_abs_diff_eq!(uc.values()[i].re, v.re, epsilon = 1e-14);
            assert_abs_diff_eq!(uc.values()[i].im, v.im, epsilon = 1e-14);
        }
    }

    #[test]
    fn one_level_constant_passthrough() {
        let layout = LevelLayout::gauss_legendre(3, 4).unwrap();
        let bank = paper_bank_s2();
        let seq = constant_sequence(&layout, 4);
        let one = decompose_one(&layout, &seq, &bank).unwrap();
        for d in &one.details {
            assert!(d.norm() <= 1e-13);
        }
        for (v, w) in one.coarse.values().iter().zip(one.coarse.rule().weights()) {
            assert_abs_diff_eq!(v.re, w.sqrt(), epsilon = 1e-13);
        }
    }

    #[test]
    fn one_level_energy_split_and_roundtrip() {
        let layout = LevelLayout::gauss_legendre(4, 5).unwrap();
        let bank = paper_bank_s2();
        let seq = random_sequence(&layout, 5, 33);
        let one = decompose_one(&layout, &seq, &bank).unwrap();
        let total = one.coarse.norm().powi(2)
            + one.details.iter().map(|d| d.norm().powi(2)).sum::<f64>();
        let want = seq.norm().powi(2);
        assert_abs_diff_eq!(total, want, epsilon = 1e-10 * want);

        let back = reconstruct_one(&layout, &one.coarse, &one.details, &bank).unwrap();
        assert!(max_dev(back.values(), seq.values()) <= 1e-10 * seq.norm());
    }

    #[test]
    fn one_level_single_harmonic_propagation() {
        let layout = LevelLayout::gauss_legendre(4, 5).unwrap();
        let level = layout.level(5).unwrap();
        let bank = paper_bank_s2();
        // l = 5 sits in the low-pass transition band at level 5 and inside
        // the coarse bandlimit 8; l = 9 is pure high-pass territory.
        let low = HarmonicIndex::new(5, -4).unwrap();
        let high = HarmonicIndex::new(9, 2).unwrap();
        let mut coeffs = HarmonicCoefficients::zeros(level.bandlimit);
        coeffs.set(low, Complex64::new(1.0, 0.0));
        coeffs.set(high, Complex64::new(0.0, 1.0));
        let v = level.plan.synth(&coeffs).unwrap();
        let seq = CoefficientSequence::new(5, level.rule.clone(), v)
            .unwrap()
            .with_fourier(coeffs)
            .unwrap();
        let one = decompose_one(&layout, &seq, &bank).unwrap();
        let xi_low = eigenvalue(5) / 32.0;
        let xi_high = eigenvalue(9) / 32.0;
        assert!(bank.lowpass.eval(xi_low) > 0.0);
        assert_eq!(bank.lowpass.eval(xi_high), 0.0);
        let cc = one.coarse.fourier().unwrap().get(low);
        assert_abs_diff_eq!(cc.re, bank.lowpass.eval(xi_low), epsilon = 1e-12);
        for (n, d) in one.details.iter().enumerate() {
            let got_low = d.fourier().unwrap().get(low);
            assert_abs_diff_eq!(got_low.re, bank.highpass[n].eval(xi_low), epsilon = 1e-12);
            let got_high = d.fourier().unwrap().get(high);
            assert_abs_diff_eq!(got_high.im, bank.highpass[n].eval(xi_high), epsilon = 1e-12);
        }
    }

    #[test]
    fn multi_level_matches_iterated_one_level() {
        let layout = LevelLayout::gauss_legendre(4, 5).unwrap();
        let bank = paper_bank_s2();
        let seq = random_sequence(&layout, 5, 77);
        let dec = decompose(&layout, &seq, &bank, 4).unwrap();
        let one = decompose_one(&layout, &seq, &bank).unwrap();
        assert!(max_dev(dec.lowpass.values(), one.coarse.values()) <= 1e-12);
        for n in 1..=bank.channels() {
            assert!(
                max_dev(
                    dec.detail(4, n).unwrap().values(),
                    one.details[n - 1].values()
                ) <= 1e-12
            );
        }
    }

    #[test]
    fn multi_level_roundtrip_and_linearity() {
        let layout = LevelLayout::gauss_legendre(3, 5).unwrap();
        let bank = paper_bank_s2();
        let u = random_sequence(&layout, 5, 101);
        let v = random_sequence(&layout, 5, 102);

        let du = decompose(&layout, &u, &bank, 3).unwrap();
        let back = reconstruct(&layout, &du, &bank).unwrap();
        assert!(max_dev(back.values(), u.values()) <= 1e-10 * u.norm());

        // linearity: decompose(2u - v) = 2 dec(u) - dec(v) componentwise
        let level = layout.level(5).unwrap();
        let mix: Vec<Complex64> = u
            .values()
            .iter()
            .zip(v.values())
            .map(|(a, b)| 2.0 * a - b)
            .collect();
        let mixc = HarmonicCoefficients::from_values(
            level.bandlimit,
            u.fourier()
                .unwrap()
                .values()
                .iter()
                .zip(v.fourier().unwrap().values())
                .map(|(a, b)| 2.0 * a - b)
                .collect(),
        )
        .unwrap();
        let mix_seq = CoefficientSequence::new(5, level.rule.clone(), mix)
            .unwrap()
            .with_fourier(mixc)
            .unwrap();
        let dm = decompose(&layout, &mix_seq, &bank, 3).unwrap();
        let dv = decompose(&layout, &v, &bank, 3).unwrap();
        let combo: Vec<Complex64> = du
            .lowpass
            .values()
            .iter()
            .zip(dv.lowpass.values())
            .map(|(a, b)| 2.0 * a - b)
            .collect();
        assert!(max_dev(dm.lowpass.values(), &combo) <= 1e-12 * mix_seq.norm());
        for dj in 3..5u32 {
            for n in 1..=2 {
                let combo: Vec<Complex64> = du
                    .detail(dj, n)
                    .unwrap()
                    .values()
                    .iter()
                    .zip(dv.detail(dj, n).unwrap().values())
                    .map(|(a, b)| 2.0 * a - b)
                    .collect();
                assert!(
                    max_dev(dm.detail(dj, n).unwrap().values(), &combo)
                        <= 1e-12 * mix_seq.norm()
                );
            }
        }
    }

    #[test]
    fn redundancy_count_is_exact() {
        let layout = LevelLayout::gauss_legendre(3, 6).unwrap();
        let bank = paper_bank_s2();
        let seq = random_sequence(&layout, 6, 8);
        let dec = decompose(&layout, &seq, &bank, 3).unwrap();
        let want: usize = layout.level(3).unwrap().rule.node_count()
            + (4..=6u32)
                .map(|j| 2 * layout.level(j).unwrap().rule.node_count())
                .sum::<usize>();
        assert_eq!(dec.total_output_len(), want);
    }

    #[test]
    fn details_vanish_for_deeply_bandlimited_input() {
        let layout = LevelLayout::gauss_legendre(4, 5).unwrap();
        let level = layout.level(5).unwrap();
        let bank = paper_bank_s2();
        // content with lambda_l / 2^5 < 1/8 is untouched by every high-pass
        let mut coeffs = HarmonicCoefficients::zeros(level.bandlimit);
        for l in 0..4usize {
            coeffs.set(
                HarmonicIndex::new(l, 0).unwrap(),
                Complex64::new(1.0, -0.5),
            );
        }
        let v = level.plan.synth(&coeffs).unwrap();
        let seq = CoefficientSequence::new(5, level.rule.clone(), v)
            .unwrap()
            .with_fourier(coeffs)
            .unwrap();
        let dec = decompose(&layout, &seq, &bank, 4).unwrap();
        for d in dec.all_details() {
            assert!(d.norm() <= 1e-12, "detail norm {}", d.norm());
        }
    }

    #[test]
    fn thresholding_error_is_bounded_by_zeroed_mass() {
        let layout = LevelLayout::gauss_legendre(3, 5).unwrap();
        let bank = paper_bank_s2();
        let seq = random_sequence(&layout, 5, 55);
        let mut dec = decompose(&layout, &seq, &bank, 3).unwrap();
        let mut zeroed_sq = 0.0;
        for d in dec.all_details_mut() {
            let vals = d.values().to_vec();
            let mut new_vals = vals.clone();
            for (i, v) in vals.iter().enumerate() {
                if i % 3 == 0 {
                    zeroed_sq += v.norm_sqr();
                    new_vals[i] = Complex64::default();
                }
            }
            *d = CoefficientSequence::new(d.level(), d.rule().clone(), new_vals).unwrap();
        }
        let back = reconstruct(&layout, &dec, &bank).unwrap();
        let err: f64 = back
            .values()
            .iter()
            .zip(seq.values())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(
            err <= zeroed_sq.sqrt() * (1.0 + 1e-9),
            "err {err} vs zeroed {}",
            zeroed_sq.sqrt()
        );
    }

    #[test]
    fn non_exact_layout_reports_least_squares_stages() {
        let layout = LevelLayout::spiral_quartering(3, 4, 2048).unwrap();
        assert!(!layout.level(4).unwrap().certified);
        let bank = paper_bank_s2();
        let level = layout.level(4).unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        let raw: Vec<Complex64> = (0..level.rule.node_count())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), 0.0))
            .collect();
        let seq = CoefficientSequence::new(4, level.rule.clone(), raw).unwrap();
        let (dec, report) =
            decompose_with_report(&layout, &seq, &bank, 3, &CgOptions::default()).unwrap();
        let initial = report.initial.unwrap();
        assert_eq!(initial.method, InverseMethod::LeastSquares);
        assert!(initial.iterations > 0);
        assert!(initial.relative_residual > 0.0); // raw noise is not band-limited

        let (_, rec_report) =
            reconstruct_with_report(&layout, &dec, &bank, &CgOptions::default()).unwrap();
        // cached coefficients flow through; nothing is silently adjointed
        assert!(rec_report
            .inversions
            .iter()
            .all(|s| s.method == InverseMethod::Cached));
    }

    #[test]
    fn decomposition_directory_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let layout = LevelLayout::gauss_legendre(4, 6).unwrap();
        let bank = paper_bank_s2();
        let seq = random_sequence(&layout, 6, 4);
        let dec = decompose(&layout, &seq, &bank, 4).unwrap();
        let path = dir.path().join("dec");
        write_decomposition(&path, &dec).unwrap();

        let names: Vec<String> = fs::read_dir(&path)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert!(names.contains(&"lowpass.csv".to_string()));
        assert!(names.contains(&"detail_j4_n1.csv".to_string()));
        assert!(names.contains(&"detail_j5_n2.csv".to_string()));
        assert!(names.contains(&"manifest.txt".to_string()));
        assert_eq!(names.len(), 2 + 4); // 1 lowpass + 2 scales x 2 channels + manifest

        let back = read_decomposition(&path, &layout).unwrap();
        assert_eq!(back.j0, 4);
        assert_eq!(back.j_max, 6);
        assert_eq!(back.bank_name, "paper");
        assert_eq!(back.lowpass.values(), dec.lowpass.values());
        for dj in 4..6u32 {
            for n in 1..=2 {
                assert_eq!(
                    back.detail(dj, n).unwrap().values(),
                    dec.detail(dj, n).unwrap().values()
                );
            }
        }
        let rec = reconstruct(&layout, &back, &bank).unwrap();
        assert!(max_dev(rec.values(), seq.values()) <= 1e-10 * seq.norm());
    }

    #[test]
    fn layout_guards() {
        assert!(LevelLayout::gauss_legendre(0, 3).is_err());
        // level 5 needs 256 coefficients; a 64-node rule cannot carry them
        let small = Arc::new(gauss_legendre_rule(8).unwrap());
        assert!(LevelLayout::from_rules(5, vec![small]).is_err());

        let layout = LevelLayout::gauss_legendre(3, 4).unwrap();
        assert!(layout.level(2).is_err());
        assert!(layout.level(5).is_err());
        let seq = constant_sequence(&layout, 4);
        assert!(decompose(&layout, &seq, &paper_bank_s2(), 4).is_err());
    }
}
