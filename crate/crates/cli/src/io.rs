//! Flag parsing helpers and the plain `k,value` CSV format.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};

use framelet_core::filterbank::{example_banks, paper_bank_s2, FilterBank};
use framelet_core::fmt::LevelLayout;
use framelet_core::quadrature::{
    gauss_legendre_rule, load_pointset, spiral_rule, QuadratureRule, WeightMode,
};

/// `J0:J` level range.
#[derive(Debug, Clone, Copy)]
pub struct LevelRange {
    pub j0: u32,
    pub j: u32,
}

pub fn parse_levels(s: &str) -> Result<LevelRange> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("levels must be J0:J, e.g. 4:7"))?;
    let j0: u32 = a.parse().context("bad J0")?;
    let j: u32 = b.parse().context("bad J")?;
    if j0 < 1 || j0 >= j {
        bail!("levels need 1 <= J0 < J, got {j0}:{j}");
    }
    Ok(LevelRange { j0, j })
}

/// Builds a rule from a `gl:<degree>`, `sp:<count>` or `file:<path>` spec.
/// Point-set files use the fourth column as weights when present on the
/// first data line, equal weights otherwise.
pub fn rule_from_spec(spec: &str) -> Result<QuadratureRule> {
    if let Some(d) = spec.strip_prefix("gl:") {
        let degree: usize = d.parse().with_context(|| format!("bad GL degree in {spec}"))?;
        return Ok(gauss_legendre_rule(degree)?);
    }
    if let Some(n) = spec.strip_prefix("sp:") {
        let count: usize = n.parse().with_context(|| format!("bad SP count in {spec}"))?;
        return Ok(spiral_rule(count)?);
    }
    if let Some(path) = spec.strip_prefix("file:") {
        let text = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
        let cols = text
            .lines()
            .find(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .map(|l| l.split_whitespace().count())
            .unwrap_or(0);
        let mode = if cols == 4 {
            WeightMode::FromFile
        } else {
            WeightMode::Equal
        };
        return Ok(load_pointset(path, mode)?);
    }
    bail!("rule spec must be gl:<degree>, sp:<count> or file:<path>, got {spec:?}")
}

/// Layout over `levels` whose finest rule comes from `spec`. Coarser GL
/// levels halve the degree, coarser SP levels quarter the count; a file
/// rule at the top is backed by default `gl:2^j` rules below.
pub fn layout_from_spec(levels: LevelRange, spec: Option<&str>) -> Result<LevelLayout> {
    let LevelRange { j0, j } = levels;
    match spec {
        None => Ok(LevelLayout::gauss_legendre(j0, j)?),
        Some(s) if s.starts_with("gl:") => {
            let degree: usize = s[3..].parse().context("bad GL degree")?;
            Ok(LevelLayout::gauss_legendre_halving(j0, j, degree)?)
        }
        Some(s) if s.starts_with("sp:") => {
            let count: usize = s[3..].parse().context("bad SP count")?;
            Ok(LevelLayout::spiral_quartering(j0, j, count)?)
        }
        Some(s) if s.starts_with("file:") => {
            let mut rules: Vec<Arc<QuadratureRule>> = (j0..j)
                .map(|jj| Ok(Arc::new(gauss_legendre_rule(1usize << jj)?)))
                .collect::<Result<_>>()?;
            rules.push(Arc::new(rule_from_spec(s)?));
            Ok(LevelLayout::from_rules(j0, rules)?)
        }
        Some(s) => bail!("unsupported rule spec {s:?}"),
    }
}

pub fn bank_by_name(name: &str) -> Result<FilterBank> {
    Ok(match name {
        "paper" => paper_bank_s2(),
        "eta1" => example_banks()?.eta1,
        "eta2" => example_banks()?.eta2,
        "eta3" => example_banks()?.eta3,
        other => bail!("unknown bank {other:?} (expected paper|eta1|eta2|eta3)"),
    })
}

/// Writes the `k,value` CSV of real node values.
pub fn write_values(path: &Path, values: &[f64]) -> Result<()> {
    let mut out = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    writeln!(out, "k,value")?;
    for (k, v) in values.iter().enumerate() {
        writeln!(out, "{k},{v}")?;
    }
    Ok(())
}

/// Reads a `k,value` CSV.
pub fn read_values(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with("k,") {
            continue;
        }
        let (_, v) = t
            .split_once(',')
            .ok_or_else(|| anyhow!("{}:{}: expected k,value", path.display(), i + 1))?;
        values.push(
            v.trim()
                .parse::<f64>()
                .with_context(|| format!("{}:{}: bad value", path.display(), i + 1))?,
        );
    }
    if values.is_empty() {
        bail!("{}: no values", path.display());
    }
    Ok(values)
}
