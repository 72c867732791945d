use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use num_complex::Complex64;

use framelet_core::filterbank::{validate_partition_limit, validate_uep};
use framelet_core::fmt::{
    decompose_with_report, read_decomposition, reconstruct, write_decomposition, LevelLayout,
};
use framelet_core::kernels::{eval_framelet, FrameletKind};
use framelet_core::quadrature::{verify_exactness, QuadratureRule, SphericalPoint, VerifyOptions};
use framelet_core::sht::{
    eigenvalue, project, CgOptions, HarmonicCoefficients, HarmonicIndex, TransformPlan,
};
use framelet_core::signals::{
    add_noise, denoise, snr, standard_normal_samples, test_function, test_function_original,
};

use crate::io::{
    bank_by_name, layout_from_spec, read_values, rule_from_spec, write_values, LevelRange,
};

fn weighted(values: &[f64], rule: &QuadratureRule) -> Vec<Complex64> {
    values
        .iter()
        .zip(rule.weights())
        .map(|(v, w)| Complex64::new(v * w.sqrt(), 0.0))
        .collect()
}

fn unweighted(values: &[Complex64], rule: &QuadratureRule) -> Vec<f64> {
    values
        .iter()
        .zip(rule.weights())
        .map(|(v, w)| v.re / w.sqrt())
        .collect()
}

pub struct SignalOpts {
    pub rule: String,
    pub wendland: usize,
    pub original_profile: bool,
    pub texture_amp: f64,
    pub texture_seed: u64,
    pub texture_band: usize,
    pub out: PathBuf,
}

pub fn gen_signal(opts: &SignalOpts) -> Result<()> {
    let rule = Arc::new(rule_from_spec(&opts.rule)?);
    let mut values: Vec<f64> = rule
        .points()
        .iter()
        .map(|p| {
            if opts.original_profile {
                test_function_original(opts.wendland, p)
            } else {
                test_function(opts.wendland, p)
            }
        })
        .collect();
    if opts.texture_amp > 0.0 {
        // band-limited random texture on degrees [band/2, band)
        let band = opts.texture_band;
        if band * band > rule.node_count() {
            bail!(
                "texture bandlimit {band} needs {} nodes, rule has {}",
                band * band,
                rule.node_count()
            );
        }
        let mut coeffs = HarmonicCoefficients::zeros(band);
        let draws = standard_normal_samples(2 * band * band, opts.texture_seed);
        let mut it = draws.into_iter();
        for l in band / 2..band {
            let damp = opts.texture_amp / (l + 1) as f64;
            for m in -(l as i64)..=(l as i64) {
                let c = Complex64::new(it.next().unwrap(), it.next().unwrap()) * damp;
                coeffs.set(HarmonicIndex::new(l, m)?, c);
            }
        }
        let plan = TransformPlan::new(rule.clone(), band);
        let texture = plan.synth(&coeffs)?;
        for ((v, t), w) in values.iter_mut().zip(&texture).zip(rule.weights()) {
            *v += t.re / w.sqrt();
        }
    }
    write_values(&opts.out, &values)?;
    println!(
        "wrote {} values of f_{}{} on {} to {}",
        values.len(),
        opts.wendland,
        if opts.texture_amp > 0.0 { " + texture" } else { "" },
        rule.spec(),
        opts.out.display()
    );
    Ok(())
}

pub struct DecomposeOpts {
    pub input: PathBuf,
    pub levels: LevelRange,
    pub rule: Option<String>,
    pub bank: String,
    pub out: PathBuf,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

pub fn cmd_decompose(opts: &DecomposeOpts) -> Result<()> {
    let layout = layout_from_spec(opts.levels, opts.rule.as_deref())?;
    let bank = bank_by_name(&opts.bank)?;
    let values = read_values(&opts.input)?;
    let top = layout.level(opts.levels.j)?;
    if values.len() != top.rule.node_count() {
        return Err(framelet_core::Error::ShapeMismatch(format!(
            "{}: {} values but rule {} has {} nodes",
            opts.input.display(),
            values.len(),
            top.rule.spec(),
            top.rule.node_count()
        ))
        .into());
    }
    let cg = CgOptions {
        tol: opts.cg_tol,
        max_iter: opts.cg_max_iter,
    };
    let raw = weighted(&values, &top.rule);
    let proj = project(&raw, &top.plan, &cg)?;
    let residual_values = unweighted(&proj.residual, &top.rule);
    let seq = framelet_core::sht::CoefficientSequence::new(
        opts.levels.j,
        top.rule.clone(),
        proj.values.clone(),
    )?
    .with_fourier(proj.coefficients.clone())?;
    let (dec, report) = decompose_with_report(&layout, &seq, &bank, opts.levels.j0, &cg)?;

    write_decomposition(&opts.out, &dec)?;
    write_values(&opts.out.join("residual.csv"), &residual_values)?;
    let res_norm = proj.residual.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let raw_norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut rpt = String::new();
    rpt.push_str(&format!("input={}\n", opts.input.display()));
    rpt.push_str(&format!("bank={}\n", bank.name));
    rpt.push_str(&format!("projection_iterations={}\n", proj.iterations));
    rpt.push_str(&format!(
        "projection_relative_residual={}\n",
        if raw_norm > 0.0 { res_norm / raw_norm } else { 0.0 }
    ));
    for t in &report.truncation {
        rpt.push_str(&format!(
            "truncation_j{}={}{}\n",
            t.j,
            t.truncated_ratio,
            if t.warning { " WARNING" } else { "" }
        ));
    }
    fs::write(opts.out.join("report.txt"), rpt)?;
    println!(
        "decomposed {} into {} (levels {}..{}, {} channels, projection residual {:.3e})",
        opts.input.display(),
        opts.out.display(),
        opts.levels.j0,
        opts.levels.j,
        bank.channels(),
        if raw_norm > 0.0 { res_norm / raw_norm } else { 0.0 },
    );
    Ok(())
}

fn manifest_map(dir: &Path) -> Result<BTreeMap<String, String>> {
    let path = dir.join("manifest.txt");
    let text =
        fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect())
}

pub fn cmd_reconstruct(input: &Path, out: &Path, skip_residual: bool) -> Result<()> {
    let manifest = manifest_map(input)?;
    let get = |k: &str| {
        manifest
            .get(k)
            .ok_or_else(|| anyhow!("manifest.txt: missing key {k}"))
    };
    let j0: u32 = get("j0")?.parse()?;
    let j: u32 = get("j")?.parse()?;
    let bank = bank_by_name(get("bank")?)?;
    let rules = (j0..=j)
        .map(|jj| Ok(Arc::new(rule_from_spec(get(&format!("rule_j{jj}"))?)?)))
        .collect::<Result<Vec<_>>>()?;
    let layout = LevelLayout::from_rules(j0, rules)?;
    let dec = read_decomposition(input, &layout)?;
    let top = layout.level(j)?;
    let seq = reconstruct(&layout, &dec, &bank)?;
    let mut values = unweighted(seq.values(), &top.rule);
    let residual_path = input.join("residual.csv");
    if !skip_residual && residual_path.exists() {
        let residual = read_values(&residual_path)?;
        if residual.len() != values.len() {
            return Err(framelet_core::Error::ShapeMismatch(format!(
                "residual.csv has {} values, reconstruction {}",
                residual.len(),
                values.len()
            ))
            .into());
        }
        for (v, r) in values.iter_mut().zip(&residual) {
            *v += r;
        }
    }
    write_values(out, &values)?;
    println!(
        "reconstructed {} values from {} to {}",
        values.len(),
        input.display(),
        out.display()
    );
    Ok(())
}

pub struct DenoiseOpts {
    pub theta: f64,
    pub seed: u64,
    pub bank: String,
    pub levels: LevelRange,
    pub rule: Option<String>,
    pub out: PathBuf,
    pub input: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub wendland: usize,
}

pub fn cmd_denoise(opts: &DenoiseOpts) -> Result<()> {
    let layout = layout_from_spec(opts.levels, opts.rule.as_deref())?;
    let bank = bank_by_name(&opts.bank)?;
    let rule = layout.level(opts.levels.j)?.rule.clone();

    let (noisy, reference, sigma) = match &opts.input {
        Some(path) => {
            let noisy = read_values(path)?;
            if noisy.len() != rule.node_count() {
                return Err(framelet_core::Error::ShapeMismatch(format!(
                    "{}: {} values but rule {} has {} nodes",
                    path.display(),
                    noisy.len(),
                    rule.spec(),
                    rule.node_count()
                ))
                .into());
            }
            let reference = opts.reference.as_deref().map(read_values).transpose()?;
            // threshold scale: the clean maximum when a reference is given,
            // the noisy maximum otherwise
            let base = reference.as_deref().unwrap_or(&noisy);
            let sigma = opts.theta * base.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (noisy, reference, sigma)
        }
        None => {
            let clean: Vec<f64> = rule
                .points()
                .iter()
                .map(|p| test_function_original(opts.wendland, p))
                .collect();
            let (noisy, sigma) = add_noise(&clean, opts.theta, opts.seed);
            (noisy, Some(clean), sigma)
        }
    };

    let (restored, report) = denoise(&noisy, &layout, &bank, sigma, reference.as_deref())?;

    fs::create_dir_all(&opts.out)?;
    write_values(&opts.out.join("restored.csv"), &restored)?;
    write_values(&opts.out.join("noisy.csv"), &noisy)?;
    let mut rpt = String::new();
    rpt.push_str(&format!("bank={}\n", bank.name));
    rpt.push_str(&format!("theta={}\n", opts.theta));
    rpt.push_str(&format!("seed={}\n", opts.seed));
    rpt.push_str(&format!("sigma={}\n", sigma));
    if let Some(r) = &reference {
        rpt.push_str(&format!("snr_noisy_db={}\n", snr(r, &noisy)));
    }
    if let Some(s) = report.snr_restored {
        rpt.push_str(&format!("snr_restored_db={}\n", s));
    }
    for k in &report.kills {
        rpt.push_str(&format!(
            "killed_j{}_n{}={}/{}\n",
            k.dj, k.channel, k.killed, k.total
        ));
    }
    fs::write(opts.out.join("report.txt"), rpt)?;

    match (reference.as_deref().map(|r| snr(r, &noisy)), report.snr_restored) {
        (Some(before), Some(after)) => println!(
            "denoised with {} at theta={}: SNR {:.2} dB -> {:.2} dB (sigma {:.4}), wrote {}",
            bank.name,
            opts.theta,
            before,
            after,
            sigma,
            opts.out.display()
        ),
        _ => println!(
            "denoised with {} at theta={} (sigma {:.4}), wrote {}",
            bank.name,
            opts.theta,
            sigma,
            opts.out.display()
        ),
    }
    Ok(())
}

pub fn cmd_approx_error(
    rule_spec: &str,
    bandlimit: usize,
    wendland_sel: &str,
    out: Option<&Path>,
) -> Result<()> {
    let rule = Arc::new(rule_from_spec(rule_spec)?);
    if bandlimit * bandlimit > rule.node_count() {
        return Err(framelet_core::Error::ShapeMismatch(format!(
            "bandlimit {bandlimit} needs {} nodes, rule {} has {}",
            bandlimit * bandlimit,
            rule.spec(),
            rule.node_count()
        ))
        .into());
    }
    let indices: Vec<usize> = if wendland_sel == "all" {
        (0..=4).collect()
    } else {
        vec![wendland_sel.parse().context("bad --wendland")?]
    };
    let plan = TransformPlan::new(rule.clone(), bandlimit);
    let mut lines = vec!["n,relative_error".to_string()];
    println!("# relative projection error on {} at bandlimit {bandlimit}", rule.spec());
    for n in indices {
        let raw: Vec<Complex64> = rule
            .points()
            .iter()
            .zip(rule.weights())
            .map(|(p, w)| Complex64::new(test_function(n, p) * w.sqrt(), 0.0))
            .collect();
        let coeffs = plan.adjoint(&raw)?;
        let fitted = plan.synth(&coeffs)?;
        let num: f64 = raw
            .iter()
            .zip(&fitted)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let den: f64 = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let err = num / den;
        println!("f_{n}: {err:.4e}");
        lines.push(format!("{n},{err}"));
    }
    if let Some(path) = out {
        fs::write(path, lines.join("\n") + "\n")?;
    }
    Ok(())
}

fn time_per_call(mut op: impl FnMut()) -> f64 {
    let mut reps = 1usize;
    loop {
        let start = Instant::now();
        for _ in 0..reps {
            op();
        }
        let elapsed = start.elapsed().as_secs_f64();
        if elapsed >= 0.05 {
            return elapsed / reps as f64;
        }
        reps = (reps * 4).max(4);
    }
}

fn fit_exponent(sizes: &[f64], times: &[f64]) -> f64 {
    let n = sizes.len() as f64;
    let xs: Vec<f64> = sizes.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

pub fn cmd_bench(levels: LevelRange, bank_name: &str, out: Option<&Path>) -> Result<()> {
    let bank = bank_by_name(bank_name)?;
    let mut rows =
        vec!["J,N,t_decompose_s,t_reconstruct_s,t_stage_s,ratio_de,ratio_re,ratio_stage".to_string()];
    println!("J      N_J   t_de[s]    t_re[s]    t_stage[s]  ratio_de ratio_re ratio_stage");
    let mut sizes = Vec::new();
    let mut t_des = Vec::new();
    let mut t_res = Vec::new();
    let mut t_stages = Vec::new();
    for j in levels.j0..=levels.j {
        let depth = 2.min(j - 1);
        let layout = LevelLayout::gauss_legendre(j - depth, j)?;
        let level = layout.level(j)?;
        let dim = level.bandlimit * level.bandlimit;
        let draws = standard_normal_samples(2 * dim, 7 + j as u64);
        let coeffs = HarmonicCoefficients::from_values(
            level.bandlimit,
            draws
                .chunks(2)
                .map(|c| Complex64::new(c[0], c[1]))
                .collect(),
        )?;
        let values = level.plan.synth(&coeffs)?;
        let seq =
            framelet_core::sht::CoefficientSequence::new(j, level.rule.clone(), values)?
                .with_fourier(coeffs.clone())?;
        let dec = framelet_core::fmt::decompose(&layout, &seq, &bank, j - depth)?;

        let t_de = time_per_call(|| {
            let _ = framelet_core::fmt::decompose(&layout, &seq, &bank, j - depth).unwrap();
        });
        let t_re = time_per_call(|| {
            let _ = reconstruct(&layout, &dec, &bank).unwrap();
        });
        // the non-transform stage: pointwise symbol multiply on the level-j
        // coefficient array
        let scale = f64::powi(2.0, j as i32);
        let mut work = coeffs.clone();
        let t_stage = time_per_call(|| {
            let (mut l, mut next) = (0usize, 1usize);
            let mut s = bank.lowpass.eval(0.0);
            for (i, c) in work.values_mut().iter_mut().enumerate() {
                if i == next {
                    l += 1;
                    next += 2 * l + 1;
                    s = bank.lowpass.eval(eigenvalue(l) / scale);
                }
                *c *= s;
            }
            std::hint::black_box(&work);
        });
        let n = level.rule.node_count();
        let ratios = match (t_des.last(), t_res.last(), t_stages.last()) {
            (Some(&pd), Some(&pr), Some(&ps)) => (t_de / pd, t_re / pr, t_stage / ps),
            _ => (f64::NAN, f64::NAN, f64::NAN),
        };
        println!(
            "{j}  {n:>7}  {t_de:.3e}  {t_re:.3e}  {t_stage:.3e}   {:>6.2} {:>8.2} {:>8.2}",
            ratios.0, ratios.1, ratios.2
        );
        rows.push(format!(
            "{j},{n},{t_de},{t_re},{t_stage},{},{},{}",
            ratios.0, ratios.1, ratios.2
        ));
        sizes.push(n as f64);
        t_des.push(t_de);
        t_res.push(t_re);
        t_stages.push(t_stage);
    }
    if sizes.len() >= 2 {
        let total: Vec<f64> = t_des.iter().zip(&t_res).map(|(a, b)| a + b).collect();
        println!(
            "fitted scaling exponents: decompose {:.3}, reconstruct {:.3}, total {:.3}, pointwise stage {:.3}",
            fit_exponent(&sizes, &t_des),
            fit_exponent(&sizes, &t_res),
            fit_exponent(&sizes, &total),
            fit_exponent(&sizes, &t_stages)
        );
    }
    if let Some(path) = out {
        fs::write(path, rows.join("\n") + "\n")?;
    }
    Ok(())
}

/// Returns false when any validation fails (exit code 1).
pub fn cmd_validate(
    bank_name: &str,
    levels: LevelRange,
    rule_spec: Option<&str>,
    grid_step: f64,
    tol: f64,
    exactness_cap: usize,
) -> Result<bool> {
    let bank = bank_by_name(bank_name)?;
    let layout = layout_from_spec(levels, rule_spec)?;
    let mut ok = true;

    let uep = validate_uep(&bank, grid_step, tol);
    println!(
        "uep {}: max deviation {:.3e} over {} points",
        if uep.pass { "PASS" } else { "FAIL" },
        uep.max_deviation,
        uep.points_checked
    );
    if !uep.pass {
        println!("FAILED: sum-of-squares identity (uep) at xi = {:.6}", uep.worst_xi);
        return Ok(false);
    }

    let eigvals: Vec<f64> = (0..64).map(eigenvalue).collect();
    let partition = validate_partition_limit(&bank, 0..=10, &eigvals, tol);
    println!(
        "partition-limit {}: max deviation {:.3e}",
        if partition.pass { "PASS" } else { "FAIL" },
        partition.max_deviation
    );
    if !partition.pass {
        println!("FAILED: generator partition identity at xi = {:.6}", partition.worst_xi);
        return Ok(false);
    }

    for level in layout.levels() {
        let degree = (level.bandlimit).min(exactness_cap);
        let report = verify_exactness(&level.rule, degree, &VerifyOptions::default())?;
        println!(
            "exactness level {} ({} at degree {degree}) {}: max |U - delta| = {:.3e}",
            level.j,
            level.rule.spec(),
            if report.pass { "PASS" } else { "FAIL" },
            report.max_error
        );
        if !report.pass {
            println!(
                "FAILED: quadrature exactness at level {} (rule {})",
                level.j,
                level.rule.spec()
            );
            ok = false;
        }
    }
    Ok(ok)
}

pub fn cmd_emit_filter_curves(
    bank_name: &str,
    step: f64,
    max_xi: f64,
    out: &Path,
) -> Result<()> {
    let bank = bank_by_name(bank_name)?;
    let mut file = fs::File::create(out)?;
    let mut header = String::from("xi,a");
    for n in 1..=bank.channels() {
        header.push_str(&format!(",b{n}"));
    }
    header.push_str(",phi");
    for n in 1..=bank.channels() {
        header.push_str(&format!(",psi{n}"));
    }
    writeln!(file, "{header}")?;
    let steps = (max_xi / step).round() as usize;
    for k in 0..=steps {
        let xi = (k as f64 * step).min(max_xi);
        let mut row = format!("{xi},{}", bank.lowpass.eval(xi));
        for h in &bank.highpass {
            row.push_str(&format!(",{}", h.eval(xi)));
        }
        row.push_str(&format!(",{}", bank.scaling.eval(xi)));
        for psi in &bank.wavelets {
            row.push_str(&format!(",{}", psi.eval(xi)));
        }
        writeln!(file, "{row}")?;
    }
    println!("wrote {} curve samples to {}", steps + 1, out.display());
    Ok(())
}

pub struct EmitFrameletOpts {
    pub j: u32,
    pub kind: String,
    pub node_at: String,
    pub rule: Option<String>,
    pub samples: usize,
    pub out: PathBuf,
    pub grid: Option<usize>,
}

pub fn cmd_emit_framelet(opts: &EmitFrameletOpts) -> Result<()> {
    let bank = bank_by_name("paper")?;
    let kind = match opts.kind.as_str() {
        "a" => FrameletKind::Lowpass,
        s if s.starts_with('b') => {
            let n: usize = s[1..].parse().context("bad --kind (a|b1|b2)")?;
            FrameletKind::Highpass(n)
        }
        other => bail!("bad --kind {other:?} (expected a|b1|b2)"),
    };
    let levels = LevelRange {
        j0: opts.j,
        j: opts.j + 1,
    };
    let layout = layout_from_spec(levels, opts.rule.as_deref())?;
    let rule_level = match kind {
        FrameletKind::Lowpass => opts.j,
        FrameletKind::Highpass(_) => opts.j + 1,
    };
    let rule = layout.level(rule_level)?.rule.clone();
    let node = match opts.node_at.as_str() {
        "north" => rule
            .points()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cos_theta().total_cmp(&b.1.cos_theta()))
            .map(|(k, _)| k)
            .unwrap(),
        s => s
            .strip_prefix("k:")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| anyhow!("bad --node-at {s:?} (expected north or k:<index>)"))?,
    };
    let node_pt = rule.points()[node];

    let mut file = fs::File::create(&opts.out)?;
    writeln!(
        file,
        "# framelet kind={} j={} node={} theta_node={} phi_node={}",
        opts.kind,
        opts.j,
        node,
        node_pt.theta(),
        node_pt.phi()
    )?;
    writeln!(file, "theta,value")?;
    for i in 0..opts.samples {
        let theta = std::f64::consts::PI * i as f64 / (opts.samples - 1) as f64;
        let x = SphericalPoint::from_angles(theta, node_pt.phi())?;
        let v = eval_framelet(&layout, &bank, opts.j, node, kind, &x)?;
        writeln!(file, "{theta},{}", v.re)?;
    }
    println!(
        "wrote {}-sample profile of {} framelet at node {node} to {}",
        opts.samples,
        opts.kind,
        opts.out.display()
    );

    if let Some(res) = opts.grid {
        let grid_path = opts.out.with_extension("grid.csv");
        let mut gfile = fs::File::create(&grid_path)?;
        writeln!(gfile, "theta,phi,value")?;
        for i in 0..res {
            let theta = std::f64::consts::PI * (i as f64 + 0.5) / res as f64;
            for jj in 0..2 * res {
                let phi = std::f64::consts::TAU * jj as f64 / (2 * res) as f64;
                let x = SphericalPoint::from_angles(theta, phi)?;
                let v = eval_framelet(&layout, &bank, opts.j, node, kind, &x)?;
                writeln!(gfile, "{theta},{phi},{}", v.re)?;
            }
        }
        println!("wrote {}x{} grid to {}", res, 2 * res, grid_path.display());
    }
    Ok(())
}
