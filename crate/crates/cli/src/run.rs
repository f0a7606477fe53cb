use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use hosu_core::diagnostics::{run_experiment, DiagnosticsRecord};
use hosu_core::iterates::{cg_polak_ribiere, load_trace, synthetic_trace, trust_region_exact, IterateTrace};
use hosu_core::secant::{SkipPolicy, WeightRule};
use hosu_core::suites::orthogonal_step_directions;
use hosu_core::{Error, TestFunction};
use nalgebra::DVector;
use serde_json::json;

use crate::config::{load_function, load_initial, load_matrix, ExperimentConfig, IterateSpec, RuleSpec};

pub const CSV_HEADER: [&str; 8] = ["k", "x_err", "step_norm", "rel_frob_err", "dm_ratio", "proxy", "angle_deg", "skipped"];

/// Trace plus a note when CG stopped early in the line search.
fn build_trace(cfg: &ExperimentConfig, f: &dyn TestFunction) -> anyhow::Result<(IterateTrace, Option<String>)> {
    let n = f.dim();
    let x0 = match &cfg.x0 {
        Some(x) if x.len() != n => bail!("--x0 has {} components, {} expects {n}", x.len(), f.name()),
        Some(x) => DVector::from_vec(x.clone()),
        None if f.name() == "rosenbrock" => DVector::zeros(n),
        None => DVector::from_element(n, 0.25),
    };
    let result = match &cfg.iterates {
        IterateSpec::Cg => cg_polak_ribiere(f, &x0, cfg.gtol, cfg.max_iter),
        IterateSpec::TrustRegion => trust_region_exact(f, &x0, cfg.gtol.max(1e-12), cfg.max_iter),
        IterateSpec::Synthetic => {
            let x_star = f.minimizer().unwrap_or_else(|| x0.clone());
            let dirs = if n == 2 {
                orthogonal_step_directions(cfg.gamma)
            } else {
                (0..n).map(|i| DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })).collect()
            };
            synthetic_trace(&x_star, &dirs, cfg.gamma, cfg.steps, 1.0)
        }
        IterateSpec::File(path) => load_trace(path),
    };
    match result {
        Ok(trace) => Ok((trace, None)),
        Err(Error::LineSearch { iteration, partial }) => {
            let note = format!("line search stopped at iteration {iteration}; using {} points", partial.len());
            eprintln!("warning: {note}");
            Ok((*partial, Some(note)))
        }
        Err(e) => Err(anyhow::Error::from(e).context(format!("building the {:?} trace", cfg.iterates))),
    }
}

fn weight_rule(spec: &RuleSpec) -> anyhow::Result<WeightRule> {
    Ok(match spec {
        RuleSpec::Psb => WeightRule::Psb,
        RuleSpec::Dfp => WeightRule::Dfp,
        RuleSpec::Sr1 => WeightRule::Sr1Aligned,
        RuleSpec::Matrix(path) => WeightRule::ExplicitMatrix(load_matrix(path)?),
    })
}

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv(path: &Path, records: &[DiagnosticsRecord]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.k.to_string(),
            float(r.x_err),
            float(r.step_norm),
            float(r.rel_frob_err),
            float(r.dm_ratio),
            float(r.proxy),
            r.angle_deg.map(float).unwrap_or_default(),
            r.skipped.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn run(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let f = load_function(&cfg.function)?;
    if cfg.p < 2 || cfg.p > f.max_order() {
        bail!("--p {} is outside 2..={} for {}", cfg.p, f.max_order(), f.name());
    }
    let (trace, note) = build_trace(cfg, f.as_ref())?;
    if trace.len() < 2 {
        bail!("the {} trace has no steps", trace.provenance());
    }
    let rule = weight_rule(&cfg.rule)?;
    let c0 = load_initial(&cfg.c0, cfg.p, f.dim())?;
    let skip = if cfg.skip {
        SkipPolicy::Enabled {
            tau_rel: cfg.tau_rel,
            eps_mach: f64::EPSILON,
        }
    } else {
        SkipPolicy::Disabled
    };
    let exp = run_experiment(f.as_ref(), &trace, &rule, &c0, cfg.p, skip)?;
    write_csv(&cfg.out, &exp.records)?;

    let sidecar = json!({
        "config": cfg,
        "function": f.name(),
        "trace": {
            "provenance": trace.provenance().to_string(),
            "points": trace.len(),
            "note": note,
        },
        "x_star": exp.x_star.as_slice(),
        "final_approx": exp.final_approx,
        "c_star": exp.c_star,
        "skipped_updates": exp.records.iter().filter(|r| r.skipped).count(),
    });
    let path = sidecar_path(&cfg.out);
    fs::write(&path, serde_json::to_string_pretty(&sidecar)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
