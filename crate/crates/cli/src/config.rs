use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context};
use clap::Args;
use hosu_core::iterates::parse_trace;
use hosu_core::{DenseTensor, PolynomialOracle, SymTensor, TestFunction};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "path")]
pub enum FunctionSpec {
    Rosenbrock,
    Polynomial,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "path")]
pub enum IterateSpec {
    Cg,
    TrustRegion,
    Synthetic,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "path")]
pub enum RuleSpec {
    Psb,
    Dfp,
    Sr1,
    Matrix(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "path")]
pub enum InitSpec {
    Zero,
    File(PathBuf),
}

fn split_path(s: &str, prefix: &str) -> Option<PathBuf> {
    s.strip_prefix(prefix).filter(|p| !p.is_empty()).map(PathBuf::from)
}

impl FromStr for FunctionSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rosenbrock" => Ok(FunctionSpec::Rosenbrock),
            "polynomial" => Ok(FunctionSpec::Polynomial),
            _ => split_path(s, "poly:")
                .map(FunctionSpec::File)
                .ok_or_else(|| format!("expected rosenbrock, polynomial or poly:PATH, got {s:?}")),
        }
    }
}

impl FromStr for IterateSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cg" => Ok(IterateSpec::Cg),
            "trust_region" | "trust-region" => Ok(IterateSpec::TrustRegion),
            "synthetic" => Ok(IterateSpec::Synthetic),
            _ => split_path(s, "file:")
                .map(IterateSpec::File)
                .ok_or_else(|| format!("expected cg, trust_region, synthetic or file:PATH, got {s:?}")),
        }
    }
}

impl FromStr for RuleSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "psb" => Ok(RuleSpec::Psb),
            "dfp" => Ok(RuleSpec::Dfp),
            "sr1" => Ok(RuleSpec::Sr1),
            _ => split_path(s, "matrix:")
                .map(RuleSpec::Matrix)
                .ok_or_else(|| format!("expected psb, dfp, sr1 or matrix:PATH, got {s:?}")),
        }
    }
}

impl FromStr for InitSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "zero" => Ok(InitSpec::Zero),
            _ => split_path(s, "file:")
                .map(InitSpec::File)
                .ok_or_else(|| format!("expected zero or file:PATH, got {s:?}")),
        }
    }
}

fn parse_point(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect()
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExperimentConfig {
    /// rosenbrock | polynomial | poly:PATH
    #[arg(long = "fn", default_value = "rosenbrock")]
    pub function: FunctionSpec,
    /// cg | trust_region | synthetic | file:PATH
    #[arg(long, default_value = "cg")]
    pub iterates: IterateSpec,
    /// psb | dfp | sr1 | matrix:PATH
    #[arg(long, default_value = "psb")]
    pub rule: RuleSpec,
    /// Order of the approximated derivative.
    #[arg(long, default_value_t = 3)]
    pub p: usize,
    /// zero | file:PATH
    #[arg(long, default_value = "zero")]
    pub c0: InitSpec,
    /// Start point for cg and trust_region, comma separated.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-14)]
    pub gtol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Decay rate of the synthetic trace.
    #[arg(long, default_value_t = 0.9)]
    pub gamma: f64,
    /// Number of synthetic steps.
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// Skip updates whose right-hand side is dominated by rounding.
    #[arg(long)]
    pub skip: bool,
    #[arg(long, default_value_t = 1.0)]
    pub tau_rel: f64,
    /// Diagnostics CSV; the JSON sidecar goes next to it.
    #[arg(long, default_value = "hosu.csv")]
    pub out: PathBuf,
    /// Overridden by HOSU_SEED.
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
}

/// On-disk form of a polynomial oracle.
#[derive(Debug, Deserialize)]
struct PolynomialFile {
    c_star: DenseTensor,
    #[serde(default)]
    lower_terms: Vec<DenseTensor>,
    #[serde(default)]
    minimizer: Option<Vec<f64>>,
}

/// Built-in cubic: `½‖x‖² + (1/6) T[x]³` on ℝ², minimized locally at 0.
pub fn builtin_polynomial() -> anyhow::Result<PolynomialOracle> {
    let top = DenseTensor::new(3, 2, vec![6.0, 2.0, 2.0, -1.0, 2.0, -1.0, -1.0, 3.0])?;
    let quadratic = DenseTensor::from_matrix(&DMatrix::identity(2, 2))?;
    Ok(PolynomialOracle::new(top, vec![quadratic])?.with_minimizer(DVector::zeros(2)))
}

pub fn load_function(spec: &FunctionSpec) -> anyhow::Result<Box<dyn TestFunction>> {
    Ok(match spec {
        FunctionSpec::Rosenbrock => Box::new(hosu_core::rosenbrock()),
        FunctionSpec::Polynomial => Box::new(builtin_polynomial()?),
        FunctionSpec::File(path) => {
            let text = read(path)?;
            let raw: PolynomialFile =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let mut poly = PolynomialOracle::new(raw.c_star, raw.lower_terms)?;
            if let Some(x) = raw.minimizer {
                poly = poly.with_minimizer(DVector::from_vec(x));
            }
            Box::new(poly)
        }
    })
}

/// Square matrix, one row per line.
pub fn load_matrix(path: &Path) -> anyhow::Result<DMatrix<f64>> {
    let rows = parse_trace(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
    let n = rows.len();
    if rows.dim() != n {
        bail!("{} holds a {n}×{} matrix, expected a square one", path.display(), rows.dim());
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows.points()[i][j]))
}

pub fn load_initial(spec: &InitSpec, p: usize, n: usize) -> anyhow::Result<SymTensor> {
    match spec {
        InitSpec::Zero => Ok(SymTensor::zeros(p, n)),
        InitSpec::File(path) => {
            let c: SymTensor =
                serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
            if c.order() != p || c.dim() != n {
                bail!("initial tensor has order {} and dimension {}, expected {p} and {n}", c.order(), c.dim());
            }
            Ok(c)
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).map_err(|e| anyhow!("cannot read {}: {e}", path.display()))
}
