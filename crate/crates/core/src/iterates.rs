//! Iterate sequences: nonlinear CG, exact trust-region Newton, synthetic
//! geometric traces, and a plain-text trace format.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::calculus::TestFunction;
use crate::error::{Error, Result};
use crate::linalg::column_rank;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Cg,
    TrustRegion,
    Synthetic,
    File,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Cg => "cg",
            Provenance::TrustRegion => "trust_region",
            Provenance::Synthetic => "synthetic",
            Provenance::File => "file",
        })
    }
}

/// Points `x_0 … x_K`; steps are derived on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateTrace {
    points: Vec<DVector<f64>>,
    provenance: Provenance,
}

impl IterateTrace {
    pub fn new(points: Vec<DVector<f64>>, provenance: Provenance) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::arg("a trace needs at least one point"));
        };
        let n = first.len();
        if n == 0 {
            return Err(Error::dim("points must have positive dimension"));
        }
        for (k, x) in points.iter().enumerate() {
            if x.len() != n {
                return Err(Error::dim(format!("point {k} has dimension {}, expected {n}", x.len())));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::arg(format!("point {k} is not finite")));
            }
        }
        Ok(IterateTrace { points, provenance })
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Number of points, `K + 1`.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> &DVector<f64> {
        self.points.last().expect("traces are never empty")
    }

    pub fn step(&self, k: usize) -> DVector<f64> {
        &self.points[k + 1] - &self.points[k]
    }

    pub fn steps(&self) -> Vec<DVector<f64>> {
        (0..self.num_steps()).map(|k| self.step(k)).collect()
    }

    pub fn num_steps(&self) -> usize {
        self.points.len() - 1
    }

    /// `true` for every step that is exactly zero.
    pub fn zero_steps(&self) -> Vec<bool> {
        self.points.windows(2).map(|w| w[0] == w[1]).collect()
    }

    /// A trace without any nonzero step carries no secant information.
    pub fn is_degenerate(&self) -> bool {
        self.zero_steps().iter().all(|&z| z)
    }

    pub fn truncated(&self, len: usize) -> IterateTrace {
        IterateTrace {
            points: self.points[..len.clamp(1, self.points.len())].to_vec(),
            provenance: self.provenance,
        }
    }
}

/// Strong-Wolfe parameters for [`cg_polak_ribiere`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchOptions {
    pub c1: f64,
    pub c2: f64,
    pub max_trials: usize,
}

impl Default for LineSearchOptions {
    fn default() -> Self {
        LineSearchOptions {
            c1: 1e-4,
            c2: 0.4,
            max_trials: 40,
        }
    }
}

#[derive(Clone)]
struct Sample {
    alpha: f64,
    f: f64,
    slope: f64,
    g: DVector<f64>,
}

struct LineSearch<'a> {
    f: &'a dyn TestFunction,
    x: &'a DVector<f64>,
    d: &'a DVector<f64>,
    f0: f64,
    slope0: f64,
    opts: LineSearchOptions,
    trials: usize,
}

impl LineSearch<'_> {
    fn sample(&mut self, alpha: f64) -> Result<Sample> {
        self.trials += 1;
        let xa = self.x + self.d * alpha;
        let g = self.f.gradient(&xa)?;
        Ok(Sample {
            alpha,
            f: self.f.eval(&xa)?,
            slope: g.dot(self.d),
            g,
        })
    }

    fn sufficient_decrease(&self, s: &Sample) -> bool {
        s.f <= self.f0 + self.opts.c1 * s.alpha * self.slope0
    }

    fn curvature(&self, s: &Sample) -> bool {
        s.slope.abs() <= -self.opts.c2 * self.slope0
    }

    fn run(&mut self, alpha_init: f64) -> Result<Option<Sample>> {
        let mut prev = Sample {
            alpha: 0.0,
            f: self.f0,
            slope: self.slope0,
            g: DVector::zeros(0),
        };
        let mut alpha = alpha_init;
        let mut first = true;
        while self.trials < self.opts.max_trials {
            let cur = self.sample(alpha)?;
            if !cur.f.is_finite() || !cur.slope.is_finite() {
                alpha = 0.5 * (prev.alpha + alpha);
                continue;
            }
            if !self.sufficient_decrease(&cur) || (!first && cur.f >= prev.f) {
                return self.zoom(prev, cur);
            }
            if self.curvature(&cur) {
                return Ok(Some(cur));
            }
            if cur.slope >= 0.0 {
                return self.zoom(cur, prev);
            }
            first = false;
            alpha = 2.0 * cur.alpha;
            prev = cur;
        }
        Ok(None)
    }

    fn zoom(&mut self, mut lo: Sample, mut hi: Sample) -> Result<Option<Sample>> {
        while self.trials < self.opts.max_trials {
            let width = hi.alpha - lo.alpha;
            if width.abs() <= f64::EPSILON * lo.alpha.abs().max(hi.alpha.abs()) {
                return Ok(None);
            }
            let alpha = cubic_minimizer(&lo, &hi)
                .filter(|a| {
                    let (a0, a1) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
                    let margin = 0.1 * (a1 - a0);
                    *a >= a0 + margin && *a <= a1 - margin
                })
                .unwrap_or(lo.alpha + 0.5 * width);
            let cur = self.sample(alpha)?;
            if !cur.f.is_finite() || !self.sufficient_decrease(&cur) || cur.f >= lo.f {
                hi = cur;
            } else {
                if self.curvature(&cur) {
                    return Ok(Some(cur));
                }
                if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = cur;
            }
        }
        Ok(None)
    }
}

/// Minimizer of the cubic interpolating values and slopes at both ends.
fn cubic_minimizer(a: &Sample, b: &Sample) -> Option<f64> {
    let d1 = a.slope + b.slope - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.slope * b.slope;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let alpha = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / (b.slope - a.slope + 2.0 * d2);
    alpha.is_finite().then_some(alpha)
}

/// Polak–Ribière (PR+) nonlinear CG with a strong-Wolfe line search and no
/// periodic restarts. Stops once `‖∇f‖ ≤ gtol` or after `max_iter` steps.
///
/// When the line search gives up, the error carries the iterates accepted
/// so far.
pub fn cg_polak_ribiere(f: &dyn TestFunction, x0: &DVector<f64>, gtol: f64, max_iter: usize) -> Result<IterateTrace> {
    cg_polak_ribiere_with(f, x0, gtol, max_iter, LineSearchOptions::default())
}

/// Turns a line-search failure into the partial trace it carries.
pub fn accept_partial(result: Result<IterateTrace>) -> Result<IterateTrace> {
    match result {
        Err(Error::LineSearch { partial, .. }) => Ok(*partial),
        other => other,
    }
}

pub fn cg_polak_ribiere_with(
    f: &dyn TestFunction,
    x0: &DVector<f64>,
    gtol: f64,
    max_iter: usize,
    opts: LineSearchOptions,
) -> Result<IterateTrace> {
    if max_iter == 0 {
        return Err(Error::arg("max_iter must be at least 1"));
    }
    if x0.len() != f.dim() {
        return Err(Error::dim(format!("start point has length {}, expected {}", x0.len(), f.dim())));
    }
    let mut x = x0.clone();
    let mut fx = f.eval(&x)?;
    let mut g = f.gradient(&x)?;
    let mut d = -&g;
    let mut points = vec![x.clone()];
    let mut alpha_prev = 0.0;
    let mut slope_prev = 0.0;

    for iteration in 0..max_iter {
        if g.norm() <= gtol {
            break;
        }
        let mut slope = g.dot(&d);
        if slope >= 0.0 {
            d = -&g;
            slope = -g.norm_squared();
        }
        let alpha_init = if iteration == 0 {
            (1.0 / g.norm()).min(1.0)
        } else {
            (alpha_prev * slope_prev / slope).min(1e10)
        };
        let mut search = LineSearch {
            f,
            x: &x,
            d: &d,
            f0: fx,
            slope0: slope,
            opts,
            trials: 0,
        };
        let accepted = search.run(alpha_init)?;
        let next = accepted.map(|s| (&x + &d * s.alpha, s)).filter(|(xn, _)| *xn != x);
        let Some((x_next, sample)) = next else {
            return Err(Error::LineSearch {
                iteration,
                partial: Box::new(IterateTrace::new(points, Provenance::Cg)?),
            });
        };
        let y = &sample.g - &g;
        let beta = (sample.g.dot(&y) / g.norm_squared()).max(0.0);
        d = -&sample.g + &d * beta;
        alpha_prev = sample.alpha;
        slope_prev = slope;
        x = x_next;
        fx = sample.f;
        g = sample.g;
        points.push(x.clone());
    }
    IterateTrace::new(points, Provenance::Cg)
}

/// Parameters of [`trust_region_exact`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustRegionOptions {
    pub initial_radius: f64,
    pub eta: f64,
    pub expand: f64,
    pub shrink: f64,
    pub subproblem_tol: f64,
    pub subproblem_max_iter: usize,
}

impl Default for TrustRegionOptions {
    fn default() -> Self {
        TrustRegionOptions {
            initial_radius: 1.0,
            eta: 0.1,
            expand: 2.0,
            shrink: 0.25,
            subproblem_tol: 1e-12,
            subproblem_max_iter: 200,
        }
    }
}

/// Trust-region Newton with exact Hessians and exactly solved subproblems.
/// Only accepted iterates enter the trace.
pub fn trust_region_exact(f: &dyn TestFunction, x0: &DVector<f64>, gtol: f64, max_iter: usize) -> Result<IterateTrace> {
    trust_region_exact_with(f, x0, gtol, max_iter, TrustRegionOptions::default())
}

pub fn trust_region_exact_with(
    f: &dyn TestFunction,
    x0: &DVector<f64>,
    gtol: f64,
    max_iter: usize,
    opts: TrustRegionOptions,
) -> Result<IterateTrace> {
    if x0.len() != f.dim() {
        return Err(Error::dim(format!("start point has length {}, expected {}", x0.len(), f.dim())));
    }
    let mut x = x0.clone();
    let mut fx = f.eval(&x)?;
    let mut g = f.gradient(&x)?;
    let mut h = f.hessian(&x)?;
    let mut radius = opts.initial_radius;
    let mut points = vec![x.clone()];

    for _ in 0..max_iter {
        if g.norm() <= gtol || radius <= f64::EPSILON * (1.0 + x.norm()) {
            break;
        }
        let (p, on_boundary) = solve_subproblem(&g, &h, radius, &opts)?;
        let predicted = -(g.dot(&p) + 0.5 * p.dot(&(&h * &p)));
        if !(predicted > 0.0) {
            break;
        }
        let x_trial = &x + &p;
        let f_trial = f.eval(&x_trial)?;
        let ratio = (fx - f_trial) / predicted;
        if ratio < 0.25 {
            radius *= opts.shrink;
        } else if ratio > 0.75 && on_boundary {
            radius *= opts.expand;
        }
        if ratio > opts.eta && x_trial != x {
            x = x_trial;
            fx = f_trial;
            g = f.gradient(&x)?;
            h = f.hessian(&x)?;
            points.push(x.clone());
        }
    }
    IterateTrace::new(points, Provenance::TrustRegion)
}

/// Minimizes `gᵀp + ½ pᵀHp` subject to `‖p‖ ≤ radius`.
///
/// Works in the eigenbasis of `H` and runs Newton's method on the secular
/// equation `1/radius − 1/‖p(λ)‖ = 0`, `p(λ) = −(H + λI)⁻¹ g`, starting left
/// of the root so the iteration increases monotonically. The hard case adds
/// a multiple of the bottom eigenvector. Returns the step and whether it
/// lies on the boundary.
pub fn solve_subproblem(
    g: &DVector<f64>,
    h: &DMatrix<f64>,
    radius: f64,
    opts: &TrustRegionOptions,
) -> Result<(DVector<f64>, bool)> {
    let n = g.len();
    if h.nrows() != n || h.ncols() != n {
        return Err(Error::dim("Hessian does not match gradient"));
    }
    let eig = SymmetricEigen::new(h.clone());
    let lambdas = &eig.eigenvalues;
    let q = &eig.eigenvectors;
    let coeffs = q.transpose() * g;
    let (imin, &lmin) = lambdas
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty spectrum");
    let scale = lambdas.amax().max(f64::MIN_POSITIVE);

    let step_at = |shift: f64| -> DVector<f64> {
        let mut z = DVector::zeros(n);
        for i in 0..n {
            let denom = lambdas[i] + shift;
            if denom > 0.0 {
                z[i] = -coeffs[i] / denom;
            }
        }
        q * z
    };

    if lmin > 1e-14 * scale {
        let newton = step_at(0.0);
        if newton.norm() <= radius {
            return Ok((newton, false));
        }
    }

    let shift_floor = (-lmin).max(0.0);
    let pole_weight = coeffs[imin].abs();
    let interior = step_at(shift_floor);
    let resolves_pole = lmin <= 0.0 || lmin <= 1e-14 * scale;
    if resolves_pole && pole_weight <= 1e-14 * g.norm().max(f64::MIN_POSITIVE) && interior.norm() <= radius {
        let u = q.column(imin).into_owned();
        let a = interior.norm_squared();
        let b = interior.dot(&u);
        let tau = -b + (b * b + radius * radius - a).max(0.0).sqrt();
        return Ok((interior + u * tau, true));
    }

    let norm_and_slope = |shift: f64| -> (f64, f64) {
        let mut sq = 0.0;
        let mut cube = 0.0;
        for i in 0..n {
            let denom = lambdas[i] + shift;
            let c2 = coeffs[i] * coeffs[i];
            if c2 == 0.0 {
                continue;
            }
            sq += c2 / (denom * denom);
            cube += c2 / (denom * denom * denom);
        }
        (sq.sqrt(), cube)
    };

    // Left of the root: ‖p(shift)‖ ≥ radius.
    let mut shift = if pole_weight > 0.0 && resolves_pole {
        shift_floor + 0.5 * pole_weight / radius
    } else {
        shift_floor
    };
    if norm_and_slope(shift).0 < radius {
        // Root lies between the floor and here; fall back to the floor.
        shift = shift_floor + f64::MIN_POSITIVE;
        if !(norm_and_slope(shift).0 >= radius) {
            return Err(Error::Subproblem("cannot bracket the secular equation".into()));
        }
    }
    for _ in 0..opts.subproblem_max_iter {
        let (norm, cube) = norm_and_slope(shift);
        if (norm - radius).abs() <= opts.subproblem_tol * radius {
            return Ok((step_at(shift), true));
        }
        let next = shift + (norm * norm / cube) * (norm - radius) / radius;
        if !next.is_finite() || next <= shift {
            return Ok((step_at(shift), true));
        }
        shift = next;
    }
    let (norm, _) = norm_and_slope(shift);
    if (norm - radius).abs() <= 1e-8 * radius {
        return Ok((step_at(shift), true));
    }
    Err(Error::Subproblem(format!(
        "secular iteration stalled with ‖p‖ = {norm:e}, radius = {radius:e}"
    )))
}

/// `x_k = x_star + scale · γ^k · d_(k mod m)` for `k = 0..=count`.
///
/// Directions are normalized and must span the space.
pub fn synthetic_trace(
    x_star: &DVector<f64>,
    directions: &[DVector<f64>],
    gamma: f64,
    count: usize,
    scale: f64,
) -> Result<IterateTrace> {
    let n = x_star.len();
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::arg(format!("decay rate must lie in (0, 1), got {gamma}")));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::arg("scale must be positive"));
    }
    if directions.iter().any(|d| d.len() != n) {
        return Err(Error::dim("directions must match the dimension of x_star"));
    }
    if directions.iter().any(|d| d.norm() == 0.0) || column_rank(directions, 1e-10) < n {
        return Err(Error::arg("directions do not span the space"));
    }
    let units: Vec<DVector<f64>> = directions.iter().map(|d| d.normalize()).collect();
    let points = (0..=count)
        .map(|k| x_star + &units[k % units.len()] * (scale * gamma.powi(k as i32)))
        .collect();
    IterateTrace::new(points, Provenance::Synthetic)
}

/// Reads one point per line, whitespace separated.
pub fn load_trace(path: impl AsRef<Path>) -> Result<IterateTrace> {
    parse_trace(&fs::read_to_string(path)?)
}

pub fn parse_trace(text: &str) -> Result<IterateTrace> {
    let mut points: Vec<DVector<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let values = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|e| Error::Format {
                    line: line_no,
                    message: format!("cannot parse {tok:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format {
                line: line_no,
                message: "non-finite value".into(),
            });
        }
        if let Some(first) = points.first() {
            if first.len() != values.len() {
                return Err(Error::Format {
                    line: line_no,
                    message: format!("expected {} values, found {}", first.len(), values.len()),
                });
            }
        }
        points.push(DVector::from_vec(values));
    }
    if points.is_empty() {
        return Err(Error::Format {
            line: 0,
            message: "trace file is empty".into(),
        });
    }
    IterateTrace::new(points, Provenance::File)
}

pub fn save_trace(trace: &IterateTrace, path: impl AsRef<Path>) -> Result<()> {
    let mut out = fs::File::create(path)?;
    out.write_all(format_trace(trace).as_bytes())?;
    Ok(())
}

/// Trace text with 17 significant digits per value.
pub fn format_trace(trace: &IterateTrace) -> String {
    let mut s = String::new();
    for x in trace.points() {
        let line: Vec<String> = x.iter().map(|v| format!("{v:.16e}")).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{rosenbrock, PolynomialOracle};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn cg_solves_a_quadratic() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let f = PolynomialOracle::quadratic(&a).unwrap();
        let trace = cg_polak_ribiere(&f, &v(&[1.0, -2.0, 0.5]), 1e-10, 9).unwrap();
        assert!(f.gradient(trace.last()).unwrap().norm() <= 1e-10);
    }

    #[test]
    fn cg_at_stationary_point_is_degenerate() {
        let f = rosenbrock();
        let trace = cg_polak_ribiere(&f, &v(&[1.0, 1.0]), 1e-10, 10).unwrap();
        assert_eq!(trace.len(), 1);
        assert!(trace.is_degenerate());
    }

    #[test]
    fn trust_region_takes_newton_step_on_quadratic() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let f = PolynomialOracle::quadratic(&a).unwrap();
        let opts = TrustRegionOptions {
            initial_radius: 100.0,
            ..Default::default()
        };
        let trace = trust_region_exact_with(&f, &v(&[3.0, -4.0]), 1e-12, 10, opts).unwrap();
        assert_eq!(trace.len(), 2);
        assert!(trace.last().norm() < 1e-14);
    }

    #[test]
    fn subproblem_hits_boundary_for_indefinite_hessian() {
        let h = DMatrix::from_diagonal(&v(&[1.0, -2.0]));
        let (p, boundary) = solve_subproblem(&v(&[1.0, 1.0]), &h, 0.5, &TrustRegionOptions::default()).unwrap();
        assert!(boundary);
        assert!((p.norm() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn subproblem_hard_case() {
        let h = DMatrix::from_diagonal(&v(&[1.0, -2.0]));
        let (p, boundary) = solve_subproblem(&v(&[1.0, 0.0]), &h, 2.0, &TrustRegionOptions::default()).unwrap();
        assert!(boundary);
        assert!((p.norm() - 2.0).abs() < 1e-12);
        assert!((p[0] + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn synthetic_closed_form() {
        let trace = synthetic_trace(&v(&[1.0, 1.0]), &[v(&[1.0, 0.0]), v(&[0.0, 1.0])], 0.5, 6, 1.0).unwrap();
        for (k, x) in trace.points().iter().enumerate() {
            assert!(((x - v(&[1.0, 1.0])).norm() - 0.5f64.powi(k as i32)).abs() < 1e-15);
        }
        let err = synthetic_trace(&v(&[0.0, 0.0]), &[v(&[1.0, 0.0]), v(&[2.0, 0.0])], 0.5, 4, 1.0);
        assert!(matches!(err, Err(Error::Argument(_))));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        assert_eq!(parse_trace("0 0\n1 1\n").unwrap().len(), 2);
        assert!(matches!(parse_trace(""), Err(Error::Format { .. })));
        assert!(matches!(parse_trace("0 0\n1 x\n"), Err(Error::Format { line: 2, .. })));
        assert!(matches!(parse_trace("0 0\n1\n"), Err(Error::Format { line: 2, .. })));
    }

    #[test]
    fn format_round_trips() {
        let trace = IterateTrace::new(vec![v(&[0.1, 1.0 / 3.0]), v(&[-2e-300, 7.0])], Provenance::Cg).unwrap();
        let back = parse_trace(&format_trace(&trace)).unwrap();
        assert_eq!(back.points(), trace.points());
    }
}
