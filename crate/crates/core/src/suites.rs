//! Named property suites run by `hosu verify`.
//!
//! Each suite returns one [`Check`] per property; randomized suites are
//! deterministic for a given seed.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::calculus::{averaged_derivative, rosenbrock, secant_rhs, PolynomialOracle, QuadratureSpec, TestFunction};
use crate::diagnostics::{error_tensor, run_experiment, uniform_independence_measure, Experiment};
use crate::error::Result;
use crate::iterates::{accept_partial, cg_polak_ribiere, synthetic_trace, trust_region_exact, IterateTrace};
use crate::random::{random_spd, random_sym_tensor, unit_vector};
use crate::secant::{
    factor_update, hosu_update_explicit, hosu_update_recursive, least_change_oracle, low_rank_factor,
    solve_low_rank_factor, weight_direction, SkipPolicy, WeightRule,
};
use crate::tensor::{DenseTensor, SymTensor};

pub const SUITES: [&str; 5] = ["characterizations", "convergence", "dennis-more", "lemmas", "golden"];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Runs a suite by name; `None` for an unknown name.
pub fn run_suite(name: &str, seed: u64) -> Option<Result<Vec<Check>>> {
    Some(match name {
        "golden" => golden(),
        "characterizations" => characterizations(seed, 50),
        "convergence" => convergence(),
        "dennis-more" => dennis_more_suite(),
        "lemmas" => lemmas(seed, 100),
        _ => return None,
    })
}

fn rel_diff(a: &DenseTensor, b: &DenseTensor) -> f64 {
    let scale = a.frob_norm().max(b.frob_norm()).max(f64::MIN_POSITIVE);
    (a - b).frob_norm() / scale
}

fn basis(n: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    v[i] = 1.0;
    v
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Both worked examples: `C = 0`, `s = v = e₁`, all-ones right-hand side.
pub fn golden() -> Result<Vec<Check>> {
    let tol = 1e-14;
    let mut checks = Vec::new();

    let e1 = basis(3, 0);
    let d = SymTensor::from_vector(&DVector::from_element(3, 1.0));
    let c = SymTensor::zeros(2, 3);
    let up = hosu_update_explicit(&c, &e1, &e1, &d)?;
    let expected = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
    let err = max_abs_diff(up.entries(), &expected);
    checks.push(Check::new("p=2 update", err <= tol, format!("max error {err:e}")));
    let a = low_rank_factor(&c, &e1, &e1, &d)?;
    let err = max_abs_diff(a.entries(), &[1.0, 2.0, 2.0]);
    checks.push(Check::new("p=2 factor", err <= tol, format!("max error {err:e}")));
    let kkt = least_change_oracle(&c, &e1, &DMatrix::identity(3, 3), &d)?;
    let err = max_abs_diff(kkt.entries(), &expected);
    checks.push(Check::new("p=2 least-change solve", err <= 1e-12, format!("max error {err:e}")));

    let e1 = basis(2, 0);
    let d = SymTensor::from_matrix(&DMatrix::from_element(2, 2, 1.0))?;
    let c = SymTensor::zeros(3, 2);
    let up = hosu_update_explicit(&c, &e1, &e1, &d)?;
    let err = max_abs_diff(up.entries(), &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0]);
    checks.push(Check::new("p=3 update", err <= tol, format!("max error {err:e}")));
    let a = low_rank_factor(&c, &e1, &e1, &d)?;
    let err = max_abs_diff(a.entries(), &[1.0, 1.5, 1.5, 3.0]);
    checks.push(Check::new("p=3 factor", err <= tol, format!("max error {err:e}")));
    let solved = solve_low_rank_factor(&e1, &e1, &d)?;
    let err = max_abs_diff(solved.entries(), &[1.0, 1.5, 1.5, 3.0]);
    checks.push(Check::new("p=3 factor by solve", err <= 1e-12, format!("max error {err:e}")));
    Ok(checks)
}

/// Random instance for the equivalence checks.
pub struct UpdateInstance {
    pub c: SymTensor,
    pub c_tilde: SymTensor,
    pub s: DVector<f64>,
    pub w: DMatrix<f64>,
}

impl UpdateInstance {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, p: usize, n: usize, kappa: f64) -> Self {
        UpdateInstance {
            c: random_sym_tensor(rng, p, n),
            c_tilde: random_sym_tensor(rng, p, n),
            s: unit_vector(rng, n) * rng.gen_range(0.1..2.0),
            w: random_spd(rng, n, kappa),
        }
    }
}

/// Four forms of the update on random instances, plus the secant equation.
pub fn characterizations(seed: u64, count: usize) -> Result<Vec<Check>> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst_pair = 0.0_f64;
    let mut worst_secant = 0.0_f64;
    for i in 0..count {
        let p = 2 + i % 3;
        let n = 2 + (i / 3) % 3;
        let inst = UpdateInstance::random(&mut rng, p, n, 10.0);
        let rhs = inst.c_tilde.apply_repeated(&inst.s, 1)?;
        let v = weight_direction(&inst.w, &inst.s)?;
        let explicit = hosu_update_explicit(&inst.c, &inst.s, &v, &rhs)?;
        let recursive = hosu_update_recursive(&inst.c, &inst.c_tilde, &inst.w, &inst.s)?;
        let factor = low_rank_factor(&inst.c, &inst.s, &v, &rhs)?;
        let low_rank = inst.c.try_add(&factor_update(&factor, &v)?)?;
        let oracle = least_change_oracle(&inst.c, &inst.s, &inst.w, &rhs)?;
        let forms = [&explicit, &recursive, &low_rank, &oracle];
        for a in 0..forms.len() {
            for b in a + 1..forms.len() {
                worst_pair = worst_pair.max(rel_diff(forms[a], forms[b]));
            }
        }
        let resid = explicit.apply_repeated(&inst.s, 1)?.try_sub(&rhs)?.frob_norm();
        worst_secant = worst_secant.max(resid / (1.0 + rhs.frob_norm()));
    }
    Ok(vec![
        Check::new(
            format!("{count} instances agree pairwise"),
            worst_pair <= 1e-9,
            format!("worst relative difference {worst_pair:e}"),
        ),
        Check::new(
            "secant equation",
            worst_secant <= 1e-11,
            format!("worst scaled residual {worst_secant:e}"),
        ),
    ])
}

fn orthonormal_finite_termination(n: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = StdRng::seed_from_u64(seed);
    let c_star = random_sym_tensor(&mut rng, 3, n);
    let lower = (0..3).map(|k| random_sym_tensor(&mut rng, k, n).into_dense()).collect();
    let f = PolynomialOracle::new(c_star.as_dense().clone(), lower)?;
    let x0 = unit_vector(&mut rng, n);
    let mut points = vec![x0.clone()];
    for i in 0..n {
        points.push(points[i].clone() + basis(n, i));
    }
    let trace = IterateTrace::new(points, crate::iterates::Provenance::Synthetic)?;
    let exp = run_experiment(&f, &trace, &WeightRule::Psb, &SymTensor::zeros(3, n), 3, SkipPolicy::Disabled)?;
    let err = exp.final_approx.try_sub(&c_star)?.frob_norm();
    Ok((err, 1e-10 * (1.0 + c_star.frob_norm())))
}

/// Second unit direction for a two-direction synthetic trace with decay
/// `gamma` such that consecutive steps are orthogonal.
pub fn orthogonal_step_directions(gamma: f64) -> Vec<DVector<f64>> {
    let c = 2.0 * gamma / (1.0 + gamma * gamma);
    vec![
        DVector::from_vec(vec![1.0, 0.0]),
        DVector::from_vec(vec![c, (1.0 - c * c).sqrt()]),
    ]
}

/// Synthetic Rosenbrock run: `γ = 0.9`, cut where `γ^k < 1e-6`.
pub fn spanning_rosenbrock_run() -> Result<Experiment> {
    let gamma: f64 = 0.9;
    let count = (1e-6f64.ln() / gamma.ln()).floor() as usize;
    let f = rosenbrock();
    let x_star = f.minimizer().expect("known minimizer");
    let trace = synthetic_trace(&x_star, &orthogonal_step_directions(gamma), gamma, count.min(200), 1.0)?;
    run_experiment(&f, &trace, &WeightRule::Psb, &SymTensor::zeros(3, 2), 3, SkipPolicy::Disabled)
}

/// Maxima over consecutive non-overlapping windows of length `m`.
pub fn window_envelope(values: &[f64], m: usize) -> Vec<f64> {
    values.chunks(m).map(|w| w.iter().copied().fold(f64::MIN, f64::max)).collect()
}

pub fn convergence() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (i, n) in [2, 3, 5].into_iter().enumerate() {
        let (err, tol) = orthonormal_finite_termination(n, 17 + i as u64)?;
        checks.push(Check::new(
            format!("cubic polynomial, n={n}: exact after n steps"),
            err <= tol,
            format!("‖C_n − C_*‖_F = {err:e}"),
        ));
    }
    let exp = spanning_rosenbrock_run()?;
    let rel = errors_against_limit(&exp)?;
    let last = *rel.last().expect("records");
    checks.push(Check::new(
        "spanning synthetic trace on Rosenbrock: error below 1e-3",
        last < 1e-3,
        format!("final relative error {last:e} after {} steps", rel.len()),
    ));
    let env = window_envelope(&rel, 2);
    let burn_in = env.len() / 4;
    let monotone = env[burn_in..].windows(2).all(|w| w[1] <= w[0]);
    checks.push(Check::new("window envelopes decrease after burn-in", monotone, format!("{} windows", env.len())));

    let steps = spanning_steps()?;
    let measures = steps
        .windows(2)
        .map(|w| uniform_independence_measure(w, &DMatrix::identity(2, 2)))
        .collect::<Result<Vec<f64>>>()?;
    let worst = measures.iter().copied().fold(0.0, f64::max);
    checks.push(Check::new("projector products stay below one", worst < 0.5, format!("max over windows {worst:e}")));
    Ok(checks)
}

/// `‖C_k − C_*‖_F / ‖C_*‖_F` along an experiment.
pub fn errors_against_limit(exp: &Experiment) -> Result<Vec<f64>> {
    exp.history
        .iter()
        .map(|c| Ok(crate::diagnostics::rel_frob_error(c, &exp.c_star)?.value))
        .collect()
}

fn spanning_steps() -> Result<Vec<DVector<f64>>> {
    let x_star = DVector::from_vec(vec![1.0, 1.0]);
    Ok(synthetic_trace(&x_star, &orthogonal_step_directions(0.9), 0.9, 60, 1.0)?.steps())
}

/// Geometric trace with `γ = 0.7`, `W_k = I`.
pub fn dennis_more_run() -> Result<Experiment> {
    let gamma = 0.7;
    let f = rosenbrock();
    let x_star = f.minimizer().expect("known minimizer");
    let trace = synthetic_trace(&x_star, &orthogonal_step_directions(gamma), gamma, 45, 1.0)?;
    run_experiment(&f, &trace, &WeightRule::Psb, &SymTensor::zeros(3, 2), 3, SkipPolicy::Disabled)
}

pub fn dennis_more_suite() -> Result<Vec<Check>> {
    let exp = dennis_more_run()?;
    let dm: Vec<f64> = exp.records.iter().map(|r| r.dm_ratio).collect();
    let last = *dm.last().expect("records");
    let squares: Vec<f64> = dm.iter().map(|d| d * d).collect();
    let total: f64 = squares.iter().sum();
    let tail: f64 = squares[squares.len() * 3 / 4..].iter().sum();
    let same = dennis_more_zero_at_limit()?;
    Ok(vec![
        Check::new("final ratio below 1e-6", last < 1e-6, format!("{last:e}")),
        Check::new(
            "squared ratios summable",
            tail < 0.01 * total,
            format!("last-quarter increment {tail:e} of total {total:e}"),
        ),
        Check::new("ratio vanishes at the limit", same == 0.0, format!("{same:e}")),
    ])
}

fn dennis_more_zero_at_limit() -> Result<f64> {
    let f = rosenbrock();
    let c_star = f.derivative(3, &f.minimizer().expect("known minimizer"))?;
    crate::diagnostics::dennis_more(&c_star, &c_star, &DVector::from_vec(vec![0.3, -0.2]))
}

fn point_in_disk<R: Rng + ?Sized>(rng: &mut R, center: &DVector<f64>, radius: f64) -> DVector<f64> {
    let r = radius * rng.gen::<f64>().sqrt();
    center + unit_vector(rng, center.len()) * r
}

/// Averaged-derivative and error-tensor bounds near the Rosenbrock minimizer.
pub fn lemmas(seed: u64, count: usize) -> Result<Vec<Check>> {
    let mut rng = StdRng::seed_from_u64(seed);
    let f = rosenbrock();
    let x_star = f.minimizer().expect("known minimizer");
    let c_star = f.derivative(3, &x_star)?;
    let lip = f.lipschitz().expect("Lipschitz constant");
    let quad = QuadratureSpec::default();
    let mut gap_ok = 0;
    let mut err_ok = 0;
    let mut worst_gap = 0.0_f64;
    for _ in 0..count {
        let x = point_in_disk(&mut rng, &x_star, 0.5);
        let x_next = point_in_disk(&mut rng, &x_star, 0.5);
        let s = &x_next - &x;
        let c_tilde = averaged_derivative(&f, &x, &s, 3, &quad)?;
        let gap = c_tilde.try_sub(&c_star)?.injective_norm_est(20, 1e-12).value;
        let bound = 0.5 * lip * ((&x - &x_star).norm() + (&x_next - &x_star).norm());
        worst_gap = worst_gap.max(gap / bound);
        if gap <= bound * (1.0 + 1e-9) {
            gap_ok += 1;
        }

        let w = random_spd(&mut rng, 2, 10.0);
        let c = c_star.try_add(&random_sym_tensor(&mut rng, 3, 2).scaled(100.0))?;
        let v = weight_direction(&w, &s)?;
        let c_next = hosu_update_explicit(&c, &s, &v, &secant_rhs(&f, &x_next, &x, 3)?)?;
        if error_tensor(&c_next, &c, &c_tilde, &c_star, &w, &s)?.bound_ok {
            err_ok += 1;
        }
    }
    Ok(vec![
        Check::new(
            format!("averaged derivative within (L/2)(‖x_k − x_*‖ + ‖x_k+1 − x_*‖) on {count} pairs"),
            gap_ok == count,
            format!("{gap_ok}/{count} hold, worst ratio {worst_gap:.6}"),
        ),
        Check::new(
            format!("error tensor bound on {count} pairs"),
            err_ok == count,
            format!("{err_ok}/{count} hold"),
        ),
    ])
}

/// Rosenbrock from the origin with PR+ CG (`gtol = 1e-14`), PSB, zero start.
pub fn rosenbrock_cg_run() -> Result<(IterateTrace, Experiment)> {
    let f = rosenbrock();
    let trace = accept_partial(cg_polak_ribiere(&f, &DVector::zeros(2), 1e-14, 500))?;
    let exp = run_experiment(&f, &trace, &WeightRule::Psb, &SymTensor::zeros(3, 2), 3, SkipPolicy::Disabled)?;
    Ok((trace, exp))
}

/// Rosenbrock from the origin with exact trust-region Newton, PSB, zero start.
pub fn rosenbrock_trust_region_run() -> Result<(IterateTrace, Experiment)> {
    let f = rosenbrock();
    let trace = trust_region_exact(&f, &DVector::zeros(2), 1e-12, 200)?;
    let exp = run_experiment(&f, &trace, &WeightRule::Psb, &SymTensor::zeros(3, 2), 3, SkipPolicy::Disabled)?;
    Ok((trace, exp))
}
