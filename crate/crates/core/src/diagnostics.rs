//! Per-iteration metrics and numerical checks of the convergence theory.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::calculus::{secant_rhs, TestFunction};
use crate::error::{Error, Result};
use crate::iterates::IterateTrace;
use crate::linalg::{checked_inverse, complement_projector, condition_number, spectral_norm};
use crate::secant::{update_step, SkipPolicy, StepData, UpdateState, WeightRule};
use crate::tensor::{InjectiveNormOptions, SymTensor};

/// Metrics after the update driven by step `k − 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub k: usize,
    /// `‖x_k − x_*‖`.
    pub x_err: f64,
    /// `‖s_(k−1)‖`.
    pub step_norm: f64,
    /// `‖C_k − D^p f(x_k)‖_F / ‖D^p f(x_k)‖_F`.
    pub rel_frob_err: f64,
    /// Relative Dennis–Moré measure of `C_(k−1)` along `s_(k−1)`.
    pub dm_ratio: f64,
    /// `max(‖s_(k−1)‖, ε/‖s_(k−1)‖)`.
    pub proxy: f64,
    /// Angle of `s_(k−1)` with the first axis, 2-D only.
    pub angle_deg: Option<f64>,
    pub skipped: bool,
}

/// Relative error, or the absolute error when the reference vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeError {
    pub value: f64,
    pub relative: bool,
}

/// `‖C − truth‖_F / ‖truth‖_F`.
pub fn rel_frob_error(c: &SymTensor, truth: &SymTensor) -> Result<RelativeError> {
    let abs = c.try_sub(truth)?.frob_norm();
    let scale = truth.frob_norm();
    Ok(if scale > 0.0 {
        RelativeError {
            value: abs / scale,
            relative: true,
        }
    } else {
        RelativeError {
            value: abs,
            relative: false,
        }
    })
}

/// `‖(C − C_*)[s]‖_F / (‖s‖ ‖C_*‖_F)`; the `‖C_*‖_F` factor is dropped when
/// `C_*` vanishes.
pub fn dennis_more(c: &SymTensor, c_star: &SymTensor, s: &DVector<f64>) -> Result<f64> {
    let snorm = s.norm();
    if snorm == 0.0 {
        return Err(Error::arg("step is zero"));
    }
    let gap = c.try_sub(c_star)?.apply_repeated(s, 1)?.frob_norm() / snorm;
    let scale = c_star.frob_norm();
    Ok(if scale > 0.0 { gap / scale } else { gap })
}

/// `max(‖s‖, ε/‖s‖)`, smallest (`√ε`) at `‖s‖ = √ε`.
pub fn error_floor_proxy(s_prev_norm: f64, eps_mach: f64) -> f64 {
    s_prev_norm.max(eps_mach / s_prev_norm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepProjectors {
    /// `I − r rᵀ/rᵀr` with `r = W_k⁻¹ s`.
    pub current: DMatrix<f64>,
    /// Same with `W_*`.
    pub limit: DMatrix<f64>,
    /// `W_k P_k W_k⁻¹`.
    pub conjugated: DMatrix<f64>,
}

pub fn step_projectors(w_k: &DMatrix<f64>, w_star: &DMatrix<f64>, s: &DVector<f64>) -> Result<StepProjectors> {
    if s.iter().all(|&x| x == 0.0) {
        return Err(Error::arg("step is zero"));
    }
    let wk_inv = checked_inverse(w_k)?;
    let ws_inv = checked_inverse(w_star)?;
    if s.len() != w_k.nrows() || w_star.nrows() != w_k.nrows() {
        return Err(Error::dim("step and weight matrices differ in dimension"));
    }
    let current = complement_projector(&(&wk_inv * s));
    let limit = complement_projector(&(&ws_inv * s));
    let conjugated = w_k * &current * &wk_inv;
    Ok(StepProjectors {
        current,
        limit,
        conjugated,
    })
}

/// `‖P*_m ⋯ P*_1‖₂` over a window of steps; below one exactly when the
/// scaled steps span the space.
pub fn uniform_independence_measure(steps: &[DVector<f64>], w_star: &DMatrix<f64>) -> Result<f64> {
    let n = w_star.nrows();
    let w_inv = checked_inverse(w_star)?;
    let mut product = DMatrix::identity(n, n);
    for s in steps {
        if s.len() != n {
            return Err(Error::dim("step length does not match weight matrix"));
        }
        if s.iter().all(|&x| x == 0.0) {
            continue;
        }
        product = complement_projector(&(&w_inv * s)) * product;
    }
    Ok(spectral_norm(&product))
}

/// Outcome of [`error_tensor`].
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTensorCheck {
    /// `E = (C₊ − C_*) − (C − C_*)[W P W⁻¹]^p`.
    pub e: SymTensor,
    /// Injective-norm estimate of `E`.
    pub e_norm: f64,
    pub e_frob: f64,
    /// `‖C̃ − C_*‖₂`, the Frobenius norm when the estimate did not converge.
    pub c_tilde_gap: f64,
    /// `(1 + κ₂(W)^p) · c_tilde_gap`.
    pub bound: f64,
    pub bound_ok: bool,
}

/// Builds the error tensor of one update and checks
/// `‖E‖₂ ≤ (1 + κ₂(W)^p) ‖C̃ − C_*‖₂`.
pub fn error_tensor(
    c_next: &SymTensor,
    c: &SymTensor,
    c_tilde: &SymTensor,
    c_star: &SymTensor,
    w: &DMatrix<f64>,
    s: &DVector<f64>,
) -> Result<ErrorTensorCheck> {
    let p = c.order();
    let w_inv = checked_inverse(w)?;
    if s.len() != w.nrows() {
        return Err(Error::dim("step length does not match weight matrix"));
    }
    let m = w * complement_projector(&(&w_inv * s)) * &w_inv;
    let carried = c.try_sub(c_star)?.apply_matrix_all(&m)?;
    let e = c_next.try_sub(c_star)?.try_sub(&carried)?;

    let opts = InjectiveNormOptions::default();
    let e_norm = e.injective_norm_with(&opts).value;
    let gap_tensor = c_tilde.try_sub(c_star)?;
    let gap_est = gap_tensor.injective_norm_with(&opts);
    let c_tilde_gap = if gap_est.converged {
        gap_est.value
    } else {
        gap_tensor.frob_norm()
    };
    let bound = (1.0 + condition_number(w).powi(p as i32)) * c_tilde_gap;
    Ok(ErrorTensorCheck {
        e_frob: e.frob_norm(),
        bound_ok: e_norm <= bound + 1e-9,
        e,
        e_norm,
        c_tilde_gap,
        bound,
    })
}

/// Angle with the first axis in degrees, folded into `[0, 180)`.
pub fn step_angle_2d(s: &DVector<f64>) -> Result<f64> {
    if s.len() != 2 {
        return Err(Error::dim(format!("angles need 2-vectors, got length {}", s.len())));
    }
    if s[0] == 0.0 && s[1] == 0.0 {
        return Err(Error::arg("step is zero"));
    }
    let deg = s[1].atan2(s[0]).to_degrees().rem_euclid(180.0);
    Ok(if deg >= 180.0 { 0.0 } else { deg })
}

/// Smallest difference between two folded angles, in `[0, 90]`.
pub fn angle_change_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(180.0);
    d.min(180.0 - d)
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct Experiment {
    pub records: Vec<DiagnosticsRecord>,
    pub final_approx: SymTensor,
    /// `C_1 … C_K`, one per record.
    pub history: Vec<SymTensor>,
    pub x_star: DVector<f64>,
    /// `D^p f(x_*)`.
    pub c_star: SymTensor,
}

/// Replays the update along a trace and records metrics after every step.
///
/// A step with a degenerate direction or a zero step is recorded as skipped.
pub fn run_experiment(
    f: &dyn TestFunction,
    trace: &IterateTrace,
    rule: &WeightRule,
    c0: &SymTensor,
    p: usize,
    skip: SkipPolicy,
) -> Result<Experiment> {
    if trace.len() < 2 {
        return Err(Error::arg("the trace has no steps"));
    }
    if p < 2 || f.max_order() < p {
        return Err(Error::arg(format!("order {p} is not available from {}", f.name())));
    }
    if c0.order() != p || c0.dim() != f.dim() || trace.dim() != f.dim() {
        return Err(Error::dim("initial approximation, trace and function differ in shape"));
    }
    let x_star = f.minimizer().unwrap_or_else(|| trace.last().clone());
    let c_star = f.derivative(p, &x_star)?;
    let eps = f64::EPSILON;
    let mut state = UpdateState::new(c0.clone(), skip)?;
    let mut records = Vec::with_capacity(trace.num_steps());
    let mut history = Vec::with_capacity(trace.num_steps());
    let points = trace.points();

    for k in 0..trace.num_steps() {
        let (x, x_next) = (&points[k], &points[k + 1]);
        let s = x_next - x;
        let snorm = s.norm();
        let truth = f.derivative(p, x_next)?;
        let zero_step = snorm == 0.0;
        let dm_ratio = if zero_step { f64::NAN } else { dennis_more(&state.approx, &c_star, &s)? };

        let next = if zero_step {
            state.skipped()
        } else {
            let hi = f.derivative(p - 1, x_next)?;
            let lo = f.derivative(p - 1, x)?;
            let step = StepData {
                rhs: secant_rhs(f, x_next, x, p)?,
                grad_diff: Some(f.gradient(x_next)? - f.gradient(x)?),
                deriv_norms: Some((hi.frob_norm(), lo.frob_norm())),
                x_scale: 1.0 + x.norm(),
                s: s.clone(),
            };
            match update_step(&state, rule, &step) {
                Ok(next) => next,
                Err(Error::DegenerateDirection(_)) => state.skipped(),
                Err(e) => return Err(e),
            }
        };
        state = next;

        records.push(DiagnosticsRecord {
            k: k + 1,
            x_err: (x_next - &x_star).norm(),
            step_norm: snorm,
            rel_frob_err: rel_frob_error(&state.approx, &truth)?.value,
            dm_ratio,
            proxy: if zero_step { f64::INFINITY } else { error_floor_proxy(snorm, eps) },
            angle_deg: if f.dim() == 2 && !zero_step { Some(step_angle_2d(&s)?) } else { None },
            skipped: state.last_skipped,
        });
        history.push(state.approx.clone());
    }
    Ok(Experiment {
        records,
        final_approx: state.approx,
        history,
        x_star,
        c_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::PolynomialOracle;
    use crate::iterates::Provenance;
    use crate::tensor::DenseTensor;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn relative_errors() {
        let t = SymTensor::rank_one(&v(&[1.0, 2.0]), 3);
        assert_eq!(rel_frob_error(&t, &t).unwrap().value, 0.0);
        assert_eq!(rel_frob_error(&SymTensor::zeros(3, 2), &t).unwrap().value, 1.0);
        assert!((rel_frob_error(&t.scaled(2.0), &t).unwrap().value - 1.0).abs() < 1e-15);
        let abs = rel_frob_error(&t, &SymTensor::zeros(3, 2)).unwrap();
        assert!(!abs.relative);
    }

    #[test]
    fn proxy_values() {
        let eps = f64::EPSILON;
        assert_eq!(error_floor_proxy(1.0, eps), 1.0);
        assert!((error_floor_proxy(eps.sqrt(), eps) - eps.sqrt()).abs() < 1e-22);
        assert!((error_floor_proxy(1e-12, eps) - eps / 1e-12).abs() < 1e-18);
    }

    #[test]
    fn angles() {
        assert_eq!(step_angle_2d(&v(&[1.0, 0.0])).unwrap(), 0.0);
        assert!((step_angle_2d(&v(&[-1.0, -1.0])).unwrap() - 45.0).abs() < 1e-12);
        assert!((step_angle_2d(&v(&[0.0, -3.0])).unwrap() - 90.0).abs() < 1e-12);
        assert!(step_angle_2d(&v(&[0.0, 0.0])).is_err());
        assert!((angle_change_deg(179.0, 1.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn projectors_for_identity_weights() {
        let i = DMatrix::identity(3, 3);
        let pr = step_projectors(&i, &i, &v(&[1.0, 0.0, 0.0])).unwrap();
        let expected = DMatrix::from_diagonal(&v(&[0.0, 1.0, 1.0]));
        assert_eq!(pr.current, expected);
        assert_eq!(pr.limit, expected);
        assert_eq!(pr.conjugated, expected);
    }

    #[test]
    fn independence_measure_extremes() {
        let i = DMatrix::identity(2, 2);
        assert!(uniform_independence_measure(&[v(&[1.0, 0.0]), v(&[0.0, 1.0])], &i).unwrap() < 1e-15);
        let same = uniform_independence_measure(&[v(&[1.0, 1.0]), v(&[1.0, 1.0])], &i).unwrap();
        assert!((same - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_point_trace_gives_one_record() {
        let c_star = SymTensor::rank_one(&v(&[1.0, -1.0]), 3);
        let f = PolynomialOracle::new(c_star.into_dense(), vec![]).unwrap();
        let trace = IterateTrace::new(vec![v(&[0.0, 0.0]), v(&[0.5, 0.1])], Provenance::File).unwrap();
        let exp = run_experiment(&f, &trace, &WeightRule::Psb, &SymTensor::zeros(3, 2), 3, SkipPolicy::Disabled).unwrap();
        assert_eq!(exp.records.len(), 1);
        assert!(exp.records[0].angle_deg.is_some());
    }

    #[test]
    fn error_tensor_vanishes_for_exact_average() {
        let c_star = SymTensor::try_from_dense(DenseTensor::new(2, 2, vec![2.0, 1.0, 1.0, 3.0]).unwrap()).unwrap();
        let c = SymTensor::zeros(2, 2);
        let s = v(&[1.0, 0.5]);
        let w = DMatrix::identity(2, 2);
        let c_next = crate::secant::hosu_update_explicit(&c, &s, &s, &c_star.apply_repeated(&s, 1).unwrap()).unwrap();
        let check = error_tensor(&c_next, &c, &c_star, &c_star, &w, &s).unwrap();
        assert!(check.e_frob < 1e-14);
        assert!(check.bound_ok);
    }
}
