//! Higher-order secant updates.
//!
//! Given a symmetric approximation `C` of `D^p f`, a step `s` and the
//! observed change `D = D^(p−1) f(x + s) − D^(p−1) f(x)`, the update returns
//! the symmetric tensor closest to `C` in the weighted Frobenius norm
//! `‖(· − C)[W]^p‖_F` that satisfies the secant equation `C₊[s] = D`.
//! The weight matrix enters only through `v = W⁻ᵀ W⁻¹ s`, and only up to
//! scale.
//!
//! Four equivalent routes are provided:
//!
//! - [`hosu_update_explicit`]: closed-form alternating sum (production path),
//! - [`low_rank_factor`]: the factor `A` with `C₊ = C + P_sym(A ⊗ v)`,
//! - [`hosu_update_recursive`]: `(C₊ − C̃)[W]^p = (C − C̃)[W]^p [P]^p`,
//! - [`least_change_oracle`]: brute-force KKT solve of the minimization.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::{checked_inverse, complement_projector};
use crate::tensor::{outer, outer_power, DenseTensor, SymTensor};

/// `|vᵀs| ≤ DEGENERATE_TOL · ‖v‖ ‖s‖` is treated as zero.
pub const DEGENERATE_TOL: f64 = 1e-14;

/// Largest `n^p` the dense KKT oracle accepts.
pub const ORACLE_MAX_ENTRIES: usize = 4096;

/// `C(p, j)` as an exact integer.
pub fn binomial(p: usize, j: usize) -> u64 {
    if j > p {
        return 0;
    }
    let j = j.min(p - j);
    (0..j as u64).fold(1, |acc, i| acc * (p as u64 - i) / (i + 1))
}

fn check_update_inputs(c: &SymTensor, s: &DVector<f64>, v: Option<&DVector<f64>>, d: &SymTensor) -> Result<usize> {
    let p = c.order();
    let n = c.dim();
    if p < 2 {
        return Err(Error::arg(format!("updates need order p ≥ 2, got {p}")));
    }
    if d.order() + 1 != p || d.dim() != n {
        return Err(Error::dim(format!(
            "right-hand side has order {} dim {}, expected order {} dim {n}",
            d.order(),
            d.dim(),
            p - 1
        )));
    }
    if s.len() != n || v.is_some_and(|v| v.len() != n) {
        return Err(Error::dim(format!("step or direction length differs from dimension {n}")));
    }
    if s.iter().all(|&x| x == 0.0) {
        return Err(Error::arg("step is zero"));
    }
    Ok(p)
}

fn checked_denominator(s: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    let vs = v.dot(s);
    let threshold = DEGENERATE_TOL * v.norm() * s.norm();
    if !(vs.abs() > threshold) {
        return Err(Error::DegenerateDirection(format!("|vᵀs| = {:e} ≤ {threshold:e}", vs.abs())));
    }
    Ok(vs)
}

/// `D − C[s]`, the part of the secant equation `C` fails to reproduce.
pub fn secant_residual(c: &SymTensor, s: &DVector<f64>, d: &SymTensor) -> Result<SymTensor> {
    check_update_inputs(c, s, None, d)?;
    d.try_sub(&c.apply_repeated(s, 1)?)
}

/// Unsymmetrized sum `Σⱼ (−1)^(j+1) C(p,j) (vᵀs)^(−j) (⊗^(j−lead) v) ⊗ R[s]^(j−1)`
/// with `lead ∈ {0, 1}` selecting the full update or its factor.
fn alternating_sum(p: usize, s: &DVector<f64>, v: &DVector<f64>, vs: f64, residual: &SymTensor, lead: usize) -> DenseTensor {
    let n = s.len();
    let mut acc = DenseTensor::zeros(p - lead, n);
    let mut r = residual.as_dense().clone();
    for j in 1..=p {
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        let coef = sign * binomial(p, j) as f64 / vs.powi(j as i32);
        let vpow = outer_power(v, j - lead);
        let term = outer(&[&vpow, &r]).expect("matching dimensions");
        acc.axpy(coef, &term);
        if j < p {
            r = r.apply_repeated(s, 1).expect("matching dimensions");
        }
    }
    acc
}

/// Explicit form of the update:
///
/// `C₊ = C + Σ_{j=1}^{p} (−1)^(j+1) C(p,j) (vᵀs)^(−j) P_sym((⊗ʲ v) ⊗ (D − C[s])[s]^(j−1))`.
///
/// The sum is accumulated term by term and projected once at the end.
pub fn hosu_update_explicit(c: &SymTensor, s: &DVector<f64>, v: &DVector<f64>, d: &SymTensor) -> Result<SymTensor> {
    let p = check_update_inputs(c, s, Some(v), d)?;
    let vs = checked_denominator(s, v)?;
    let residual = d.try_sub(&c.apply_repeated(s, 1)?)?;
    let update = alternating_sum(p, s, v, vs, &residual, 0).sym_project();
    c.try_add(&update)
}

/// The unique symmetric `(p−1)`-tensor `A` with
/// `hosu_update_explicit(C, s, v, D) = C + P_sym(A ⊗ v)`.
pub fn low_rank_factor(c: &SymTensor, s: &DVector<f64>, v: &DVector<f64>, d: &SymTensor) -> Result<SymTensor> {
    let p = check_update_inputs(c, s, Some(v), d)?;
    let vs = checked_denominator(s, v)?;
    let residual = d.try_sub(&c.apply_repeated(s, 1)?)?;
    Ok(alternating_sum(p, s, v, vs, &residual, 1).sym_project())
}

/// `P_sym(A ⊗ v)`.
pub fn factor_update(a: &SymTensor, v: &DVector<f64>) -> Result<SymTensor> {
    if a.dim() != v.len() {
        return Err(Error::dim("factor and direction dimensions differ"));
    }
    Ok(outer(&[a.as_dense(), &DenseTensor::from_vector(v)])?.sym_project())
}

/// Solves `P_sym(A ⊗ v)[s] = target` for symmetric `A` as a linear system in
/// a basis of symmetric tensors. The map is a bijection whenever `vᵀs ≠ 0`.
pub fn solve_low_rank_factor(s: &DVector<f64>, v: &DVector<f64>, target: &SymTensor) -> Result<SymTensor> {
    let n = s.len();
    if v.len() != n || target.dim() != n {
        return Err(Error::dim("step, direction and target dimensions differ"));
    }
    checked_denominator(s, v)?;
    let k = target.order();
    let basis = SymBasis::new(k, n);
    let mut m = DMatrix::zeros(basis.len(), basis.len());
    for (col, b) in basis.tensors().iter().enumerate() {
        let image = factor_update(b, v)?.apply_repeated(s, 1)?;
        m.set_column(col, &basis.coordinates(&image));
    }
    let rhs = basis.coordinates(target);
    let coords = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Solve("factor map is singular".into()))?;
    Ok(basis.combine(&coords))
}

/// Recursive form: `C₊ = C̃ + (C − C̃)[W]^p [P]^p [W⁻¹]^p` with
/// `P = I − W⁻¹s sᵀW⁻ᵀ / (sᵀW⁻ᵀW⁻¹s)`.
pub fn hosu_update_recursive(c: &SymTensor, c_tilde: &SymTensor, w: &DMatrix<f64>, s: &DVector<f64>) -> Result<SymTensor> {
    let n = c.dim();
    if c_tilde.order() != c.order() || c_tilde.dim() != n {
        return Err(Error::dim("current and averaged tensors differ in shape"));
    }
    if w.nrows() != n || s.len() != n {
        return Err(Error::dim(format!("weight matrix or step does not match dimension {n}")));
    }
    if s.iter().all(|&x| x == 0.0) {
        return Err(Error::arg("step is zero"));
    }
    let w_inv = checked_inverse(w)?;
    let proj = complement_projector(&(&w_inv * s));
    let gap = c.try_sub(c_tilde)?;
    let moved = gap
        .apply_matrix_all(w)?
        .apply_matrix_all(&proj)?
        .apply_matrix_all(&w_inv)?;
    Ok(c_tilde.as_dense().try_add(&moved)?.sym_project())
}

/// `v = W⁻ᵀ W⁻¹ s`.
pub fn weight_direction(w: &DMatrix<f64>, s: &DVector<f64>) -> Result<DVector<f64>> {
    let w_inv = checked_inverse(w)?;
    if s.len() != w.nrows() {
        return Err(Error::dim("step length does not match weight matrix"));
    }
    Ok(w_inv.transpose() * (&w_inv * s))
}

/// Brute-force least-change update:
/// `argmin ‖(X − C)[W]^p‖_F` over symmetric `X` subject to `X[s] = rhs`.
///
/// Parametrizes `X − C` in the basis of symmetric tensors and solves the
/// KKT system of the equality-constrained quadratic program. Independent of
/// the closed forms; meant as a test oracle at desk scale.
pub fn least_change_oracle(c: &SymTensor, s: &DVector<f64>, w: &DMatrix<f64>, rhs: &SymTensor) -> Result<SymTensor> {
    let p = check_update_inputs(c, s, None, rhs)?;
    let n = c.dim();
    if c.len() > ORACLE_MAX_ENTRIES {
        return Err(Error::Scale(format!("n^p = {} exceeds {ORACLE_MAX_ENTRIES}", c.len())));
    }
    if w.nrows() != n || w.ncols() != n {
        return Err(Error::dim(format!("weight matrix is not {n}×{n}")));
    }
    let w_inv = checked_inverse(w)?;

    // Unknown is `Y = (C₊ − C)[W]^p`, so the objective is `‖Y‖_F²` and
    // `C₊ − C = Y[W⁻¹]^p`.
    let basis = SymBasis::new(p, n);
    let rows = SymBasis::new(p - 1, n);
    let nb = basis.len();
    let nr = rows.len();

    let pulled: Vec<SymTensor> = basis
        .tensors()
        .iter()
        .map(|b| b.apply_matrix_all(&w_inv))
        .collect::<Result<_>>()?;
    let mut gram = DMatrix::zeros(nb, nb);
    for (i, b) in basis.tensors().iter().enumerate() {
        gram[(i, i)] = b.frob_norm().powi(2);
    }
    let mut cons = DMatrix::zeros(nr, nb);
    for (col, b) in pulled.iter().enumerate() {
        cons.set_column(col, &rows.coordinates(&b.apply_repeated(s, 1)?));
    }
    let target = rows.coordinates(&secant_residual(c, s, rhs)?);

    // Rescale both blocks; the minimizer is unchanged.
    let gscale = gram.abs().max().max(f64::MIN_POSITIVE);
    let cscale = cons.abs().max();
    if cscale == 0.0 {
        return Err(Error::Solve("constraint matrix vanishes".into()));
    }
    let mut kkt = DMatrix::zeros(nb + nr, nb + nr);
    kkt.view_mut((0, 0), (nb, nb)).copy_from(&(gram * (2.0 / gscale)));
    let cons = cons / cscale;
    kkt.view_mut((nb, 0), (nr, nb)).copy_from(&cons);
    kkt.view_mut((0, nb), (nb, nr)).copy_from(&cons.transpose());
    let mut b = DVector::zeros(nb + nr);
    b.rows_mut(nb, nr).copy_from(&(target / cscale));

    let sv = kkt.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if !(smin > 1e-13 * smax) {
        return Err(Error::Solve(format!("KKT matrix is rank deficient (σ_min/σ_max = {:e})", smin / smax)));
    }
    let lu = kkt.clone().lu();
    let mut sol = lu
        .solve(&b)
        .ok_or_else(|| Error::Solve("KKT factorization failed".into()))?;
    // One step of iterative refinement.
    if let Some(correction) = lu.solve(&(&b - &kkt * &sol)) {
        sol += correction;
    }
    let mut update = DenseTensor::zeros(p, n);
    for (y, t) in sol.rows(0, nb).iter().zip(&pulled) {
        update.axpy(*y, t.as_dense());
    }
    c.try_add(&SymTensor::from_dense_unchecked(update))
}

/// SR1-style direction: the unit `v` maximizing `|⟨R, ⊗^(p−1) v⟩|` for the
/// residual `R = (C̃ − C)[s]` of order `p − 1`.
///
/// For `p = 2` this is `R/‖R‖`. For `p = 3` it is the eigenvector of the
/// largest-magnitude eigenvalue, with ties broken towards the candidate that
/// is lexicographically largest once its first nonzero component is made
/// positive. Higher orders are rejected.
pub fn sr1_direction(residual: &SymTensor) -> Result<DVector<f64>> {
    match residual.order() {
        1 => {
            let r = residual.to_vector().expect("order 1");
            let norm = r.norm();
            if norm == 0.0 {
                return Err(Error::DegenerateDirection("secant residual is zero".into()));
            }
            Ok(r / norm)
        }
        2 => {
            if residual.max_abs() == 0.0 {
                return Err(Error::DegenerateDirection("secant residual is zero".into()));
            }
            let eig = SymmetricEigen::new(residual.to_matrix().expect("order 2"));
            let top = eig.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
            let tie = 1e-12 * top;
            let mut best: Option<DVector<f64>> = None;
            for (i, l) in eig.eigenvalues.iter().enumerate() {
                if top - l.abs() > tie {
                    continue;
                }
                let cand = canonical_sign(eig.eigenvectors.column(i).into_owned());
                best = match best {
                    Some(b) if !lexicographically_greater(&cand, &b) => Some(b),
                    _ => Some(cand),
                };
            }
            Ok(best.expect("at least one eigenvalue attains the maximum"))
        }
        order => Err(Error::UnsupportedOrder(order + 1)),
    }
}

fn canonical_sign(v: DVector<f64>) -> DVector<f64> {
    let scale = v.amax();
    match v.iter().find(|x| x.abs() > 1e-12 * scale) {
        Some(&first) if first < 0.0 => -v,
        _ => v,
    }
}

fn lexicographically_greater(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        if (x - y).abs() > 1e-12 {
            return x > y;
        }
    }
    false
}

/// How the update direction `v` is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightRule {
    /// `v = s` (`W = I`).
    Psb,
    /// `v = (∇f(x₊) − ∇f(x)) / ‖s‖`.
    Dfp,
    /// `v` aligned with the secant residual, see [`sr1_direction`].
    Sr1Aligned,
    /// `v = W⁻ᵀ W⁻¹ s` for a fixed nonsingular `W`.
    ExplicitMatrix(DMatrix<f64>),
}

impl WeightRule {
    pub fn name(&self) -> &'static str {
        match self {
            WeightRule::Psb => "psb",
            WeightRule::Dfp => "dfp",
            WeightRule::Sr1Aligned => "sr1",
            WeightRule::ExplicitMatrix(_) => "matrix",
        }
    }

    /// Direction for one update. `approx` is the current approximation,
    /// needed by the SR1-aligned rule.
    pub fn direction(&self, approx: &SymTensor, step: &StepData) -> Result<DVector<f64>> {
        let s = &step.s;
        match self {
            WeightRule::Psb => Ok(s.clone()),
            WeightRule::Dfp => {
                let y = step
                    .grad_diff
                    .as_ref()
                    .ok_or_else(|| Error::arg("the DFP rule needs the gradient difference"))?;
                Ok(y / s.norm())
            }
            WeightRule::Sr1Aligned => {
                let v = sr1_direction(&secant_residual(approx, s, &step.rhs)?)?;
                Ok(if v.dot(s) < 0.0 { -v } else { v })
            }
            WeightRule::ExplicitMatrix(w) => weight_direction(w, s),
        }
    }
}

/// Everything one update consumes.
#[derive(Debug, Clone)]
pub struct StepData {
    pub s: DVector<f64>,
    /// `D^(p−1) f(x₊) − D^(p−1) f(x)`.
    pub rhs: SymTensor,
    /// `∇f(x₊) − ∇f(x)`, for the DFP rule.
    pub grad_diff: Option<DVector<f64>>,
    /// `(‖D^(p−1) f(x₊)‖_F, ‖D^(p−1) f(x)‖_F)`, for the skip test.
    pub deriv_norms: Option<(f64, f64)>,
    /// `1 + ‖x‖`, scale of the absolute step floor.
    pub x_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SkipPolicy {
    Disabled,
    Enabled { tau_rel: f64, eps_mach: f64 },
}

impl SkipPolicy {
    /// `τ_rel = 1` at double precision.
    pub fn standard() -> Self {
        SkipPolicy::Enabled {
            tau_rel: 1.0,
            eps_mach: f64::EPSILON,
        }
    }
}

/// Rounding-noise test for the secant right-hand side.
///
/// Skips when `‖s‖ < √ε · x_scale`, or when the modeled cancellation error
/// of `D/‖s‖`, `√2 ε (‖D^(p−1)f(x₊)‖_F + ‖D^(p−1)f(x)‖_F) / ‖s‖`, exceeds
/// `τ_rel` times the signal `‖D‖_F / ‖s‖`.
pub fn should_skip(
    s: &DVector<f64>,
    d: &SymTensor,
    prev_deriv_norms: (f64, f64),
    eps_mach: f64,
    tau_rel: f64,
    x_scale: f64,
) -> bool {
    let snorm = s.norm();
    if snorm < eps_mach.sqrt() * x_scale {
        return true;
    }
    let noise = std::f64::consts::SQRT_2 * eps_mach * (prev_deriv_norms.0 + prev_deriv_norms.1) / snorm;
    let signal = d.frob_norm() / snorm;
    noise > tau_rel * signal
}

/// Approximation state carried across updates. Updates return a new state.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateState {
    pub approx: SymTensor,
    pub k: usize,
    pub skip: SkipPolicy,
    pub last_skipped: bool,
}

impl UpdateState {
    pub fn new(c0: SymTensor, skip: SkipPolicy) -> Result<Self> {
        if c0.order() < 2 {
            return Err(Error::arg("approximations need order p ≥ 2"));
        }
        Ok(UpdateState {
            approx: c0,
            k: 0,
            skip,
            last_skipped: false,
        })
    }

    pub fn order(&self) -> usize {
        self.approx.order()
    }

    pub fn dim(&self) -> usize {
        self.approx.dim()
    }

    /// The state after a step that leaves the approximation untouched.
    pub fn skipped(&self) -> UpdateState {
        UpdateState {
            approx: self.approx.clone(),
            k: self.k + 1,
            skip: self.skip,
            last_skipped: true,
        }
    }
}

/// One step of the update sequence: apply the skip test, then the explicit
/// update with the rule's direction.
pub fn update_step(state: &UpdateState, rule: &WeightRule, step: &StepData) -> Result<UpdateState> {
    if let (SkipPolicy::Enabled { tau_rel, eps_mach }, Some(norms)) = (state.skip, step.deriv_norms) {
        if should_skip(&step.s, &step.rhs, norms, eps_mach, tau_rel, step.x_scale) {
            return Ok(state.skipped());
        }
    }
    let v = rule.direction(&state.approx, step)?;
    let approx = hosu_update_explicit(&state.approx, &step.s, &v, &step.rhs)?;
    Ok(UpdateState {
        approx,
        k: state.k + 1,
        skip: state.skip,
        last_skipped: false,
    })
}

/// Basis of symmetric `k`-tensors indexed by non-decreasing multi-indices.
/// Basis element `α` has ones at every permutation of `α`, so the
/// coordinate of a symmetric tensor is its entry at `α`.
pub(crate) struct SymBasis {
    order: usize,
    dim: usize,
    indices: Vec<Vec<usize>>,
    tensors: Vec<SymTensor>,
}

impl SymBasis {
    pub(crate) fn new(order: usize, dim: usize) -> Self {
        let mut indices = Vec::new();
        let mut cur = vec![0; order];
        loop {
            indices.push(cur.clone());
            // Next non-decreasing multi-index.
            let Some(pos) = (0..order).rev().find(|&i| cur[i] + 1 < dim) else {
                break;
            };
            let next = cur[pos] + 1;
            for slot in &mut cur[pos..] {
                *slot = next;
            }
        }
        let tensors = indices
            .iter()
            .map(|alpha| {
                let mut t = DenseTensor::zeros(order, dim);
                let mut entries = t.clone().into_entries();
                for (off, entry) in entries.iter_mut().enumerate() {
                    let mut idx = t.multi_index(off);
                    idx.sort_unstable();
                    if &idx == alpha {
                        *entry = 1.0;
                    }
                }
                t = DenseTensor::from_parts(order, dim, entries);
                SymTensor::from_dense_unchecked(t)
            })
            .collect();
        SymBasis {
            order,
            dim,
            indices,
            tensors,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.indices.len()
    }

    pub(crate) fn tensors(&self) -> &[SymTensor] {
        &self.tensors
    }

    pub(crate) fn coordinates(&self, t: &SymTensor) -> DVector<f64> {
        debug_assert_eq!((t.order(), t.dim()), (self.order, self.dim));
        DVector::from_iterator(self.len(), self.indices.iter().map(|alpha| t.get(alpha)))
    }

    pub(crate) fn combine(&self, coords: &DVector<f64>) -> SymTensor {
        let mut acc = DenseTensor::zeros(self.order, self.dim);
        for (c, b) in coords.iter().zip(&self.tensors) {
            acc.axpy(*c, b.as_dense());
        }
        SymTensor::from_dense_unchecked(acc)
    }
}
