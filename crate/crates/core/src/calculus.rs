//! Analytic derivative oracles, segment-averaged derivatives and
//! finite-difference validation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, SymTensor};

/// A smooth function `ℝⁿ → ℝ` with analytic derivatives up to `max_order`.
///
/// `derivative(0, x)` is the function value as an order-0 tensor.
pub trait TestFunction: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn max_order(&self) -> usize;

    /// `D^q f(x)`; symmetric for every `q` and `x`.
    fn derivative(&self, q: usize, x: &DVector<f64>) -> Result<SymTensor>;

    /// Lipschitz constant of `D^p f` in the injective 2-norm, where known.
    fn lipschitz(&self) -> Option<f64> {
        None
    }

    /// Known minimizer, used as `x_*` by the experiment harness.
    fn minimizer(&self) -> Option<DVector<f64>> {
        None
    }

    fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.derivative(0, x)?.entries()[0])
    }

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.derivative(1, x)?.to_vector().expect("order 1"))
    }

    fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.derivative(2, x)?.to_matrix().expect("order 2"))
    }
}

fn check_request(f: &dyn TestFunction, q: usize, x: &DVector<f64>) -> Result<()> {
    if x.len() != f.dim() {
        return Err(Error::dim(format!("point of length {} for a function on ℝ^{}", x.len(), f.dim())));
    }
    if q > f.max_order() {
        return Err(Error::arg(format!(
            "derivative of order {q} requested, {} provides up to {}",
            f.name(),
            f.max_order()
        )));
    }
    Ok(())
}

/// `f(x, y) = (1 − x)² + 100 (y − x²)²` with derivatives through order 3.
#[derive(Debug, Clone, Copy, Default)]
pub struct Rosenbrock;

/// `D³f` depends on `x` only through `∂³f/∂x³ = 2400 x`, so the Lipschitz
/// constant of `D³f` in the injective norm is 2400 on all of ℝ², in
/// particular on `[−2, 2]²`.
pub const ROSENBROCK_LIPSCHITZ_D3: f64 = 2400.0;

pub fn rosenbrock() -> Rosenbrock {
    Rosenbrock
}

impl TestFunction for Rosenbrock {
    fn name(&self) -> &str {
        "rosenbrock"
    }

    fn dim(&self) -> usize {
        2
    }

    fn max_order(&self) -> usize {
        3
    }

    fn derivative(&self, q: usize, p: &DVector<f64>) -> Result<SymTensor> {
        check_request(self, q, p)?;
        let (x, y) = (p[0], p[1]);
        let r = y - x * x;
        let t = match q {
            0 => DenseTensor::scalar((1.0 - x).powi(2) + 100.0 * r * r, 2),
            1 => DenseTensor::from_parts(1, 2, vec![-2.0 * (1.0 - x) - 400.0 * x * r, 200.0 * r]),
            2 => {
                let fxx = 2.0 - 400.0 * y + 1200.0 * x * x;
                let fxy = -400.0 * x;
                DenseTensor::from_parts(2, 2, vec![fxx, fxy, fxy, 200.0])
            }
            3 => DenseTensor::from_parts(3, 2, vec![2400.0 * x, -400.0, -400.0, 0.0, -400.0, 0.0, 0.0, 0.0]),
            _ => unreachable!("checked against max_order"),
        };
        Ok(SymTensor::from_dense_unchecked(t))
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(ROSENBROCK_LIPSCHITZ_D3)
    }

    fn minimizer(&self) -> Option<DVector<f64>> {
        Some(DVector::from_vec(vec![1.0, 1.0]))
    }
}

/// `f(x) = Σ_{k=0}^{p} (1/k!) T_k[x]^k` with symmetric coefficient tensors,
/// so that `D^p f ≡ T_p` everywhere.
#[derive(Debug, Clone)]
pub struct PolynomialOracle {
    /// `terms[k]` has order `k`; missing lower terms are zero.
    terms: Vec<SymTensor>,
    minimizer: Option<DVector<f64>>,
}

impl PolynomialOracle {
    /// `c_star` is the constant top derivative; `lower_terms` may list any
    /// subset of orders `0..p`.
    pub fn new(c_star: DenseTensor, lower_terms: Vec<DenseTensor>) -> Result<Self> {
        let p = c_star.order();
        let n = c_star.dim();
        if p == 0 {
            return Err(Error::arg("polynomial oracle needs a top order of at least 1"));
        }
        let c_star = SymTensor::try_from_dense(c_star)?;
        let mut terms: Vec<Option<SymTensor>> = vec![None; p + 1];
        for t in lower_terms {
            if t.dim() != n {
                return Err(Error::dim(format!("lower term of dimension {} for n = {n}", t.dim())));
            }
            let k = t.order();
            if k >= p {
                return Err(Error::arg(format!("lower term of order {k} is not below {p}")));
            }
            if terms[k].is_some() {
                return Err(Error::arg(format!("two lower terms of order {k}")));
            }
            terms[k] = Some(SymTensor::try_from_dense(t)?);
        }
        terms[p] = Some(c_star);
        let terms = terms
            .into_iter()
            .enumerate()
            .map(|(k, t)| t.unwrap_or_else(|| SymTensor::zeros(k, n)))
            .collect();
        Ok(PolynomialOracle { terms, minimizer: None })
    }

    /// `½ xᵀ A x` for a symmetric matrix `A`.
    pub fn quadratic(a: &DMatrix<f64>) -> Result<Self> {
        let mut q = PolynomialOracle::new(DenseTensor::from_matrix(a)?, Vec::new())?;
        q.minimizer = Some(DVector::zeros(a.nrows()));
        Ok(q)
    }

    /// Declares a known minimizer (not verified).
    pub fn with_minimizer(mut self, x: DVector<f64>) -> Self {
        self.minimizer = Some(x);
        self
    }

    pub fn top(&self) -> &SymTensor {
        self.terms.last().expect("at least one term")
    }

    pub fn order(&self) -> usize {
        self.terms.len() - 1
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

impl TestFunction for PolynomialOracle {
    fn name(&self) -> &str {
        "polynomial"
    }

    fn dim(&self) -> usize {
        self.top().dim()
    }

    fn max_order(&self) -> usize {
        self.order()
    }

    fn derivative(&self, q: usize, x: &DVector<f64>) -> Result<SymTensor> {
        check_request(self, q, x)?;
        let mut acc = DenseTensor::zeros(q, self.dim());
        for (k, term) in self.terms.iter().enumerate().skip(q) {
            let contracted = term.apply_repeated(x, k - q)?;
            acc.axpy(1.0 / factorial(k - q), &contracted);
        }
        Ok(SymTensor::from_dense_unchecked(acc))
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(0.0)
    }

    fn minimizer(&self) -> Option<DVector<f64>> {
        self.minimizer.clone()
    }
}

/// Fixed Gauss–Legendre rule on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSpec {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureSpec {
    pub const DEFAULT_NODES: usize = 16;

    pub fn gauss_legendre(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::arg("quadrature needs at least one node"));
        }
        let (nodes, weights) = gauss_legendre_unit(count);
        Ok(QuadratureSpec { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec::gauss_legendre(Self::DEFAULT_NODES).expect("positive node count")
    }
}

/// Legendre roots by Newton's method from Chebyshev guesses, mapped to [0, 1].
fn gauss_legendre_unit(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(m, x);
        if d != 0.0 {
            dp = d;
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// `(P_m(x), P_m'(x))` by the three-term recurrence.
fn legendre(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `∫₀¹ D^p f(x + t s) dt` by Gauss–Legendre quadrature.
pub fn averaged_derivative(
    f: &dyn TestFunction,
    x: &DVector<f64>,
    s: &DVector<f64>,
    order: usize,
    quad: &QuadratureSpec,
) -> Result<SymTensor> {
    check_request(f, order, x)?;
    if s.len() != x.len() {
        return Err(Error::dim("step and point lengths differ"));
    }
    let mut acc = DenseTensor::zeros(order, f.dim());
    for (&t, &w) in quad.nodes().iter().zip(quad.weights()) {
        let d = f.derivative(order, &(x + s * t))?;
        acc.axpy(w, &d);
    }
    Ok(SymTensor::from_dense_unchecked(acc))
}

/// `D^(p−1) f(x_next) − D^(p−1) f(x)`, the right-hand side of the secant
/// equation and the only derivative information the update consumes.
pub fn secant_rhs(f: &dyn TestFunction, x_next: &DVector<f64>, x: &DVector<f64>, p: usize) -> Result<SymTensor> {
    if p < 2 {
        return Err(Error::arg(format!("secant equation needs p ≥ 2, got {p}")));
    }
    let hi = f.derivative(p - 1, x_next)?;
    let lo = f.derivative(p - 1, x)?;
    hi.try_sub(&lo)
}

/// Largest entrywise gap between `D^q f(x)` and central differences of
/// `D^(q−1) f` with step `h`.
pub fn fd_check(f: &dyn TestFunction, q: usize, x: &DVector<f64>, h: f64) -> Result<f64> {
    if q == 0 {
        return Err(Error::arg("finite-difference check needs q ≥ 1"));
    }
    if !(h > 0.0) {
        return Err(Error::arg("finite-difference step must be positive"));
    }
    check_request(f, q, x)?;
    let n = f.dim();
    let analytic = f.derivative(q, x)?;
    let slice = n.pow((q - 1) as u32);
    let mut worst = 0.0_f64;
    for i in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let hi = f.derivative(q - 1, &xp)?;
        let lo = f.derivative(q - 1, &xm)?;
        let exact = &analytic.entries()[i * slice..(i + 1) * slice];
        for ((a, b), e) in hi.entries().iter().zip(lo.entries()).zip(exact) {
            worst = worst.max(((a - b) / (2.0 * h) - e).abs());
        }
    }
    Ok(worst)
}
