//! Dense tensor algebra for small orders and dimensions.
//!
//! A `p`-tensor over `ℝⁿ` is stored as a flat row-major array of `nᵖ`
//! entries: the multi-index `(i₁, …, i_p)` lives at offset
//! `Σ i_j · n^(p−j)` (zero-based). Order-0 tensors hold a single scalar and
//! show up as the result of contracting every mode.
//!
//! [`SymTensor`] wraps a [`DenseTensor`] whose entries are invariant under
//! every permutation of the modes. Storage is not packed; symmetry is an
//! invariant checked on construction.

use std::fmt;
use std::ops::{Add, Deref, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance of the symmetry invariant.
pub const SYMMETRY_TOL: f64 = 1e-13;

/// Default relative cutoff for numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

fn checked_len(order: usize, dim: usize) -> Result<usize> {
    u32::try_from(order)
        .ok()
        .and_then(|o| dim.checked_pow(o))
        .ok_or_else(|| Error::arg(format!("tensor of order {order} and dimension {dim} is too large")))
}

#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor", into = "RawTensor")]
pub struct DenseTensor {
    order: usize,
    dim: usize,
    entries: Vec<f64>,
}

/// Wire form: `{"order": p, "dim": n, "entries": [...]}`.
#[derive(Serialize, Deserialize)]
struct RawTensor {
    order: usize,
    dim: usize,
    entries: Vec<f64>,
}

impl TryFrom<RawTensor> for DenseTensor {
    type Error = Error;

    fn try_from(raw: RawTensor) -> Result<Self> {
        DenseTensor::new(raw.order, raw.dim, raw.entries)
    }
}

impl From<DenseTensor> for RawTensor {
    fn from(t: DenseTensor) -> Self {
        RawTensor {
            order: t.order,
            dim: t.dim,
            entries: t.entries,
        }
    }
}

impl fmt::Debug for DenseTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DenseTensor")
            .field("order", &self.order)
            .field("dim", &self.dim)
            .field("entries", &self.entries)
            .finish()
    }
}

impl DenseTensor {
    pub fn new(order: usize, dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("tensor dimension must be positive"));
        }
        let len = checked_len(order, dim)?;
        if entries.len() != len {
            return Err(Error::dim(format!(
                "order {order}, dimension {dim} needs {len} entries, got {}",
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|e| !e.is_finite()) {
            return Err(Error::arg(format!("non-finite tensor entry {bad}")));
        }
        Ok(DenseTensor { order, dim, entries })
    }

    /// Internal constructor for results of operations on valid tensors.
    pub(crate) fn from_parts(order: usize, dim: usize, entries: Vec<f64>) -> Self {
        debug_assert_eq!(entries.len(), dim.pow(order as u32));
        DenseTensor { order, dim, entries }
    }

    pub fn zeros(order: usize, dim: usize) -> Self {
        DenseTensor::from_parts(order, dim, vec![0.0; dim.pow(order as u32)])
    }

    pub fn scalar(value: f64, dim: usize) -> Self {
        DenseTensor::from_parts(0, dim, vec![value])
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        DenseTensor::from_parts(1, v.len(), v.iter().copied().collect())
    }

    /// Row-major copy of a square matrix as a 2-tensor.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::dim(format!("matrix {}×{} is not square", m.nrows(), m.ncols())));
        }
        let n = m.nrows();
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(m[(i, j)]);
            }
        }
        DenseTensor::new(2, n, entries)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn into_entries(self) -> Vec<f64> {
        self.entries
    }

    /// Value of an order-0 tensor.
    pub fn as_scalar(&self) -> Option<f64> {
        (self.order == 0).then(|| self.entries[0])
    }

    pub fn to_vector(&self) -> Option<DVector<f64>> {
        (self.order == 1).then(|| DVector::from_column_slice(&self.entries))
    }

    pub fn to_matrix(&self) -> Option<DMatrix<f64>> {
        (self.order == 2).then(|| DMatrix::from_row_slice(self.dim, self.dim, &self.entries))
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.order);
        index.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn multi_index(&self, mut offset: usize) -> Vec<usize> {
        let mut index = vec![0; self.order];
        for slot in index.iter_mut().rev() {
            *slot = offset % self.dim;
            offset /= self.dim;
        }
        index
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.entries[self.offset(index)]
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.abs()))
    }

    fn check_same_shape(&self, other: &DenseTensor) -> Result<()> {
        if self.order != other.order || self.dim != other.dim {
            return Err(Error::dim(format!(
                "shapes differ: order {} dim {} vs order {} dim {}",
                self.order, self.dim, other.order, other.dim
            )));
        }
        Ok(())
    }

    fn check_vector(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::dim(format!(
                "vector of length {} applied to tensor of dimension {}",
                v.len(),
                self.dim
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, alpha: f64) -> DenseTensor {
        DenseTensor::from_parts(self.order, self.dim, self.entries.iter().map(|e| alpha * e).collect())
    }

    pub fn try_add(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.check_same_shape(other)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn try_sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.check_same_shape(other)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    /// `self += alpha * other`.
    pub(crate) fn axpy(&mut self, alpha: f64, other: &DenseTensor) {
        debug_assert_eq!(self.entries.len(), other.entries.len());
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            *a += alpha * b;
        }
    }

    fn zip_with(&self, other: &DenseTensor, f: impl Fn(f64, f64) -> f64) -> DenseTensor {
        DenseTensor::from_parts(
            self.order,
            self.dim,
            self.entries.iter().zip(&other.entries).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    /// Contracts a single mode with `v`, producing an order `p − 1` tensor.
    pub fn contract_mode(&self, v: &DVector<f64>, mode: usize) -> Result<DenseTensor> {
        self.check_vector(v)?;
        if mode >= self.order {
            return Err(Error::arg(format!("mode {mode} out of range for order {}", self.order)));
        }
        Ok(self.contract_mode_unchecked(v.as_slice(), mode))
    }

    fn contract_mode_unchecked(&self, v: &[f64], mode: usize) -> DenseTensor {
        let n = self.dim;
        let outer = n.pow(mode as u32);
        let inner = n.pow((self.order - 1 - mode) as u32);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for (i, &vi) in v.iter().enumerate() {
                if vi == 0.0 {
                    continue;
                }
                let base = (o * n + i) * inner;
                let dst = &mut out[o * inner..(o + 1) * inner];
                for (d, &t) in dst.iter_mut().zip(&self.entries[base..base + inner]) {
                    *d += vi * t;
                }
            }
        }
        DenseTensor::from_parts(self.order - 1, n, out)
    }

    /// Multilinear contraction of the listed modes with the paired vectors.
    ///
    /// Remaining modes keep their relative order. Contracting every mode
    /// yields an order-0 tensor holding `T[s₁, …, s_p]`.
    pub fn apply_vectors(&self, vs: &[DVector<f64>], modes: &[usize]) -> Result<DenseTensor> {
        if vs.len() != modes.len() {
            return Err(Error::arg(format!("{} vectors for {} modes", vs.len(), modes.len())));
        }
        if vs.len() > self.order {
            return Err(Error::arg(format!(
                "cannot apply {} vectors to a tensor of order {}",
                vs.len(),
                self.order
            )));
        }
        let mut pairs: Vec<(usize, &DVector<f64>)> = modes.iter().copied().zip(vs).collect();
        pairs.sort_by_key(|pair| std::cmp::Reverse(pair.0));
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::arg(format!("mode {} listed twice", w[0].0)));
            }
        }
        for (mode, v) in &pairs {
            self.check_vector(v)?;
            if *mode >= self.order {
                return Err(Error::arg(format!("mode {mode} out of range for order {}", self.order)));
            }
        }
        // Highest mode first so lower mode numbers stay valid.
        let mut t = self.clone();
        for (mode, v) in pairs {
            t = t.contract_mode_unchecked(v.as_slice(), mode);
        }
        Ok(t)
    }

    /// Applies `v` to the last `q` modes, i.e. `T[v]^q`.
    pub fn apply_repeated(&self, v: &DVector<f64>, q: usize) -> Result<DenseTensor> {
        self.check_vector(v)?;
        if q > self.order {
            return Err(Error::arg(format!("cannot apply {q} vectors to order {}", self.order)));
        }
        let mut t = self.clone();
        for _ in 0..q {
            let last = t.order - 1;
            t = t.contract_mode_unchecked(v.as_slice(), last);
        }
        Ok(t)
    }

    /// `T[s₁, …, s_p]` for a full set of vectors.
    pub fn evaluate(&self, vs: &[DVector<f64>]) -> Result<f64> {
        if vs.len() != self.order {
            return Err(Error::arg(format!("expected {} vectors, got {}", self.order, vs.len())));
        }
        let modes: Vec<usize> = (0..self.order).collect();
        Ok(self.apply_vectors(vs, &modes)?.entries[0])
    }

    /// Mode product with `wᵀ`: `R[…, j, …] = Σᵢ w[i, j] T[…, i, …]`.
    fn mode_product_unchecked(&self, w: &DMatrix<f64>, mode: usize) -> DenseTensor {
        let n = self.dim;
        let outer = n.pow(mode as u32);
        let inner = n.pow((self.order - 1 - mode) as u32);
        let mut out = vec![0.0; self.entries.len()];
        for o in 0..outer {
            for j in 0..n {
                let dst_base = (o * n + j) * inner;
                for i in 0..n {
                    let wij = w[(i, j)];
                    if wij == 0.0 {
                        continue;
                    }
                    let src_base = (o * n + i) * inner;
                    for r in 0..inner {
                        out[dst_base + r] += wij * self.entries[src_base + r];
                    }
                }
            }
        }
        DenseTensor::from_parts(self.order, n, out)
    }

    /// `T[W₁, …, W_p]`, defined by `T[W₁, …, W_p][s₁, …, s_p] = T[W₁s₁, …, W_p s_p]`.
    pub fn apply_matrices(&self, ws: &[DMatrix<f64>]) -> Result<DenseTensor> {
        if ws.len() != self.order {
            return Err(Error::arg(format!("expected {} matrices, got {}", self.order, ws.len())));
        }
        for w in ws {
            if w.nrows() != self.dim || w.ncols() != self.dim {
                return Err(Error::dim(format!(
                    "matrix {}×{} applied to tensor of dimension {}",
                    w.nrows(),
                    w.ncols(),
                    self.dim
                )));
            }
        }
        let mut t = self.clone();
        for (mode, w) in ws.iter().enumerate() {
            t = t.mode_product_unchecked(w, mode);
        }
        Ok(t)
    }

    /// `T[W]^p`.
    pub fn apply_matrix_all(&self, w: &DMatrix<f64>) -> Result<DenseTensor> {
        let ws = vec![w.clone(); self.order];
        self.apply_matrices(&ws)
    }

    /// `σ(T)`, with `σ(T)[s₁, …, s_p] = T[s_σ(1), …, s_σ(p)]`.
    pub fn permute(&self, perm: &Permutation) -> Result<DenseTensor> {
        if perm.len() != self.order {
            return Err(Error::arg(format!(
                "permutation of length {} for tensor of order {}",
                perm.len(),
                self.order
            )));
        }
        let mut out = vec![0.0; self.entries.len()];
        let mut src = vec![0; self.order];
        for (offset, slot) in out.iter_mut().enumerate() {
            let index = self.multi_index(offset);
            for (k, s) in src.iter_mut().enumerate() {
                *s = index[perm.map[k]];
            }
            *slot = self.get(&src);
        }
        Ok(DenseTensor::from_parts(self.order, self.dim, out))
    }

    /// Average of `σ(T)` over all mode permutations.
    pub fn sym_project(&self) -> SymTensor {
        if self.order < 2 {
            return SymTensor(self.clone());
        }
        let perms = Permutation::all(self.order);
        let mut acc = DenseTensor::zeros(self.order, self.dim);
        for perm in &perms {
            let permuted = self.permute(perm).expect("permutation length matches order");
            acc.axpy(1.0, &permuted);
        }
        SymTensor(acc.scaled(1.0 / perms.len() as f64))
    }

    pub fn frob_inner(&self, other: &DenseTensor) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self.entries.iter().zip(&other.entries).map(|(a, b)| a * b).sum())
    }

    pub fn frob_norm(&self) -> f64 {
        self.entries.iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if self.order < 2 {
            return true;
        }
        let tol = rel_tol * self.max_abs().max(1.0);
        // Adjacent transpositions generate the symmetric group.
        (0..self.order - 1).all(|k| {
            let mut map: Vec<usize> = (0..self.order).collect();
            map.swap(k, k + 1);
            let swapped = self.permute(&Permutation { map }).expect("valid permutation");
            swapped
                .entries
                .iter()
                .zip(&self.entries)
                .all(|(a, b)| (a - b).abs() <= tol)
        })
    }

    /// Mode-`m` unfolding: an `n × n^(p−1)` matrix whose rows are indexed by
    /// the `m`-th index and whose columns run over the remaining indices in
    /// row-major order.
    pub fn unfold(&self, mode: usize) -> Result<DMatrix<f64>> {
        if mode >= self.order {
            return Err(Error::arg(format!("mode {mode} out of range for order {}", self.order)));
        }
        let n = self.dim;
        let cols = n.pow((self.order - 1) as u32);
        let mut m = DMatrix::zeros(n, cols);
        for (offset, &value) in self.entries.iter().enumerate() {
            let index = self.multi_index(offset);
            let col = index
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != mode)
                .fold(0, |acc, (_, &i)| acc * n + i);
            m[(index[mode], col)] = value;
        }
        Ok(m)
    }

    /// Multilinear (Tucker) rank: numerical rank of each mode unfolding,
    /// counting singular values above `tol · σ_max`.
    pub fn mode_ranks(&self, tol: f64) -> Result<Vec<usize>> {
        if !(tol > 0.0) {
            return Err(Error::arg("rank tolerance must be positive"));
        }
        (0..self.order)
            .map(|mode| {
                let sv = self.unfold(mode)?.singular_values();
                let max = sv.iter().fold(0.0_f64, |m, &s| m.max(s));
                if max == 0.0 {
                    return Ok(0);
                }
                Ok(sv.iter().filter(|&&s| s > tol * max).count())
            })
            .collect()
    }
}

/// Outer product of tensors sharing a dimension; orders add up.
pub fn outer(factors: &[&DenseTensor]) -> Result<DenseTensor> {
    let first = factors.first().ok_or_else(|| Error::arg("outer product of no factors"))?;
    let dim = first.dim;
    let mut acc = DenseTensor::scalar(1.0, dim);
    for f in factors {
        if f.dim != dim {
            return Err(Error::dim(format!("outer product mixes dimensions {dim} and {}", f.dim)));
        }
        let mut entries = Vec::with_capacity(acc.entries.len() * f.entries.len());
        for &a in &acc.entries {
            entries.extend(f.entries.iter().map(|&b| a * b));
        }
        acc = DenseTensor::from_parts(acc.order + f.order, dim, entries);
    }
    Ok(acc)
}

/// `⊗^p v`.
pub fn outer_power(v: &DVector<f64>, p: usize) -> DenseTensor {
    let factor = DenseTensor::from_vector(v);
    let mut acc = DenseTensor::scalar(1.0, v.len());
    for _ in 0..p {
        acc = outer(&[&acc, &factor]).expect("same dimension");
    }
    acc
}

impl Add for &DenseTensor {
    type Output = DenseTensor;

    fn add(self, rhs: &DenseTensor) -> DenseTensor {
        self.try_add(rhs).expect("tensor shapes must match")
    }
}

impl Sub for &DenseTensor {
    type Output = DenseTensor;

    fn sub(self, rhs: &DenseTensor) -> DenseTensor {
        self.try_sub(rhs).expect("tensor shapes must match")
    }
}

impl Mul<&DenseTensor> for f64 {
    type Output = DenseTensor;

    fn mul(self, rhs: &DenseTensor) -> DenseTensor {
        rhs.scaled(self)
    }
}

impl Neg for &DenseTensor {
    type Output = DenseTensor;

    fn neg(self) -> DenseTensor {
        self.scaled(-1.0)
    }
}

/// A bijection on `{0, …, p−1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &m in &map {
            if m >= map.len() || std::mem::replace(&mut seen[m], true) {
                return Err(Error::arg(format!("{map:?} is not a permutation")));
            }
        }
        Ok(Permutation { map })
    }

    pub fn identity(p: usize) -> Self {
        Permutation { map: (0..p).collect() }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    /// All `p!` permutations in lexicographic order.
    pub fn all(p: usize) -> Vec<Permutation> {
        fn extend(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Permutation>) {
            if prefix.len() == used.len() {
                out.push(Permutation { map: prefix.clone() });
                return;
            }
            for i in 0..used.len() {
                if !used[i] {
                    used[i] = true;
                    prefix.push(i);
                    extend(prefix, used, out);
                    prefix.pop();
                    used[i] = false;
                }
            }
        }
        let mut out = Vec::new();
        extend(&mut Vec::with_capacity(p), &mut vec![false; p], &mut out);
        out
    }
}

/// A tensor invariant under every permutation of its modes.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DenseTensor", into = "DenseTensor")]
pub struct SymTensor(DenseTensor);

impl fmt::Debug for SymTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymTensor")
            .field("order", &self.0.order)
            .field("dim", &self.0.dim)
            .field("entries", &self.0.entries)
            .finish()
    }
}

impl TryFrom<DenseTensor> for SymTensor {
    type Error = Error;

    fn try_from(t: DenseTensor) -> Result<Self> {
        SymTensor::try_from_dense(t)
    }
}

impl From<SymTensor> for DenseTensor {
    fn from(t: SymTensor) -> Self {
        t.0
    }
}

impl Deref for SymTensor {
    type Target = DenseTensor;

    fn deref(&self) -> &DenseTensor {
        &self.0
    }
}

impl SymTensor {
    /// Checks symmetry to `1e-13 · max(1, max|entry|)`.
    pub fn try_from_dense(t: DenseTensor) -> Result<Self> {
        if !t.is_symmetric(SYMMETRY_TOL) {
            return Err(Error::arg("tensor is not symmetric"));
        }
        Ok(SymTensor(t))
    }

    /// Wraps a tensor that is symmetric by construction.
    pub(crate) fn from_dense_unchecked(t: DenseTensor) -> Self {
        debug_assert!(t.is_symmetric(1e-8));
        SymTensor(t)
    }

    pub fn zeros(order: usize, dim: usize) -> Self {
        SymTensor(DenseTensor::zeros(order, dim))
    }

    pub fn scalar(value: f64, dim: usize) -> Self {
        SymTensor(DenseTensor::scalar(value, dim))
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        SymTensor(DenseTensor::from_vector(v))
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        SymTensor::try_from_dense(DenseTensor::from_matrix(m)?)
    }

    /// `⊗^p v`.
    pub fn rank_one(v: &DVector<f64>, p: usize) -> Self {
        SymTensor(outer_power(v, p))
    }

    pub fn as_dense(&self) -> &DenseTensor {
        &self.0
    }

    pub fn into_dense(self) -> DenseTensor {
        self.0
    }

    pub fn scaled(&self, alpha: f64) -> SymTensor {
        SymTensor(self.0.scaled(alpha))
    }

    pub fn try_add(&self, other: &SymTensor) -> Result<SymTensor> {
        Ok(SymTensor(self.0.try_add(&other.0)?))
    }

    pub fn try_sub(&self, other: &SymTensor) -> Result<SymTensor> {
        Ok(SymTensor(self.0.try_sub(&other.0)?))
    }

    /// `T[v]^q`; contracting any `q` modes of a symmetric tensor gives the
    /// same symmetric result.
    pub fn apply_repeated(&self, v: &DVector<f64>, q: usize) -> Result<SymTensor> {
        Ok(SymTensor(self.0.apply_repeated(v, q)?))
    }

    /// `T[W]^p` stays symmetric when the same matrix hits every mode.
    pub fn apply_matrix_all(&self, w: &DMatrix<f64>) -> Result<SymTensor> {
        Ok(SymTensor(self.0.apply_matrix_all(w)?))
    }

    /// Injective 2-norm estimate with the default restart budget.
    pub fn injective_norm_est(&self, restarts: usize, tol: f64) -> InjectiveNorm {
        self.injective_norm_with(&InjectiveNormOptions {
            restarts,
            tol,
            ..InjectiveNormOptions::default()
        })
    }

    /// Estimates `max |T[s₁, …, s_p]|` over unit vectors.
    ///
    /// For symmetric tensors the maximum is attained with all `sᵢ` equal, so
    /// this runs the symmetric power method `v ← T[v]^(p−1) + α v`, with the
    /// shift `α` chosen each step from the curvature `T[v]^(p−2)` so that
    /// `T[v]^p` increases monotonically, from a deterministic start (dominant singular vector of the first
    /// unfolding) plus `restarts − 1` seeded random starts and keeps the
    /// largest `|T[v]^p|` seen. Orders up to 2 are solved exactly.
    pub fn injective_norm_with(&self, opts: &InjectiveNormOptions) -> InjectiveNorm {
        let p = self.order();
        let n = self.dim();
        match p {
            0 => return InjectiveNorm::exact(self.entries()[0].abs()),
            1 => return InjectiveNorm::exact(self.frob_norm()),
            2 => {
                let m = self.to_matrix().expect("order 2");
                let eig = SymmetricEigen::new(m);
                let value = eig.eigenvalues.iter().fold(0.0_f64, |acc, l| acc.max(l.abs()));
                return InjectiveNorm::exact(value);
            }
            _ => {}
        }
        if self.max_abs() == 0.0 {
            return InjectiveNorm::exact(0.0);
        }

        let mut starts = Vec::with_capacity(opts.restarts.max(1));
        let unfolding = self.unfold(0).expect("order ≥ 3");
        let svd = (&unfolding * unfolding.transpose()).symmetric_eigen();
        let imax = svd.eigenvalues.imax();
        starts.push(svd.eigenvectors.column(imax).into_owned());
        let mut rng = StdRng::seed_from_u64(opts.seed);
        while starts.len() < opts.restarts.max(1) {
            let v = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
            if v.norm() > 0.0 {
                starts.push(v);
            }
        }

        // Odd orders: T[−v]^p = −T[v]^p, so maximizing T[v]^p suffices.
        // Even orders: run on T and −T.
        let signs: &[f64] = if p % 2 == 1 { &[1.0] } else { &[1.0, -1.0] };
        let mut best = InjectiveNorm {
            value: 0.0,
            converged: false,
            iterations: 0,
        };
        for start in &starts {
            for &sign in signs {
                let run = self.power_iteration(start, sign, opts);
                if run.value > best.value || (run.value == best.value && run.converged) {
                    best = run;
                }
            }
        }
        best
    }

    fn power_iteration(&self, start: &DVector<f64>, sign: f64, opts: &InjectiveNormOptions) -> InjectiveNorm {
        let p = self.order();
        let tau = 1e-6 * self.frob_norm();
        let mut v = start.normalize();
        let mut lambda = sign * self.evaluate_power(&v);
        let mut best = lambda.abs();
        for it in 1..=opts.max_iter {
            let g = self.apply_repeated(&v, p - 1).expect("dimension matches").to_vector().expect("order 1") * sign;
            // Shift so that the iteration is an ascent step on the sphere.
            let curvature = self.apply_repeated(&v, p - 2).expect("dimension matches").to_matrix().expect("order 2") * sign;
            let lmin = curvature.symmetric_eigen().eigenvalues.min() * (p - 1) as f64;
            let shift = (tau - lmin).max(0.0);
            let g = g + &v * shift;
            let gn = g.norm();
            if gn == 0.0 {
                return InjectiveNorm {
                    value: best,
                    converged: true,
                    iterations: it,
                };
            }
            v = g / gn;
            let next = sign * self.evaluate_power(&v);
            best = best.max(next.abs());
            if (next - lambda).abs() <= opts.tol * lambda.abs().max(1.0) {
                return InjectiveNorm {
                    value: best,
                    converged: true,
                    iterations: it,
                };
            }
            lambda = next;
        }
        InjectiveNorm {
            value: best,
            converged: false,
            iterations: opts.max_iter,
        }
    }

    /// `T[v]^p`.
    pub fn evaluate_power(&self, v: &DVector<f64>) -> f64 {
        self.apply_repeated(v, self.order())
            .expect("dimension matches")
            .entries()[0]
    }
}

impl Add for &SymTensor {
    type Output = SymTensor;

    fn add(self, rhs: &SymTensor) -> SymTensor {
        self.try_add(rhs).expect("tensor shapes must match")
    }
}

impl Sub for &SymTensor {
    type Output = SymTensor;

    fn sub(self, rhs: &SymTensor) -> SymTensor {
        self.try_sub(rhs).expect("tensor shapes must match")
    }
}

impl Mul<&SymTensor> for f64 {
    type Output = SymTensor;

    fn mul(self, rhs: &SymTensor) -> SymTensor {
        rhs.scaled(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectiveNormOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for InjectiveNormOptions {
    fn default() -> Self {
        InjectiveNormOptions {
            restarts: 20,
            max_iter: 500,
            tol: 1e-10,
            seed: 0x5eed,
        }
    }
}

/// Result of [`SymTensor::injective_norm_with`]. The value is always
/// attained at some unit vector, so it never exceeds the true norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectiveNorm {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl InjectiveNorm {
    fn exact(value: f64) -> Self {
        InjectiveNorm {
            value,
            converged: true,
            iterations: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn e(n: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        v
    }

    #[test]
    fn contraction_of_elementary_tensor() {
        let t = outer(&[&DenseTensor::from_vector(&e(2, 0)), &DenseTensor::from_vector(&e(2, 1))]).unwrap();
        let r = t.apply_vectors(&[e(2, 0)], &[0]).unwrap();
        assert_eq!(r.order(), 1);
        assert_eq!(r.entries(), &[0.0, 1.0]);
    }

    #[test]
    fn apply_vectors_rejects_bad_input() {
        let t = DenseTensor::zeros(3, 2);
        assert!(matches!(
            t.apply_vectors(&[e(3, 0)], &[0]),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            t.apply_vectors(&[e(2, 0), e(2, 1)], &[1, 1]),
            Err(Error::Argument(_))
        ));
        assert!(matches!(t.apply_vectors(&[e(2, 0)], &[3]), Err(Error::Argument(_))));
    }

    #[test]
    fn outer_of_basis_vectors() {
        let t = outer(&[&DenseTensor::from_vector(&e(2, 0)), &DenseTensor::from_vector(&e(2, 1))]).unwrap();
        assert_eq!(t.entries(), &[0.0, 1.0, 0.0, 0.0]);
        let bad = outer(&[&DenseTensor::from_vector(&e(2, 0)), &DenseTensor::from_vector(&e(3, 1))]);
        assert!(matches!(bad, Err(Error::Dimension(_))));
    }

    #[test]
    fn rank_one_evaluation() {
        let v = DVector::from_vec(vec![0.3, -1.2, 2.0]);
        let u = DVector::from_vec(vec![1.1, 0.4, -0.7]);
        let t = outer_power(&v, 3);
        let got = t.evaluate(&[u.clone(), u.clone(), u.clone()]).unwrap();
        assert_abs_diff_eq!(got, v.dot(&u).powi(3), epsilon = 1e-12);
    }

    #[test]
    fn sym_project_of_elementary_matrix() {
        let t = outer(&[&DenseTensor::from_vector(&e(2, 0)), &DenseTensor::from_vector(&e(2, 1))]).unwrap();
        assert_eq!(t.sym_project().entries(), &[0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn sym_project_fixes_symmetric_input() {
        let v = DVector::from_vec(vec![1.0, 2.0]);
        let s = SymTensor::rank_one(&v, 3);
        assert_eq!(s.sym_project(), s);
    }

    #[test]
    fn frobenius_norms() {
        assert_eq!(DenseTensor::zeros(3, 4).frob_norm(), 0.0);
        let v = DVector::from_vec(vec![0.6, 0.0, 0.8]);
        assert_abs_diff_eq!(outer_power(&v, 4).frob_norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn symmetric_check_rejects_asymmetric() {
        let t = DenseTensor::new(2, 2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(SymTensor::try_from_dense(t).is_err());
    }

    #[test]
    fn constructor_validates() {
        assert!(matches!(DenseTensor::new(2, 2, vec![0.0; 3]), Err(Error::Dimension(_))));
        assert!(matches!(DenseTensor::new(1, 2, vec![0.0, f64::NAN]), Err(Error::Argument(_))));
        assert!(matches!(DenseTensor::new(1, 0, vec![]), Err(Error::Argument(_))));
    }

    #[test]
    fn injective_norm_small_cases() {
        let v = DVector::from_vec(vec![0.6, 0.8]);
        let r = SymTensor::rank_one(&v, 3).injective_norm_est(20, 1e-10);
        assert_abs_diff_eq!(r.value, 1.0, epsilon = 1e-12);
        let d = SymTensor::from_matrix(&DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -5.0])).unwrap();
        assert_abs_diff_eq!(d.injective_norm_est(20, 1e-10).value, 5.0, epsilon = 1e-14);
        let r4 = SymTensor::rank_one(&v, 4).scaled(-2.0).injective_norm_est(20, 1e-10);
        assert_abs_diff_eq!(r4.value, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn mode_ranks_of_special_tensors() {
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert_eq!(outer_power(&v, 3).mode_ranks(DEFAULT_RANK_TOL).unwrap(), vec![1, 1, 1]);
        assert_eq!(DenseTensor::zeros(3, 3).mode_ranks(DEFAULT_RANK_TOL).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn json_wire_format() {
        let t = DenseTensor::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, r#"{"order":2,"dim":2,"entries":[1.0,2.0,3.0,4.0]}"#);
        let back: DenseTensor = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<DenseTensor>(r#"{"order":2,"dim":2,"entries":[1.0]}"#).is_err());
        assert!(serde_json::from_str::<SymTensor>(&json).is_err());
    }

    #[test]
    fn permutation_validation() {
        assert!(Permutation::new(vec![0, 0]).is_err());
        assert!(Permutation::new(vec![1, 2]).is_err());
        assert_eq!(Permutation::all(4).len(), 24);
    }
}
