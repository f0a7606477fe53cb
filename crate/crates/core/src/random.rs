//! Seeded generators for random test instances.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::tensor::{DenseTensor, SymTensor};

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    loop {
        let v = gaussian_vector(rng, n);
        let norm = v.norm();
        if norm > 1e-8 {
            return v / norm;
        }
    }
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.sample(StandardNormal))
}

pub fn random_tensor<R: Rng + ?Sized>(rng: &mut R, order: usize, dim: usize) -> DenseTensor {
    let entries = (0..dim.pow(order as u32)).map(|_| rng.sample(StandardNormal)).collect();
    DenseTensor::new(order, dim, entries).expect("finite entries")
}

pub fn random_sym_tensor<R: Rng + ?Sized>(rng: &mut R, order: usize, dim: usize) -> SymTensor {
    random_tensor(rng, order, dim).sym_project()
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// sign of `R`'s diagonal fixed).
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let qr = gaussian_matrix(rng, n).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Symmetric positive definite matrix with eigenvalues drawn from
/// `[1, kappa]`, so `κ₂ ≤ kappa`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, n: usize, kappa: f64) -> DMatrix<f64> {
    let q = random_orthogonal(rng, n);
    let mut eig: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..=kappa)).collect();
    if n > 1 {
        eig[0] = 1.0;
    }
    &q * DMatrix::from_diagonal(&DVector::from_vec(eig)) * q.transpose()
}
