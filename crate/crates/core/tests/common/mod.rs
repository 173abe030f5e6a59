#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| normal(rng))
}

pub fn normal_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| normal(rng)).collect()
}

/// Random SPD matrix `A Aᵀ + floor·I`.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize, floor: f64) -> DMatrix<f64> {
    let a = normal_matrix(rng, d, d) * rng.random_range(0.2..1.5);
    let mut m = &a * a.transpose();
    for i in 0..d {
        m[(i, i)] += floor;
    }
    (&m + m.transpose()) * 0.5
}

/// Gaussian log density through an LU factorization.
pub fn log_density_lu(x: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let lu = cov.clone().lu();
    let det = lu.determinant();
    assert!(det > 0.0, "covariance must be positive definite");
    let sol = lu.solve(x).expect("nonsingular");
    -0.5 * (x.len() as f64 * LN_2PI + det.ln() + x.dot(&sol))
}
