//! Seeded randomness.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha`), keyed
//! by a 64-bit seed and split into independent streams with the ChaCha
//! stream id. The generator, its seeding (`seed_from_u64`) and the ziggurat
//! normal sampler from `rand_distr` are all platform independent, so a seed
//! reproduces the same values everywhere.

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_distr::StandardNormal;

use crate::linalg::{normalize, orthonormalize, Matrix, SubspaceBasis, Vector};

pub type Rng = rand_chacha::ChaCha8Rng;

/// Stream ids used across the crate, so that independent consumers of the
/// same seed never share draws.
pub mod streams {
    pub const SPLIT: u64 = 1;
    pub const INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const SUBSAMPLE: u64 = 4;
    pub const BASIS: u64 = 10;
    pub const TRIPLETS: u64 = 11;
    pub const KMEANS: u64 = 20;
    pub const PERMUTE: u64 = 21;
    pub const BOOTSTRAP: u64 = 30;
}

/// Generator for `seed` positioned at the start of stream `stream`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut r = Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn standard_normal(r: &mut Rng) -> f64 {
    r.sample(StandardNormal)
}

pub fn gaussian_vec(r: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| standard_normal(r)).collect()
}

/// Uniform draw on the unit sphere of `R^dim`.
pub fn unit_vector(r: &mut Rng, dim: usize) -> Vector {
    loop {
        let g = gaussian_vec(r, dim);
        if let Ok(v) = normalize(&g) {
            return v;
        }
    }
}

pub fn uniform(r: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * r.random::<f64>()
}

/// Uniform index in `0..n`.
pub fn below(r: &mut Rng, n: usize) -> usize {
    r.random_range(0..n)
}

/// Orthonormal basis of a uniformly random `k`-dimensional subspace of `R^d`.
pub fn random_basis(r: &mut Rng, d: usize, k: usize) -> SubspaceBasis {
    loop {
        let cols: Vec<Vector> = (0..k).map(|_| Vector::from(gaussian_vec(r, d))).collect();
        let m = Matrix::from_columns(&cols).expect("columns share a dimension");
        if let Ok(q) = orthonormalize(&m) {
            return q;
        }
    }
}

pub fn shuffle<T>(r: &mut Rng, items: &mut [T]) {
    items.shuffle(r);
}
