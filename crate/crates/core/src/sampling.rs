//! Seeded random generation of states, bases and weights.
//!
//! Every draw comes from a ChaCha stream keyed by (seed, stream), so a run is
//! reproducible bit for bit no matter how callers interleave or parallelise
//! the branches.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{cx, orthonormalize, StateVector, Tolerance};

/// Independent generator for one branch of a seeded computation.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard complex Gaussian sample.
pub fn complex_gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    cx(re, im)
}

/// Haar-like random unit vector on the given tensor factors.
pub fn random_unit_vector(rng: &mut ChaCha8Rng, factor_dims: &[usize]) -> Result<StateVector> {
    let total: usize = factor_dims.iter().product();
    loop {
        let amps: Vec<Complex64> = (0..total).map(|_| complex_gaussian(rng)).collect();
        let v = StateVector::new(amps, factor_dims.to_vec())?;
        if v.norm() > 1e-6 {
            return v.normalized();
        }
    }
}

/// Random unit superposition of the given states; for a single basis vector
/// this is a uniformly random global phase.
pub fn random_superposition(rng: &mut ChaCha8Rng, basis: &[StateVector]) -> Result<StateVector> {
    if basis.is_empty() {
        return Err(Error::Invalid("superposition of empty basis".into()));
    }
    loop {
        let mut acc = basis[0].scale(complex_gaussian(rng));
        for b in &basis[1..] {
            acc = &acc + &b.scale(complex_gaussian(rng));
        }
        if acc.norm() > 1e-6 {
            return acc.normalized();
        }
    }
}

/// Haar-like random orthonormal basis of C^dim obtained by orthonormalising
/// Gaussian vectors.
pub fn random_orthonormal_basis(rng: &mut ChaCha8Rng, dim: usize) -> Result<Vec<StateVector>> {
    let tol = Tolerance::default();
    loop {
        let raw: Vec<StateVector> = (0..dim)
            .map(|_| random_unit_vector(rng, &[dim]))
            .collect::<Result<_>>()?;
        let basis = orthonormalize(&raw, &tol)?;
        if basis.len() == dim {
            return Ok(basis);
        }
    }
}

/// Random Schmidt weights, normalised, bounded away from zero
/// (every entry is at least 0.1 for d up to 11).
pub fn random_eta(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..d).map(|_| rng.gen_range(0.5..1.5)).collect();
    let norm = raw.iter().map(|w| w * w).sum::<f64>().sqrt();
    raw.into_iter().map(|w| w / norm).collect()
}
