//! Reproducible randomness.
//!
//! Every random stream in a run is a ChaCha8 keystream (a counter-based
//! generator) keyed by a child seed. Child seeds are derived from the master
//! seed through a fixed mixing tree: `master -> replicate -> role`, so any
//! replica or stream can be regenerated in isolation and replicas can run on
//! any worker in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::velocity::Velocity;

pub type SimRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a branch label.
#[inline]
pub fn split(parent: u64, branch: u64) -> u64 {
    mix64(parent ^ mix64(branch.wrapping_add(GOLDEN)))
}

/// Role of a random stream inside one replica.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamRole {
    Init,
    Events,
    Aux,
    Reference,
    Surrogate,
    Partner,
    Bootstrap,
    Custom(u64),
}

impl StreamRole {
    pub fn code(self) -> u64 {
        match self {
            StreamRole::Init => 1,
            StreamRole::Events => 2,
            StreamRole::Aux => 3,
            StreamRole::Reference => 4,
            StreamRole::Surrogate => 5,
            StreamRole::Partner => 6,
            StreamRole::Bootstrap => 7,
            StreamRole::Custom(c) => 0x1000 + c,
        }
    }
}

/// Child seed for `(master, replicate, role)`; a pure function of its inputs.
pub fn seed_for(master: u64, replicate: u64, role: StreamRole) -> u64 {
    split(split(master, replicate), role.code())
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(master: u64, replicate: u64, role: StreamRole) -> SimRng {
    rng_from_seed(seed_for(master, replicate, role))
}

/// Uniform draw on `[0, 1)`.
#[inline]
pub fn uniform<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

/// Isotropic Gaussian velocity with per-coordinate variance `var`.
pub fn gaussian_velocity<R: rand::Rng + ?Sized>(rng: &mut R, var: f64) -> Velocity {
    let s = var.sqrt();
    let x: f64 = StandardNormal.sample(rng);
    let y: f64 = StandardNormal.sample(rng);
    let z: f64 = StandardNormal.sample(rng);
    Velocity::new(s * x, s * y, s * z)
}

/// Standard Gaussian reference law γ (total variance 1).
pub fn gamma_velocity<R: rand::Rng + ?Sized>(rng: &mut R) -> Velocity {
    gaussian_velocity(rng, 1.0 / 3.0)
}

pub fn gamma_sample<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<Velocity> {
    (0..n).map(|_| gamma_velocity(rng)).collect()
}

/// Uniform index in `0..n`.
#[inline]
pub fn index<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> usize {
    rng.random_range(0..n)
}
