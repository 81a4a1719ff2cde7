//! Seed derivation and complex Gaussian sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{CVector, C64};

pub type SimRng = ChaCha8Rng;

/// Stream tags so that independent consumers of one master seed never share
/// a random sequence.
pub mod stream {
    pub const SCENE: u64 = 1;
    pub const SAMPLE: u64 = 2;
    pub const EM_INIT: u64 = 3;
    pub const EM_RESEED: u64 = 4;
    pub const CONSTELLATION: u64 = 5;
    pub const USERS: u64 = 6;
    pub const PILOT_NOISE: u64 = 7;
    pub const SWMMSE: u64 = 8;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `(master, stream, index)`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream.wrapping_mul(0xA24B_AED4_963E_E407)) ^ index)
}

pub fn rng_from(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(master: u64, stream: u64, index: u64) -> SimRng {
    rng_from(derive_seed(master, stream, index))
}

/// One draw of `CN(0, 1)`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_normal_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| complex_normal(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_stream_and_index() {
        let a = derive_seed(7, stream::USERS, 0);
        assert_ne!(a, derive_seed(7, stream::USERS, 1));
        assert_ne!(a, derive_seed(7, stream::PILOT_NOISE, 0));
        assert_ne!(a, derive_seed(8, stream::USERS, 0));
        assert_eq!(a, derive_seed(7, stream::USERS, 0));
    }

    #[test]
    fn complex_normal_has_unit_power() {
        let mut rng = rng_from(3);
        let n = 200_000;
        let p: f64 = (0..n).map(|_| complex_normal(&mut rng).norm_sqr()).sum::<f64>() / n as f64;
        assert!((p - 1.0).abs() < 0.02, "{p}");
    }
}
