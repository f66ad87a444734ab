//! Shared inputs for the benchmarks: a seeded message, its patch and a
//! corrupted copy, at the sizes used throughout the experiments.

use biff_core::{corrupt_uniform, encode, CodecParams, IbltTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub params: CodecParams,
    pub message: Vec<u64>,
    pub received: Vec<u64>,
    pub patch: IbltTable,
}

impl Fixture {
    /// `n` random `w`-bit symbols with `errors` of them corrupted, protected
    /// by an `m`-cell patch with `k` hash functions.
    pub fn new(n: usize, w: u32, k: usize, m: usize, errors: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask = (1u64 << w) - 1;
        let message: Vec<u64> = (0..n).map(|_| rng.random::<u64>() & mask).collect();
        let params = CodecParams::new(n as u64, w, k, m).with_seed(rng.random());
        let patch = encode(&message, &params).expect("fixture parameters are valid");
        let (received, _) = corrupt_uniform(&message, w, errors, &mut rng).expect("errors fit the message");
        Fixture { params, message, received, patch }
    }

    /// One million 20-bit symbols, 10^4 errors, 30000 cells.
    pub fn standard(k: usize) -> Self {
        Fixture::new(1_000_000, 20, k, 30_000, 10_000, 1)
    }

    /// The patch after the receiver's deletion pass, ready to peel.
    pub fn residual(&self) -> IbltTable {
        let mut t = self.patch.clone();
        let other = encode(&self.received, &self.params).expect("fixture parameters are valid");
        t.subtract(&other).expect("same parameters");
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_holds_both_sides_of_every_error() {
        let f = Fixture::new(50_000, 16, 4, 1200, 400, 3);
        let mut t = f.residual();
        let out = t.peel_within(50_000);
        assert!(out.is_complete());
        assert_eq!(out.recovered.len(), 800);
    }
}
