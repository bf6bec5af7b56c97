//! Seeded, named random streams.
//!
//! Every consumer of randomness asks for a stream by name. The stream is a
//! ChaCha8 generator keyed by the master seed, with the ChaCha stream id set
//! to the 64-bit FNV-1a hash of the name. Two different names never share a
//! keystream and the same `(seed, name)` always reproduces the same draws.
//!
//! Names used by this crate:
//! `simulate/replicate-{r}`, `simulate/phi`, `simulate/phi-{r}`,
//! `simulate/initial-{r}`, `mcmc/init-{c}`, `mcmc/chain-{c}`,
//! `postprocess/kernel-curve`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn fnv1a64(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn substream(seed: u64, name: &str) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a64(name));
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_name_same_stream() {
        let a: Vec<u64> = (0..4)
            .map(|_| 0)
            .scan(substream(7, "x"), |r, _| Some(r.random()))
            .collect();
        let b: Vec<u64> = (0..4)
            .map(|_| 0)
            .scan(substream(7, "x"), |r, _| Some(r.random()))
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn different_names_differ() {
        let a: u64 = substream(7, "mcmc/chain-0").random();
        let b: u64 = substream(7, "mcmc/chain-1").random();
        let c: u64 = substream(8, "mcmc/chain-0").random();
        assert_ne!(a, b);
        assert_ne!(a, c);
    }
}
