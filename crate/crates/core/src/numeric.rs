//! Compensated summation and seed derivation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl Extend<f64> for CompensatedSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        s.extend(iter);
        s
    }
}

/// Compensated sum of an iterator.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Independent random streams sharing one seed. A process path and a driving
/// Brownian path drawn with the same seed never share random numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Process = 0,
    Driver = 1,
}

/// Generator for `(seed, stream)`; ChaCha streams are disjoint by design of
/// the cipher's nonce.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of item `index` in an ensemble labelled `domain`. A pure function of
/// its arguments, so ensembles are reproducible in any evaluation order.
pub fn derive_seed(master: u64, domain: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ domain) ^ index)
}

#[cfg(test)]
mod tests {
    use rand::RngCore;

    use super::*;

    #[test]
    fn compensated_beats_naive() {
        let mut values = vec![1.0];
        values.extend(std::iter::repeat(1e-16).take(10_000));
        let naive: f64 = values.iter().sum();
        assert_eq!(naive, 1.0);
        let comp = compensated_sum(values.iter().copied());
        assert!((comp - (1.0 + 1e-12)).abs() < 1e-20);
    }

    #[test]
    fn streams_differ() {
        let a = stream_rng(7, Stream::Process).next_u64();
        let b = stream_rng(7, Stream::Driver).next_u64();
        assert_ne!(a, b);
        assert_eq!(a, stream_rng(7, Stream::Process).next_u64());
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for d in 0..4 {
            for i in 0..1000 {
                assert!(seen.insert(derive_seed(11, d, i)));
            }
        }
    }
}
