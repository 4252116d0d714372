//! Counter-based random number streams.
//!
//! Every Monte Carlo routine in this crate draws from a `ChaCha8` stream
//! keyed by `(seed, domain, replication index)`. Stream assignment is a pure
//! function of those three values, so replication `i` sees the same numbers
//! no matter how work is scheduled across threads, and estimators that
//! reduce in replication order are bit-stable under any worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stable identifiers for independent stream families.
///
/// Keeping domains distinct means e.g. a pilot run and a production run of
/// the same replication index never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamDomain {
    Path = 1,
    SplitChain = 2,
    Tilted = 3,
    DualIs = 4,
    Perpetuity = 5,
    GoldieCoupling = 6,
    LimitMeasure = 7,
    RareEvent = 8,
    Diagnostics = 9,
    Stationary = 10,
    Residual = 11,
}

/// Factory for reproducible, mutually independent RNG streams.
#[derive(Debug, Clone, Copy)]
pub struct StreamFactory {
    seed: u64,
}

impl StreamFactory {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The stream for replication `index` in the given domain.
    ///
    /// ChaCha streams with equal key but distinct stream ids are
    /// independent; the domain tag occupies the high bits so replication
    /// counters from different domains cannot collide.
    pub fn stream(&self, domain: StreamDomain, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((domain as u64) << 48) ^ index);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_replayable() {
        let f = StreamFactory::new(7);
        let a: Vec<f64> = f.stream(StreamDomain::Path, 3).random_iter().take(8).collect();
        let b: Vec<f64> = f.stream(StreamDomain::Path, 3).random_iter().take(8).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn streams_differ_across_domains_and_indices() {
        let f = StreamFactory::new(7);
        let a: f64 = f.stream(StreamDomain::Path, 0).random();
        let b: f64 = f.stream(StreamDomain::SplitChain, 0).random();
        let c: f64 = f.stream(StreamDomain::Path, 1).random();
        assert_ne!(a, b);
        assert_ne!(a, c);
    }
}
