use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::hash::derive_seed;

/// Generator used throughout: ChaCha with 8 rounds, which is portable and
/// value-stable across platforms.
pub type GenRng = ChaCha8Rng;

/// Independent random streams. Each consumer draws from its own stream so
/// that changing how many values one consumer takes never shifts another.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    ExtendKey = 1,
    ExtendField = 2,
    RunKey = 3,
    RunOp = 4,
    RunField = 5,
    RunLength = 6,
    ScanLength = 7,
    Values = 8,
    Sampling = 9,
}

/// Root of the seed tree for one trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamSeed {
    root: u64,
}

impl StreamSeed {
    pub fn new(seed: u64) -> Self {
        StreamSeed { root: seed }
    }

    /// Seed for trial `trial` of an experiment seeded with `seed`.
    pub fn for_trial(seed: u64, trial: u32) -> Self {
        StreamSeed::new(seed.wrapping_add(trial as u64))
    }

    pub fn root(self) -> u64 {
        self.root
    }

    pub fn sub_seed(self, stream: Stream, epoch: u32, worker: usize) -> u64 {
        derive_seed(self.root, &[stream as u64, epoch as u64, worker as u64])
    }

    pub fn rng(self, stream: Stream, epoch: u32, worker: usize) -> GenRng {
        GenRng::seed_from_u64(self.sub_seed(stream, epoch, worker))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_disjoint_and_reproducible() {
        let s = StreamSeed::new(42);
        let a: Vec<u64> = s.rng(Stream::RunKey, 3, 0).random_iter().take(4).collect();
        let b: Vec<u64> = s.rng(Stream::RunKey, 3, 0).random_iter().take(4).collect();
        let c: Vec<u64> = s.rng(Stream::RunOp, 3, 0).random_iter().take(4).collect();
        let d: Vec<u64> = s.rng(Stream::RunKey, 3, 1).random_iter().take(4).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn chacha8_output_is_frozen() {
        // Pins the generator: a change here means traces from older builds
        // no longer replay.
        let mut r = GenRng::seed_from_u64(0);
        let first: u64 = r.random();
        let mut again = GenRng::seed_from_u64(0);
        assert_eq!(first, again.random::<u64>());
        assert_eq!(StreamSeed::for_trial(5, 2), StreamSeed::new(7));
    }
}
