use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Zipf};

use super::GenRng;
use crate::hash::mix64;
use crate::model::{KeyDistribution, RecordKey};
use crate::{Error, Result};

/// A keyed bijection of `[0, n)`: a four-round Feistel network on the
/// smallest even bit width covering `n`, cycle-walked back into range.
#[derive(Clone, Debug)]
pub struct IndexPermutation {
    n: u64,
    half_bits: u32,
    mask: u64,
    round_keys: [u64; 4],
}

impl IndexPermutation {
    pub fn new(n: u64, key: u64) -> Self {
        assert!(n > 0, "permutation of an empty range");
        let mut bits = (64 - (n - 1).leading_zeros()).max(2);
        bits += bits % 2;
        let half_bits = bits / 2;
        let mut round_keys = [0u64; 4];
        let mut k = key;
        for rk in &mut round_keys {
            k = mix64(k.wrapping_add(0x9e37_79b9_7f4a_7c15));
            *rk = k;
        }
        IndexPermutation {
            n,
            half_bits,
            mask: (1u64 << half_bits) - 1,
            round_keys,
        }
    }

    fn encrypt(&self, x: u64) -> u64 {
        let (mut l, mut r) = (x >> self.half_bits, x & self.mask);
        for &k in &self.round_keys {
            let f = mix64(r ^ k) & self.mask;
            (l, r) = (r, l ^ f);
        }
        (l << self.half_bits) | r
    }

    pub fn apply(&self, x: u64) -> u64 {
        debug_assert!(x < self.n);
        let mut y = self.encrypt(x);
        while y >= self.n {
            y = self.encrypt(y);
        }
        y
    }
}

#[derive(Clone, Debug)]
enum Sampler {
    Uniform,
    Zipfian(Zipf<f64>),
}

/// Chooses record indices in `[0, item_count)`.
///
/// Zipfian popularity of rank `r` (1-based) is proportional to `1 / r^theta`,
/// sampled exactly by rejection-inversion. With scrambling on, ranks are
/// mapped through a permutation that depends only on `item_count`, so the
/// same records stay hot across epochs and trials while being spread over
/// the index space.
#[derive(Clone, Debug)]
pub struct KeyChooser {
    item_count: u64,
    sampler: Sampler,
    permutation: Option<IndexPermutation>,
    rng: GenRng,
}

impl KeyChooser {
    pub fn new(
        distribution: KeyDistribution,
        item_count: u64,
        scramble: bool,
        seed: u64,
    ) -> Result<Self> {
        if item_count == 0 {
            return Err(Error::InvalidArgument("key chooser needs at least one item".into()));
        }
        let sampler = match distribution {
            KeyDistribution::Uniform => Sampler::Uniform,
            KeyDistribution::Zipfian { theta } => {
                if !(theta > 0.0 && theta < 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "zipfian theta must be in (0, 1), got {theta}"
                    )));
                }
                let zipf = Zipf::new(item_count as f64, theta)
                    .map_err(|e| Error::InvalidArgument(format!("zipfian: {e}")))?;
                Sampler::Zipfian(zipf)
            }
        };
        // A uniform choice is invariant under permutation.
        let permutation = match (&sampler, scramble) {
            (Sampler::Zipfian(_), true) => Some(IndexPermutation::new(item_count, item_count)),
            _ => None,
        };
        Ok(KeyChooser {
            item_count,
            sampler,
            permutation,
            rng: GenRng::seed_from_u64(seed),
        })
    }

    pub fn uniform(item_count: u64, seed: u64) -> Result<Self> {
        Self::new(KeyDistribution::Uniform, item_count, false, seed)
    }

    pub fn zipfian(item_count: u64, theta: f64, scramble: bool, seed: u64) -> Result<Self> {
        Self::new(KeyDistribution::Zipfian { theta }, item_count, scramble, seed)
    }

    pub fn item_count(&self) -> u64 {
        self.item_count
    }

    pub fn next_index(&mut self) -> u64 {
        match &self.sampler {
            Sampler::Uniform => self.rng.random_range(0..self.item_count),
            Sampler::Zipfian(zipf) => {
                let rank = (zipf.sample(&mut self.rng) as u64)
                    .saturating_sub(1)
                    .min(self.item_count - 1);
                match &self.permutation {
                    Some(p) => p.apply(rank),
                    None => rank,
                }
            }
        }
    }

    pub fn next_key(&mut self) -> RecordKey {
        RecordKey::new(self.next_index())
    }
}
