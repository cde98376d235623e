use rand::{Rng, SeedableRng};

use super::GenRng;
use crate::model::ValueSizeHistogram;
use crate::{Error, Result};

/// Samples field lengths from a histogram frozen at run-phase start.
///
/// A bin is chosen with probability `count / total`; the length is the bin's
/// lower edge, which is exact whenever lengths are multiples of the bin
/// width (the default configuration), clamped to the field cap.
#[derive(Clone, Debug)]
pub struct HistogramLengthSampler {
    cumulative: Vec<u64>,
    edges: Vec<u64>,
    cap: u64,
    rng: GenRng,
}

impl HistogramLengthSampler {
    pub fn new(source: &ValueSizeHistogram, cap: u64, seed: u64) -> Result<Self> {
        if source.is_empty() {
            return Err(Error::EmptyHistogram);
        }
        let mut acc = 0;
        let (cumulative, edges) = source
            .bins()
            .map(|(bin, count)| {
                acc += count;
                (acc, source.lower_edge(bin))
            })
            .unzip();
        Ok(HistogramLengthSampler {
            cumulative,
            edges,
            cap,
            rng: GenRng::seed_from_u64(seed),
        })
    }

    pub fn sample_length(&mut self) -> u64 {
        let total = *self.cumulative.last().unwrap();
        let r = self.rng.random_range(0..total);
        let i = self.cumulative.partition_point(|&c| c <= r);
        self.edges[i].min(self.cap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bin() {
        let h = ValueSizeHistogram::from_lengths(100, [100, 150, 199]).unwrap();
        let mut s = HistogramLengthSampler::new(&h, 1_600_000, 1).unwrap();
        assert!((0..1000).all(|_| (100..200).contains(&s.sample_length())));
    }

    #[test]
    fn empty_rejected() {
        let h = ValueSizeHistogram::new(100).unwrap();
        assert!(matches!(
            HistogramLengthSampler::new(&h, 100, 1),
            Err(Error::EmptyHistogram)
        ));
    }

    #[test]
    fn bin_frequencies_follow_counts() {
        let mut h = ValueSizeHistogram::new(100).unwrap();
        h.add_count(1, 900_000);
        h.add_count(15, 100_000);
        let mut s = HistogramLengthSampler::new(&h, 1_600_000, 5).unwrap();
        let n = 1_000_000;
        let ones = (0..n).filter(|_| s.sample_length() == 100).count();
        // Binomial sigma = 0.0003; 0.003 is 10 sigma.
        assert!((ones as f64 / n as f64 - 0.9).abs() < 0.003);
    }

    #[test]
    fn samples_only_occupied_bins_and_respect_cap() {
        let h = ValueSizeHistogram::from_lengths(100, [100, 700, 700, 2_000_000]).unwrap();
        let mut s = HistogramLengthSampler::new(&h, 1_600_000, 9).unwrap();
        for _ in 0..10_000 {
            let l = s.sample_length();
            assert!(l <= 1_600_000);
            assert!(l == 1_600_000 || h.count(h.bin_of(l)) > 0, "{l}");
        }
    }
}
