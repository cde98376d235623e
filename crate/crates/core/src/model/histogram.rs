use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Counts of field lengths grouped into fixed-width bins; a length `l` falls
/// in bin `l / bin_width`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueSizeHistogram {
    bin_width: u64,
    counts: BTreeMap<u64, u64>,
    total: u64,
}

impl ValueSizeHistogram {
    pub fn new(bin_width: u64) -> Result<Self> {
        if bin_width == 0 {
            return Err(Error::InvalidArgument("histogram bin width must be positive".into()));
        }
        Ok(ValueSizeHistogram {
            bin_width,
            counts: BTreeMap::new(),
            total: 0,
        })
    }

    pub fn from_lengths(bin_width: u64, lengths: impl IntoIterator<Item = u64>) -> Result<Self> {
        let mut h = Self::new(bin_width)?;
        for l in lengths {
            h.record(l);
        }
        Ok(h)
    }

    pub fn bin_width(&self) -> u64 {
        self.bin_width
    }

    pub fn bin_of(&self, length: u64) -> u64 {
        length / self.bin_width
    }

    pub fn lower_edge(&self, bin: u64) -> u64 {
        bin * self.bin_width
    }

    pub fn record(&mut self, length: u64) {
        self.add_count(self.bin_of(length), 1);
    }

    pub(crate) fn add_count(&mut self, bin: u64, n: u64) {
        if n == 0 {
            return;
        }
        *self.counts.entry(bin).or_insert(0) += n;
        self.total += n;
    }

    /// Removes one occurrence of `length`. Panics in debug builds if the bin
    /// is empty.
    pub fn remove(&mut self, length: u64) {
        let bin = self.bin_of(length);
        match self.counts.get_mut(&bin) {
            Some(c) if *c > 1 => *c -= 1,
            Some(_) => {
                self.counts.remove(&bin);
            }
            None => {
                debug_assert!(false, "removing length {length} from empty bin {bin}");
                return;
            }
        }
        self.total -= 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn count(&self, bin: u64) -> u64 {
        self.counts.get(&bin).copied().unwrap_or(0)
    }

    /// Occupied bins in ascending order with their counts.
    pub fn bins(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&b, &c)| (b, c))
    }

    pub fn max_bin(&self) -> Option<u64> {
        self.counts.keys().next_back().copied()
    }

    /// Mean length using each bin's lower edge as its representative.
    pub fn mean(&self) -> Option<f64> {
        if self.total == 0 {
            return None;
        }
        let sum: f64 = self
            .bins()
            .map(|(b, c)| self.lower_edge(b) as f64 * c as f64)
            .sum();
        Some(sum / self.total as f64)
    }

    /// Earth mover's distance in bytes between the two normalized
    /// distributions. Both histograms must share a bin width.
    pub fn earth_movers_distance(&self, other: &Self) -> Result<f64> {
        if self.bin_width != other.bin_width {
            return Err(Error::InvalidArgument(format!(
                "bin widths differ: {} vs {}",
                self.bin_width, other.bin_width
            )));
        }
        if self.is_empty() || other.is_empty() {
            return Err(Error::EmptyHistogram);
        }
        let lo = self.counts.keys().next().min(other.counts.keys().next()).copied().unwrap();
        let hi = self.max_bin().max(other.max_bin()).unwrap();
        let (na, nb) = (self.total as f64, other.total as f64);
        let (mut ca, mut cb, mut dist) = (0.0, 0.0, 0.0);
        let mut a = self.counts.range(lo..).peekable();
        let mut b = other.counts.range(lo..).peekable();
        let mut bin = lo;
        // Walk occupied bins only; the CDF gap is constant between them.
        while bin <= hi {
            if let Some((_, &c)) = a.next_if(|(&k, _)| k == bin) {
                ca += c as f64 / na;
            }
            if let Some((_, &c)) = b.next_if(|(&k, _)| k == bin) {
                cb += c as f64 / nb;
            }
            let next = match (a.peek(), b.peek()) {
                (Some((&x, _)), Some((&y, _))) => x.min(y),
                (Some((&x, _)), None) => x,
                (None, Some((&y, _))) => y,
                (None, None) => hi + 1,
            };
            dist += (ca - cb).abs() * (next - bin) as f64;
            bin = next;
        }
        Ok(dist * self.bin_width as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_binning() {
        let h = ValueSizeHistogram::from_lengths(100, [100, 300]).unwrap();
        assert_eq!(h.bins().collect::<Vec<_>>(), vec![(1, 1), (3, 1)]);
        assert_eq!(h.total(), 2);
    }

    #[test]
    fn zero_width_rejected() {
        assert!(ValueSizeHistogram::new(0).is_err());
    }

    #[test]
    fn bin_boundaries() {
        let h = ValueSizeHistogram::from_lengths(100, [0, 99, 100, 199, 200]).unwrap();
        assert_eq!(h.count(0), 2);
        assert_eq!(h.count(1), 2);
        assert_eq!(h.count(2), 1);
    }

    #[test]
    fn remove_drops_empty_bins() {
        let mut h = ValueSizeHistogram::from_lengths(100, [150, 250]).unwrap();
        h.remove(160);
        assert_eq!(h.bins().collect::<Vec<_>>(), vec![(2, 1)]);
        assert_eq!(h.total(), 1);
    }

    #[test]
    fn emd_oracle() {
        let a = ValueSizeHistogram::from_lengths(100, [100, 100]).unwrap();
        assert_eq!(a.earth_movers_distance(&a).unwrap(), 0.0);
        // Moving all mass three bins to the right costs three bin widths.
        let b = ValueSizeHistogram::from_lengths(100, [400]).unwrap();
        assert!((a.earth_movers_distance(&b).unwrap() - 300.0).abs() < 1e-9);
        // Half the mass moves one bin.
        let c = ValueSizeHistogram::from_lengths(100, [100, 200]).unwrap();
        assert!((a.earth_movers_distance(&c).unwrap() - 50.0).abs() < 1e-9);
        // Symmetric, and equals the difference of means for one-sided shifts.
        let d = ValueSizeHistogram::from_lengths(100, [0, 500, 900]).unwrap();
        let e = ValueSizeHistogram::from_lengths(100, [300, 300, 1200]).unwrap();
        let de = d.earth_movers_distance(&e).unwrap();
        assert!((de - e.earth_movers_distance(&d).unwrap()).abs() < 1e-9);
        // Brute force: sum over every bin of the CDF gap.
        let brute: f64 = (0..=12u64)
            .map(|bin| {
                let cd = [0u64, 500, 900].iter().filter(|&&l| l / 100 <= bin).count() as f64 / 3.0;
                let ce = [300u64, 300, 1200].iter().filter(|&&l| l / 100 <= bin).count() as f64 / 3.0;
                (cd - ce).abs() * 100.0
            })
            .sum();
        assert!((de - brute).abs() < 1e-9, "{de} vs {brute}");
    }

    #[test]
    fn lower_edge_mean() {
        let h = ValueSizeHistogram::from_lengths(100, [100, 300]).unwrap();
        assert_eq!(h.mean(), Some(200.0));
        assert_eq!(ValueSizeHistogram::new(100).unwrap().mean(), None);
    }
}
