use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::{RecordKey, ValueSizeHistogram};
use crate::{Error, Result};

/// Result of one extend attempt.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExtendOutcome {
    Applied(u32),
    Skipped,
}

/// Client-side record of every field's current length.
///
/// The ledger is the ground truth for extend deltas, run-phase size
/// histograms and volume accounting. It keeps the total volume and a
/// histogram at `bin_width` up to date on every mutation.
#[derive(Clone, Debug)]
pub struct LengthLedger {
    field_count: usize,
    entries: BTreeMap<RecordKey, Box<[u32]>>,
    total: u64,
    histogram: ValueSizeHistogram,
    next_index: u64,
}

impl LengthLedger {
    pub fn new(field_count: usize, bin_width: u64) -> Result<Self> {
        if field_count == 0 {
            return Err(Error::InvalidArgument("field count must be positive".into()));
        }
        Ok(LengthLedger {
            field_count,
            entries: BTreeMap::new(),
            total: 0,
            histogram: ValueSizeHistogram::new(bin_width)?,
            next_index: 0,
        })
    }

    pub fn field_count(&self) -> usize {
        self.field_count
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One past the largest record index ever inserted.
    pub fn next_index(&self) -> u64 {
        self.next_index
    }

    pub fn contains(&self, key: RecordKey) -> bool {
        self.entries.contains_key(&key)
    }

    pub fn get(&self, key: RecordKey) -> Option<&[u32]> {
        self.entries.get(&key).map(|v| &v[..])
    }

    /// Entries in rendered-key order.
    pub fn iter(&self) -> impl Iterator<Item = (RecordKey, &[u32])> + '_ {
        self.entries.iter().map(|(&k, v)| (k, &v[..]))
    }

    /// Inserts or replaces a record.
    pub fn insert(&mut self, key: RecordKey, lengths: Vec<u32>) -> Result<()> {
        if lengths.len() != self.field_count {
            return Err(Error::InvalidArgument(format!(
                "record {key} has {} lengths, expected {}",
                lengths.len(),
                self.field_count
            )));
        }
        self.remove(key);
        for &l in &lengths {
            self.total += l as u64;
            self.histogram.record(l as u64);
        }
        self.entries.insert(key, lengths.into_boxed_slice());
        self.next_index = self.next_index.max(key.index() + 1);
        Ok(())
    }

    pub fn remove(&mut self, key: RecordKey) -> Option<Vec<u32>> {
        let old = self.entries.remove(&key)?;
        for &l in old.iter() {
            self.total -= l as u64;
            self.histogram.remove(l as u64);
        }
        Some(old.into_vec())
    }

    fn field_mut(&mut self, key: RecordKey, field: usize) -> Result<&mut u32> {
        let field_count = self.field_count;
        let lengths = self
            .entries
            .get_mut(&key)
            .ok_or_else(|| Error::UnknownKey(key.render()))?;
        lengths.get_mut(field).ok_or(Error::FieldOutOfRange {
            index: field,
            field_count,
        })
    }

    /// Sets one field's length, returning the previous length.
    pub fn set_field(&mut self, key: RecordKey, field: usize, length: u32) -> Result<u32> {
        let slot = self.field_mut(key, field)?;
        let old = std::mem::replace(slot, length);
        self.total = self.total - old as u64 + length as u64;
        self.histogram.remove(old as u64);
        self.histogram.record(length as u64);
        Ok(old)
    }

    /// Grows one field by `delta` unless that would exceed `cap`, in which
    /// case nothing changes.
    pub fn apply_extend(
        &mut self,
        key: RecordKey,
        field: usize,
        delta: u32,
        cap: u32,
    ) -> Result<ExtendOutcome> {
        if delta == 0 {
            return Err(Error::InvalidArgument("extend delta must be positive".into()));
        }
        let slot = self.field_mut(key, field)?;
        let old = *slot;
        let new = match old.checked_add(delta) {
            Some(n) if n <= cap => n,
            _ => return Ok(ExtendOutcome::Skipped),
        };
        *slot = new;
        self.total += delta as u64;
        self.histogram.remove(old as u64);
        self.histogram.record(new as u64);
        debug_assert!(new <= cap);
        Ok(ExtendOutcome::Applied(new))
    }

    /// Sum of all field lengths, maintained incrementally.
    pub fn total_volume(&self) -> u64 {
        self.total
    }

    /// Sum of all field lengths by full traversal.
    pub fn recompute_volume(&self) -> u64 {
        self.entries
            .values()
            .flat_map(|v| v.iter())
            .map(|&l| l as u64)
            .sum()
    }

    /// The incrementally maintained histogram at the ledger's bin width.
    pub fn live_histogram(&self) -> &ValueSizeHistogram {
        &self.histogram
    }

    /// Builds a histogram of every field length from scratch.
    pub fn histogram(&self, bin_width: u64) -> Result<ValueSizeHistogram> {
        ValueSizeHistogram::from_lengths(
            bin_width,
            self.entries.values().flat_map(|v| v.iter()).map(|&l| l as u64),
        )
    }

    pub fn max_field_length(&self) -> u32 {
        self.entries
            .values()
            .flat_map(|v| v.iter().copied())
            .max()
            .unwrap_or(0)
    }

    pub fn mean_field_length(&self) -> Option<f64> {
        let n = self.entries.len() * self.field_count;
        (n > 0).then(|| self.total as f64 / n as f64)
    }

    /// Records with at least one field that can no longer be extended.
    pub fn saturated_records(&self, delta: u32, cap: u32) -> usize {
        self.entries
            .values()
            .filter(|v| v.iter().any(|&l| l as u64 + delta as u64 > cap as u64))
            .count()
    }

    pub fn record_size(&self, key: RecordKey) -> Option<u64> {
        self.get(key).map(|v| v.iter().map(|&l| l as u64).sum())
    }

    /// Writes `key,len0,len1,...` lines sorted by key string.
    pub fn write_sidecar<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut line = String::new();
        for (key, lengths) in self.iter() {
            use std::fmt::Write as _;
            line.clear();
            let _ = write!(line, "{key}");
            for l in lengths {
                let _ = write!(line, ",{l}");
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        w.flush()
    }

    pub fn read_sidecar<R: BufRead>(
        reader: R,
        field_count: usize,
        bin_width: u64,
    ) -> Result<Self> {
        let mut ledger = Self::new(field_count, bin_width)?;
        let mut prev: Option<RecordKey> = None;
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<ledger>", e))?;
            let bad = |msg: String| Error::Config {
                line: n + 1,
                message: msg,
            };
            let mut parts = line.split(',');
            let key: RecordKey = parts
                .next()
                .unwrap_or_default()
                .parse()
                .map_err(|e: Error| bad(e.to_string()))?;
            if prev.is_some_and(|p| p >= key) {
                return Err(bad(format!("key {key} out of order")));
            }
            let lengths = parts
                .map(|p| p.parse::<u32>().map_err(|e| bad(format!("bad length {p:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            ledger.insert(key, lengths).map_err(|e| bad(e.to_string()))?;
            prev = Some(key);
        }
        Ok(ledger)
    }
}
