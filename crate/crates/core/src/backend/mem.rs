use std::collections::BTreeMap;
use std::ops::Bound;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use super::{BackendStats, Record, StorageDriver};
use crate::{Error, Result};

/// One record as a single contiguous buffer, so its layout depends only on
/// its content and not on the order of past updates.
#[derive(Debug)]
struct Row {
    /// End offset of each field in `data`.
    ends: Box<[usize]>,
    data: Vec<u8>,
}

impl Row {
    fn new(record: &Record) -> Self {
        let mut data = Vec::with_capacity(record.iter().map(Vec::len).sum());
        let ends = record
            .iter()
            .map(|v| {
                data.extend_from_slice(v);
                data.len()
            })
            .collect();
        Row { ends, data }
    }

    fn range(&self, field: usize) -> std::ops::Range<usize> {
        let start = if field == 0 { 0 } else { self.ends[field - 1] };
        start..self.ends[field]
    }

    fn field(&self, field: usize) -> Result<&[u8]> {
        if field >= self.ends.len() {
            return Err(Error::FieldOutOfRange {
                index: field,
                field_count: self.ends.len(),
            });
        }
        Ok(&self.data[self.range(field)])
    }

    fn set(&mut self, field: usize, value: &[u8]) -> Result<()> {
        self.field(field)?;
        let r = self.range(field);
        let old = r.len();
        self.data.splice(r, value.iter().copied());
        for e in &mut self.ends[field..] {
            *e = *e + value.len() - old;
        }
        Ok(())
    }

    fn record(&self) -> Record {
        (0..self.ends.len())
            .map(|f| self.data[self.range(f)].to_vec())
            .collect()
    }
}

/// Ordered in-memory map with update-in-place; carries no history.
#[derive(Debug, Default)]
pub struct MemStore {
    map: RwLock<BTreeMap<String, Row>>,
    bytes_written: AtomicU64,
    bytes_read: AtomicU64,
}

impl MemStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn charge_read(&self, bytes: usize) {
        self.bytes_read.fetch_add(bytes as u64, Ordering::Relaxed);
    }
}

impl StorageDriver for MemStore {
    fn name(&self) -> &str {
        "memstore"
    }

    fn read(&self, key: &str) -> Result<Option<Record>> {
        let map = self.map.read().unwrap();
        Ok(map.get(key).map(|row| {
            self.charge_read(row.data.len());
            row.record()
        }))
    }

    fn read_field(&self, key: &str, field: usize) -> Result<Option<Vec<u8>>> {
        let map = self.map.read().unwrap();
        let Some(row) = map.get(key) else {
            return Ok(None);
        };
        let value = row.field(field)?;
        self.charge_read(value.len());
        Ok(Some(value.to_vec()))
    }

    fn update_field(&self, key: &str, field: usize, value: &[u8]) -> Result<bool> {
        let mut map = self.map.write().unwrap();
        let Some(row) = map.get_mut(key) else {
            return Ok(false);
        };
        row.set(field, value)?;
        self.bytes_written.fetch_add(value.len() as u64, Ordering::Relaxed);
        Ok(true)
    }

    fn insert(&self, key: &str, record: Record) -> Result<()> {
        let row = Row::new(&record);
        self.bytes_written.fetch_add(row.data.len() as u64, Ordering::Relaxed);
        self.map.write().unwrap().insert(key.to_string(), row);
        Ok(())
    }

    fn delete(&self, key: &str) -> Result<bool> {
        Ok(self.map.write().unwrap().remove(key).is_some())
    }

    fn scan(&self, start_key: &str, count: usize) -> Result<Vec<(String, Record)>> {
        let map = self.map.read().unwrap();
        let out: Vec<(String, Record)> = map
            .range::<str, _>((Bound::Included(start_key), Bound::Unbounded))
            .take(count)
            .map(|(k, row)| {
                self.charge_read(row.data.len());
                (k.clone(), row.record())
            })
            .collect();
        Ok(out)
    }

    fn record_count(&self) -> usize {
        self.map.read().unwrap().len()
    }

    fn flush(&self) -> Result<()> {
        Ok(())
    }

    fn stats(&self) -> BackendStats {
        let map = self.map.read().unwrap();
        let live: u64 = map.values().map(|r| r.ends.len() as u64).sum();
        BackendStats::from_counters(
            self.bytes_written.load(Ordering::Relaxed),
            self.bytes_read.load(Ordering::Relaxed),
            live,
            0,
            0,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn update_then_read_field() {
        let s = MemStore::new();
        s.insert("a", vec![b"x".to_vec(), b"y".to_vec()]).unwrap();
        assert!(s.update_field("a", 1, b"zzz").unwrap());
        assert_eq!(s.read_field("a", 1).unwrap().unwrap(), b"zzz");
        assert!(!s.update_field("b", 0, b"q").unwrap());
        assert!(s.update_field("a", 2, b"q").is_err());
        assert_eq!(s.stats().get(BackendStats::ENTRIES_DEAD), 0);
    }

    #[test]
    fn scan_in_key_order() {
        let s = MemStore::new();
        for k in ["c", "a", "b", "d"] {
            s.insert(k, vec![k.as_bytes().to_vec()]).unwrap();
        }
        let keys: Vec<String> = s.scan("b", 2).unwrap().into_iter().map(|(k, _)| k).collect();
        assert_eq!(keys, ["b", "c"]);
        assert_eq!(s.scan("e", 5).unwrap().len(), 0);
        assert_eq!(s.scan("", 10).unwrap().len(), 4);
    }
}
