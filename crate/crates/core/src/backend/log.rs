use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::ops::Bound;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use super::{BackendStats, CompactionStats, Record, StorageDriver};
use crate::{Error, Result};

// Entry layout: kind u8 | field u8 | key_len u8 | value_len u32 LE | key | value
const HEADER_LEN: u64 = 7;
const KIND_PUT: u8 = 1;
const KIND_TOMBSTONE: u8 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct LogStoreOptions {
    /// A segment is sealed once it reaches this many bytes.
    pub segment_size: u64,
    /// Physical read granularity. Reads fetch whole aligned blocks.
    pub block_size: u64,
    /// Garbage ratio (dead / total bytes) that triggers compaction after a
    /// write. `None` leaves compaction to explicit calls.
    pub compaction_threshold: Option<f64>,
}

impl Default for LogStoreOptions {
    fn default() -> Self {
        LogStoreOptions {
            segment_size: 64 << 20,
            block_size: 4096,
            compaction_threshold: None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Loc {
    segment: u32,
    value_offset: u64,
    value_len: u32,
    entry_len: u32,
}

#[derive(Debug)]
struct Segment {
    file: File,
    path: PathBuf,
    len: u64,
}

#[derive(Debug, Default)]
struct Inner {
    segments: BTreeMap<u32, Segment>,
    active: u32,
    index: BTreeMap<String, Vec<Loc>>,
    live_entries: u64,
    dead_entries: u64,
    live_bytes: u64,
    dead_bytes: u64,
    bytes_written: u64,
    compactions: u64,
    buf: Vec<u8>,
}

/// Append-only engine: every put writes a new entry at the end of the
/// active segment and an in-memory index points at the latest entry of each
/// field. Superseded entries stay on disk until [`LogStore::compact`].
#[derive(Debug)]
pub struct LogStore {
    dir: PathBuf,
    opts: LogStoreOptions,
    remove_on_drop: bool,
    inner: RwLock<Inner>,
    bytes_read_physical: AtomicU64,
}

impl LogStore {
    /// Opens a new store in `dir`, which must be absent or empty.
    pub fn create(dir: &Path, opts: LogStoreOptions) -> Result<Self> {
        if opts.block_size == 0 || opts.segment_size == 0 {
            return Err(Error::InvalidArgument("block and segment size must be positive".into()));
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        if entries.next().is_some() {
            return Err(Error::Backend {
                backend: "logstore".into(),
                message: format!("{} is not empty", dir.display()),
            });
        }
        let store = LogStore {
            dir: dir.to_path_buf(),
            opts,
            remove_on_drop: false,
            inner: RwLock::new(Inner::default()),
            bytes_read_physical: AtomicU64::new(0),
        };
        {
            let mut inner = store.inner.write().unwrap();
            let id = store.open_segment(&mut inner, 0)?;
            inner.active = id;
        }
        Ok(store)
    }

    /// Like [`LogStore::create`] but deletes `dir` when dropped.
    pub fn create_temporary(dir: &Path, opts: LogStoreOptions) -> Result<Self> {
        let mut s = Self::create(dir, opts)?;
        s.remove_on_drop = true;
        Ok(s)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn options(&self) -> &LogStoreOptions {
        &self.opts
    }

    /// Dead bytes over total bytes on disk.
    pub fn garbage_ratio(&self) -> f64 {
        let inner = self.inner.read().unwrap();
        let total = inner.live_bytes + inner.dead_bytes;
        if total == 0 {
            0.0
        } else {
            inner.dead_bytes as f64 / total as f64
        }
    }

    /// Bytes currently held in segment files.
    pub fn disk_bytes(&self) -> u64 {
        self.inner.read().unwrap().segments.values().map(|s| s.len).sum()
    }

    pub fn segment_count(&self) -> usize {
        self.inner.read().unwrap().segments.len()
    }

    fn backend_err(&self, message: String) -> Error {
        Error::Backend {
            backend: "logstore".into(),
            message,
        }
    }

    fn open_segment(&self, inner: &mut Inner, id: u32) -> Result<u32> {
        let path = self.dir.join(format!("seg-{id:06}.log"));
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        inner.segments.insert(id, Segment { file, path, len: 0 });
        Ok(id)
    }

    /// Appends one entry to the active segment, rolling to a new segment
    /// when the active one is full.
    fn append(
        &self,
        inner: &mut Inner,
        kind: u8,
        key: &str,
        field: usize,
        value: &[u8],
    ) -> Result<Loc> {
        if key.len() > u8::MAX as usize {
            return Err(self.backend_err(format!("key longer than 255 bytes: {key:?}")));
        }
        if field > u8::MAX as usize {
            return Err(self.backend_err(format!("field index {field} exceeds 255")));
        }
        let value_len = u32::try_from(value.len())
            .map_err(|_| self.backend_err("value larger than 4 GiB".into()))?;

        if inner.segments[&inner.active].len >= self.opts.segment_size {
            let next = inner.active + 1;
            inner.active = self.open_segment(inner, next)?;
        }

        let mut buf = std::mem::take(&mut inner.buf);
        buf.clear();
        buf.push(kind);
        buf.push(field as u8);
        buf.push(key.len() as u8);
        buf.extend_from_slice(&value_len.to_le_bytes());
        buf.extend_from_slice(key.as_bytes());
        buf.extend_from_slice(value);

        let active = inner.active;
        let seg = inner.segments.get_mut(&active).unwrap();
        let offset = seg.len;
        let res = seg.file.write_all_at(&buf, offset);
        let entry_len = buf.len() as u64;
        inner.buf = buf;
        res.map_err(|e| Error::io(&inner.segments[&active].path, e))?;

        let seg = inner.segments.get_mut(&active).unwrap();
        seg.len += entry_len;
        inner.bytes_written += entry_len;
        Ok(Loc {
            segment: active,
            value_offset: offset + HEADER_LEN + key.len() as u64,
            value_len,
            entry_len: entry_len as u32,
        })
    }

    fn retire(inner: &mut Inner, loc: Loc) {
        inner.live_entries -= 1;
        inner.live_bytes -= loc.entry_len as u64;
        inner.dead_entries += 1;
        inner.dead_bytes += loc.entry_len as u64;
    }

    fn admit(inner: &mut Inner, loc: Loc) {
        inner.live_entries += 1;
        inner.live_bytes += loc.entry_len as u64;
    }

    fn maybe_compact(&self, inner: &mut Inner) -> Result<()> {
        let Some(threshold) = self.opts.compaction_threshold else {
            return Ok(());
        };
        let total = inner.live_bytes + inner.dead_bytes;
        // Avoid rewriting the whole store for a handful of dead bytes.
        if inner.dead_bytes * 4 < self.opts.segment_size.min(total) {
            return Ok(());
        }
        if total > 0 && inner.dead_bytes as f64 / total as f64 > threshold {
            self.compact_locked(inner)?;
        }
        Ok(())
    }

    /// Reads the values at `locs` (all from one record) with block-aligned,
    /// coalesced reads.
    fn read_values(&self, inner: &Inner, locs: &[Loc]) -> Result<Vec<Vec<u8>>> {
        let bs = self.opts.block_size;
        let mut order: Vec<usize> = (0..locs.len()).filter(|&i| locs[i].value_len > 0).collect();
        order.sort_by_key(|&i| (locs[i].segment, locs[i].value_offset));

        let mut out = vec![Vec::new(); locs.len()];
        let mut i = 0;
        while i < order.len() {
            let first = locs[order[i]];
            let seg = &inner.segments[&first.segment];
            let start = first.value_offset / bs * bs;
            let mut end = block_end(first, bs, seg.len);
            let mut j = i + 1;
            while j < order.len() {
                let l = locs[order[j]];
                if l.segment != first.segment || l.value_offset / bs * bs > end {
                    break;
                }
                end = end.max(block_end(l, bs, seg.len));
                j += 1;
            }
            let mut buf = vec![0u8; (end - start) as usize];
            seg.file
                .read_exact_at(&mut buf, start)
                .map_err(|e| Error::io(&seg.path, e))?;
            self.bytes_read_physical
                .fetch_add(buf.len() as u64, Ordering::Relaxed);
            for &k in &order[i..j] {
                let l = locs[k];
                let from = (l.value_offset - start) as usize;
                out[k] = buf[from..from + l.value_len as usize].to_vec();
            }
            i = j;
        }
        Ok(out)
    }

    fn compact_locked(&self, inner: &mut Inner) -> Result<CompactionStats> {
        let stats = CompactionStats {
            reclaimed_bytes: inner.dead_bytes,
            reclaimed_entries: inner.dead_entries,
        };
        if inner.dead_entries == 0 {
            return Ok(stats);
        }
        let old: Vec<u32> = inner.segments.keys().copied().collect();
        let first_new = inner.active + 1;
        inner.active = self.open_segment(inner, first_new)?;

        let index = std::mem::take(&mut inner.index);
        let mut rebuilt = BTreeMap::new();
        inner.live_entries = 0;
        inner.live_bytes = 0;
        for (key, locs) in index {
            let values = self.read_values(inner, &locs)?;
            let mut new_locs = Vec::with_capacity(locs.len());
            for (field, v) in values.iter().enumerate() {
                let loc = self.append(inner, KIND_PUT, &key, field, v)?;
                Self::admit(inner, loc);
                new_locs.push(loc);
            }
            rebuilt.insert(key, new_locs);
        }
        inner.index = rebuilt;

        for id in old {
            if let Some(seg) = inner.segments.remove(&id) {
                drop(seg.file);
                fs::remove_file(&seg.path).map_err(|e| Error::io(&seg.path, e))?;
            }
        }
        inner.dead_entries = 0;
        inner.dead_bytes = 0;
        inner.compactions += 1;
        Ok(stats)
    }
}

fn block_end(l: Loc, bs: u64, seg_len: u64) -> u64 {
    let end = l.value_offset + l.value_len as u64;
    (end.div_ceil(bs) * bs).min(seg_len)
}

impl Drop for LogStore {
    fn drop(&mut self) {
        if self.remove_on_drop {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

impl StorageDriver for LogStore {
    fn name(&self) -> &str {
        "logstore"
    }

    fn read(&self, key: &str) -> Result<Option<Record>> {
        let inner = self.inner.read().unwrap();
        match inner.index.get(key) {
            Some(locs) => self.read_values(&inner, locs).map(Some),
            None => Ok(None),
        }
    }

    fn read_field(&self, key: &str, field: usize) -> Result<Option<Vec<u8>>> {
        let inner = self.inner.read().unwrap();
        let Some(locs) = inner.index.get(key) else {
            return Ok(None);
        };
        let loc = *locs.get(field).ok_or(Error::FieldOutOfRange {
            index: field,
            field_count: locs.len(),
        })?;
        Ok(self.read_values(&inner, &[loc])?.pop())
    }

    fn update_field(&self, key: &str, field: usize, value: &[u8]) -> Result<bool> {
        let mut guard = self.inner.write().unwrap();
        let inner = &mut *guard;
        let Some(field_count) = inner.index.get(key).map(Vec::len) else {
            return Ok(false);
        };
        if field >= field_count {
            return Err(Error::FieldOutOfRange { index: field, field_count });
        }
        let loc = self.append(inner, KIND_PUT, key, field, value)?;
        let old = std::mem::replace(&mut inner.index.get_mut(key).unwrap()[field], loc);
        Self::admit(inner, loc);
        Self::retire(inner, old);
        self.maybe_compact(inner)?;
        Ok(true)
    }

    fn insert(&self, key: &str, record: Record) -> Result<()> {
        let mut guard = self.inner.write().unwrap();
        let inner = &mut *guard;
        let mut locs = Vec::with_capacity(record.len());
        for (field, v) in record.iter().enumerate() {
            let loc = self.append(inner, KIND_PUT, key, field, v)?;
            Self::admit(inner, loc);
            locs.push(loc);
        }
        if let Some(old) = inner.index.insert(key.to_string(), locs) {
            for l in old {
                Self::retire(inner, l);
            }
        }
        self.maybe_compact(inner)?;
        Ok(())
    }

    fn delete(&self, key: &str) -> Result<bool> {
        let mut guard = self.inner.write().unwrap();
        let inner = &mut *guard;
        let Some(old) = inner.index.remove(key) else {
            return Ok(false);
        };
        for l in old {
            Self::retire(inner, l);
        }
        // The tombstone is garbage as soon as it is written.
        let tomb = self.append(inner, KIND_TOMBSTONE, key, 0, &[])?;
        inner.dead_entries += 1;
        inner.dead_bytes += tomb.entry_len as u64;
        self.maybe_compact(inner)?;
        Ok(true)
    }

    fn scan(&self, start_key: &str, count: usize) -> Result<Vec<(String, Record)>> {
        let inner = self.inner.read().unwrap();
        inner
            .index
            .range::<str, _>((Bound::Included(start_key), Bound::Unbounded))
            .take(count)
            .map(|(k, locs)| Ok((k.clone(), self.read_values(&inner, locs)?)))
            .collect()
    }

    fn record_count(&self) -> usize {
        self.inner.read().unwrap().index.len()
    }

    fn flush(&self) -> Result<()> {
        let inner = self.inner.read().unwrap();
        let seg = &inner.segments[&inner.active];
        seg.file.sync_data().map_err(|e| Error::io(&seg.path, e))
    }

    fn stats(&self) -> BackendStats {
        let inner = self.inner.read().unwrap();
        BackendStats::from_counters(
            inner.bytes_written,
            self.bytes_read_physical.load(Ordering::Relaxed),
            inner.live_entries,
            inner.dead_entries,
            inner.compactions,
        )
    }

    fn compact(&self) -> Result<CompactionStats> {
        let mut inner = self.inner.write().unwrap();
        self.compact_locked(&mut inner)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(dir: &Path) -> LogStore {
        LogStore::create(&dir.join("db"), LogStoreOptions::default()).unwrap()
    }

    fn rec(fields: &[&str]) -> Record {
        fields.iter().map(|f| f.as_bytes().to_vec()).collect()
    }

    #[test]
    fn update_visible_to_reads() {
        let tmp = tempfile::tempdir().unwrap();
        let s = store(tmp.path());
        s.insert("k", rec(&["aa", "bb"])).unwrap();
        assert!(s.update_field("k", 0, b"ccc").unwrap());
        assert_eq!(s.read("k").unwrap().unwrap(), rec(&["ccc", "bb"]));
        assert_eq!(s.read_field("k", 1).unwrap().unwrap(), b"bb");
        assert!(!s.update_field("nope", 0, b"x").unwrap());
        assert!(s.update_field("k", 2, b"x").is_err());
    }

    #[test]
    fn zero_overwrites_reclaims_nothing() {
        let tmp = tempfile::tempdir().unwrap();
        let s = store(tmp.path());
        s.insert("a", rec(&["1", "2"])).unwrap();
        s.insert("b", rec(&["3", "4"])).unwrap();
        assert_eq!(s.compact().unwrap(), CompactionStats::default());
        assert_eq!(s.stats().get(BackendStats::COMPACTIONS), 0);
    }

    #[test]
    fn k_writes_leave_k_minus_one_dead_entries() {
        let tmp = tempfile::tempdir().unwrap();
        let s = store(tmp.path());
        let k = 7u64;
        s.insert("a", rec(&["v0", "other"])).unwrap();
        let mut expected_bytes = 0;
        for i in 1..k {
            expected_bytes += HEADER_LEN + 1 + 2; // entry replaced by this write
            s.update_field("a", 0, format!("v{i}").as_bytes()).unwrap();
        }
        assert_eq!(s.stats().get(BackendStats::ENTRIES_DEAD), k - 1);
        let before = s.scan("", usize::MAX).unwrap();
        let c = s.compact().unwrap();
        assert_eq!(c.reclaimed_entries, k - 1);
        assert_eq!(c.reclaimed_bytes, expected_bytes);
        assert_eq!(s.scan("", usize::MAX).unwrap(), before);
        assert_eq!(s.garbage_ratio(), 0.0);
        assert_eq!(s.segment_count(), 1);
    }

    #[test]
    fn compacted_size_is_volume_plus_framing() {
        let tmp = tempfile::tempdir().unwrap();
        let s = store(tmp.path());
        let key = "user00000000000000000001";
        s.insert(key, vec![vec![b'x'; 100]; 10]).unwrap();
        for i in 0..50 {
            s.update_field(key, i % 10, &vec![b'y'; 100 + 100 * i]).unwrap();
        }
        s.compact().unwrap();
        let volume: u64 = s.read(key).unwrap().unwrap().iter().map(|v| v.len() as u64).sum();
        let disk = s.disk_bytes();
        assert!(disk >= volume);
        assert!(disk - volume <= 32 * 10, "framing {} for 10 entries", disk - volume);
    }

    #[test]
    fn rolls_segments_and_threshold_compaction() {
        let tmp = tempfile::tempdir().unwrap();
        let opts = LogStoreOptions {
            segment_size: 1024,
            block_size: 64,
            compaction_threshold: Some(0.5),
        };
        let s = LogStore::create(&tmp.path().join("db"), opts).unwrap();
        for i in 0..40 {
            s.insert(&format!("k{i:02}"), vec![vec![b'a'; 50]; 2]).unwrap();
        }
        assert!(s.segment_count() > 1);
        for round in 0..10u8 {
            for i in 0..40 {
                s.update_field(&format!("k{i:02}"), 0, &vec![b'b' + round; 50]).unwrap();
            }
        }
        assert!(s.stats().get(BackendStats::COMPACTIONS) > 0);
        assert!(s.garbage_ratio() <= 0.5);
        assert_eq!(s.read("k07").unwrap().unwrap()[0], vec![b'b' + 9; 50]);
        assert_eq!(s.record_count(), 40);
    }

    #[test]
    fn delete_and_reinsert() {
        let tmp = tempfile::tempdir().unwrap();
        let s = store(tmp.path());
        s.insert("a", rec(&["1"])).unwrap();
        assert!(s.delete("a").unwrap());
        assert!(!s.delete("a").unwrap());
        assert!(s.read("a").unwrap().is_none());
        s.insert("a", rec(&["2"])).unwrap();
        assert_eq!(s.read("a").unwrap().unwrap(), rec(&["2"]));
        let st = s.stats();
        assert_eq!(st.get(BackendStats::ENTRIES_LIVE), 1);
        assert_eq!(st.get(BackendStats::ENTRIES_DEAD), 2);
    }

    #[test]
    fn scattered_fields_cost_more_blocks() {
        let tmp = tempfile::tempdir().unwrap();
        let s = store(tmp.path());
        let filler = vec![b'f'; 4096];
        s.insert("hot", vec![vec![b'h'; 100]; 10]).unwrap();
        s.insert("cold", vec![vec![b'c'; 100]; 10]).unwrap();
        let read_cost = |s: &LogStore, key: &str| {
            let before = s.stats().get(BackendStats::BYTES_READ_PHYSICAL);
            s.read(key).unwrap();
            s.stats().get(BackendStats::BYTES_READ_PHYSICAL) - before
        };
        let contiguous = read_cost(&s, "hot");
        let mut costs = vec![contiguous];
        for f in 0..10 {
            s.insert(&format!("filler{f}"), vec![filler.clone()]).unwrap();
            s.update_field("hot", f, &vec![b'H'; 100]).unwrap();
            costs.push(read_cost(&s, "hot"));
        }
        assert!(costs.windows(2).all(|w| w[0] <= w[1]), "{costs:?}");
        assert!(*costs.last().unwrap() >= 5 * contiguous, "{costs:?}");
    }

    #[test]
    fn refuses_non_empty_dir_and_cleans_up_temporary() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("db");
        {
            let s = LogStore::create_temporary(&dir, LogStoreOptions::default()).unwrap();
            s.insert("a", rec(&["1"])).unwrap();
            assert!(LogStore::create(&dir, LogStoreOptions::default()).is_err());
        }
        assert!(!dir.exists());
    }
}
