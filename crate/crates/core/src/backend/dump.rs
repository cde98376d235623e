//! Logical dumps.
//!
//! A dump of epoch `N` is three files in one directory:
//!
//! * `dump-epoch-NNN.bin`: records in key order, each as `u32` key length,
//!   key bytes, then for every field a `u32` length and the value bytes
//!   (little-endian), followed by a trailing `u64` FNV-1a checksum of all
//!   preceding bytes.
//! * `dump-epoch-NNN.ledger`: one `key,len0,len1,...` line per record.
//! * `dump-epoch-NNN.manifest`: JSON [`DumpManifest`], written last.

use std::fs::{self, File};
use std::hash::Hasher;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Record, StorageDriver};
use crate::model::LengthLedger;
use crate::{Error, Result};

pub const DUMP_FORMAT_VERSION: u32 = 1;
const SCAN_BATCH: usize = 256;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpManifest {
    pub format: u32,
    pub epoch: u32,
    pub config_hash: u64,
    pub record_count: u64,
    pub field_count: usize,
    pub volume: u64,
    pub checksum: u64,
    pub bin_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DumpPaths {
    pub bin: PathBuf,
    pub ledger: PathBuf,
    pub manifest: PathBuf,
}

impl DumpPaths {
    pub fn new(dir: &Path, epoch: u32) -> Self {
        let stem = format!("dump-epoch-{epoch:03}");
        DumpPaths {
            bin: dir.join(format!("{stem}.bin")),
            ledger: dir.join(format!("{stem}.ledger")),
            manifest: dir.join(format!("{stem}.manifest")),
        }
    }

    pub fn exists(&self) -> bool {
        self.manifest.is_file()
    }

    pub fn read_manifest(&self) -> Result<DumpManifest> {
        let text = fs::read_to_string(&self.manifest).map_err(|e| Error::io(&self.manifest, e))?;
        let m: DumpManifest = serde_json::from_str(&text)?;
        if m.format != DUMP_FORMAT_VERSION {
            return Err(Error::Corrupt {
                path: self.manifest.clone(),
                message: format!("unsupported dump format {}", m.format),
            });
        }
        Ok(m)
    }

    pub fn read_ledger(&self, bin_width: u64) -> Result<LengthLedger> {
        let m = self.read_manifest()?;
        let f = File::open(&self.ledger).map_err(|e| Error::io(&self.ledger, e))?;
        LengthLedger::read_sidecar(BufReader::new(f), m.field_count, bin_width).map_err(|e| {
            match e {
                Error::Config { line, message } => Error::Corrupt {
                    path: self.ledger.clone(),
                    message: format!("line {line}: {message}"),
                },
                e => e,
            }
        })
    }
}

struct HashingWriter<W> {
    inner: W,
    hasher: fnv::FnvHasher,
    written: u64,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.write(&buf[..n]);
        self.written += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

/// Writes a full logical scan of `driver` as the dump for `epoch`. The
/// ledger sidecar is derived from the scanned values, so it always agrees
/// with the dumped data.
pub fn dump(
    driver: &dyn StorageDriver,
    dir: &Path,
    epoch: u32,
    config_hash: u64,
    field_count: usize,
) -> Result<DumpManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = DumpPaths::new(dir, epoch);
    let bin = File::create(&paths.bin).map_err(|e| Error::io(&paths.bin, e))?;
    let mut w = HashingWriter {
        inner: BufWriter::with_capacity(1 << 20, bin),
        hasher: fnv::FnvHasher::default(),
        written: 0,
    };
    let ledger_file = File::create(&paths.ledger).map_err(|e| Error::io(&paths.ledger, e))?;
    let mut ledger = BufWriter::new(ledger_file);

    let io_bin = |e| Error::io(&paths.bin, e);
    let mut record_count = 0u64;
    let mut volume = 0u64;
    let mut start = String::new();
    let mut line = String::new();
    loop {
        let batch = driver.scan(&start, SCAN_BATCH)?;
        let Some((last, _)) = batch.last() else { break };
        start = format!("{last}\0");
        let done = batch.len() < SCAN_BATCH;
        for (key, record) in batch {
            if record.len() != field_count {
                return Err(Error::Backend {
                    backend: driver.name().to_string(),
                    message: format!("record {key} has {} fields, expected {field_count}", record.len()),
                });
            }
            w.write_all(&(key.len() as u32).to_le_bytes()).map_err(io_bin)?;
            w.write_all(key.as_bytes()).map_err(io_bin)?;
            line.clear();
            line.push_str(&key);
            for v in &record {
                w.write_all(&(v.len() as u32).to_le_bytes()).map_err(io_bin)?;
                w.write_all(v).map_err(io_bin)?;
                volume += v.len() as u64;
                line.push(',');
                line.push_str(&v.len().to_string());
            }
            line.push('\n');
            ledger
                .write_all(line.as_bytes())
                .map_err(|e| Error::io(&paths.ledger, e))?;
            record_count += 1;
        }
        if done {
            break;
        }
    }
    let checksum = w.hasher.finish();
    let bin_bytes = w.written + 8;
    let mut inner = w.inner;
    inner.write_all(&checksum.to_le_bytes()).map_err(io_bin)?;
    inner.flush().map_err(io_bin)?;
    ledger.flush().map_err(|e| Error::io(&paths.ledger, e))?;

    let manifest = DumpManifest {
        format: DUMP_FORMAT_VERSION,
        epoch,
        config_hash,
        record_count,
        field_count,
        volume,
        checksum,
        bin_bytes,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&paths.manifest, json + "\n").map_err(|e| Error::io(&paths.manifest, e))?;
    Ok(manifest)
}

/// Streams the records of a dump after checking its checksum against both
/// the trailer and the manifest.
fn read_records(
    paths: &DumpPaths,
    manifest: &DumpManifest,
    mut each: impl FnMut(String, Record) -> Result<()>,
) -> Result<()> {
    let corrupt = |message: String| Error::Corrupt {
        path: paths.bin.clone(),
        message,
    };
    let io = |e| Error::io(&paths.bin, e);
    let len = fs::metadata(&paths.bin).map_err(io)?.len();
    if len < 8 || len != manifest.bin_bytes {
        return Err(corrupt(format!(
            "size {len} does not match manifest ({} bytes)",
            manifest.bin_bytes
        )));
    }
    let body_len = len - 8;

    // Pass 1: verify.
    let mut r = BufReader::with_capacity(1 << 20, File::open(&paths.bin).map_err(io)?);
    let mut hasher = fnv::FnvHasher::default();
    let mut body = (&mut r).take(body_len);
    let mut chunk = vec![0u8; 1 << 16];
    loop {
        let n = body.read(&mut chunk).map_err(io)?;
        if n == 0 {
            break;
        }
        hasher.write(&chunk[..n]);
    }
    let mut trailer = [0u8; 8];
    r.read_exact(&mut trailer).map_err(io)?;
    let stored = u64::from_le_bytes(trailer);
    let found = hasher.finish();
    if stored != found || manifest.checksum != found {
        return Err(Error::Checksum {
            path: paths.bin.clone(),
            expected: manifest.checksum,
            found,
        });
    }

    // Pass 2: parse.
    let r = BufReader::with_capacity(1 << 20, File::open(&paths.bin).map_err(io)?);
    let mut body = r.take(body_len);
    let read_u32 = |b: &mut dyn Read| -> Result<u32> {
        let mut x = [0u8; 4];
        b.read_exact(&mut x).map_err(io)?;
        Ok(u32::from_le_bytes(x))
    };
    for _ in 0..manifest.record_count {
        let klen = read_u32(&mut body)? as usize;
        let mut key = vec![0u8; klen];
        body.read_exact(&mut key).map_err(io)?;
        let key = String::from_utf8(key).map_err(|e| corrupt(format!("key is not UTF-8: {e}")))?;
        let mut record = Vec::with_capacity(manifest.field_count);
        for _ in 0..manifest.field_count {
            let vlen = read_u32(&mut body)? as usize;
            let mut v = vec![0u8; vlen];
            body.read_exact(&mut v).map_err(io)?;
            record.push(v);
        }
        each(key, record)?;
    }
    if body.limit() != 0 {
        return Err(corrupt(format!("{} trailing bytes after last record", body.limit())));
    }
    Ok(())
}

/// Loads a dump into a fresh, empty driver.
pub fn restore(paths: &DumpPaths, driver: &dyn StorageDriver) -> Result<DumpManifest> {
    let n = driver.record_count();
    if n != 0 {
        return Err(Error::NotEmpty(n));
    }
    let manifest = paths.read_manifest()?;
    read_records(paths, &manifest, |key, record| driver.insert(&key, record))?;
    driver.flush()?;
    Ok(manifest)
}

/// Reads a whole dump into memory.
pub fn load_dump(paths: &DumpPaths) -> Result<(DumpManifest, Vec<(String, Record)>)> {
    let manifest = paths.read_manifest()?;
    let mut out = Vec::with_capacity(manifest.record_count as usize);
    read_records(paths, &manifest, |k, r| {
        out.push((k, r));
        Ok(())
    })?;
    Ok((manifest, out))
}
