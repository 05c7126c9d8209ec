//! Dataset materialization: parallel labeling, JSON-lines records, the
//! packed binary variant and the manifest that ties them together.
//!
//! Files for a dataset called `name` in directory `dir`:
//! `name.train.jsonl`, `name.val.jsonl`, `name.test.jsonl`,
//! `name.manifest.json` and, optionally, `name.<split>.bin`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use supermap_core::dataset::{generate_sample, DatasetSplit, LabeledSample, SampleMeta};
use supermap_core::descriptor::LogDescriptor;
use supermap_core::generators::{Method, SamplerConfig};
use supermap_core::rng::SeedStream;
use supermap_core::Grid;

use crate::error::{AppError, Result};
use crate::formats::{digest_of, hex, read_json, sha256_hex, write_json};

pub const FORMAT_VERSION: u32 = 1;
pub const BIN_MAGIC: &[u8; 8] = b"SMAPDS01";

/// Samples labeled per parallel batch before they are written out in order.
const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: DatasetSplit) -> usize {
        match split {
            DatasetSplit::Train => self.train,
            DatasetSplit::Val => self.val,
            DatasetSplit::Test => self.test,
        }
    }
}

impl Default for SplitCounts {
    fn default() -> Self {
        SplitCounts {
            train: 50_000,
            val: 5_000,
            test: 5_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub seed: u64,
    pub counts: SplitCounts,
    /// Grid of the per-stream inputs; targets always use [`Grid::TARGET`].
    pub grid: Grid,
    pub sampler: SamplerConfig,
    /// Also write the packed binary files.
    pub binary: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            seed: 0,
            counts: SplitCounts::default(),
            grid: Grid::TARGET,
            sampler: SamplerConfig::default(),
            binary: false,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let c = self.counts;
        if c.train == 0 || c.val == 0 || c.test == 0 {
            return Err(AppError::config("every split needs a positive sample count"));
        }
        Grid::new(self.grid.n_mom, self.grid.n_lag, self.grid.n_pow)?;
        self.sampler.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    /// File name relative to the manifest.
    pub file: String,
    pub records: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub name: String,
    pub counts: SplitCounts,
    pub grid: Grid,
    pub config_digest: String,
    pub config: DatasetConfig,
    pub files: BTreeMap<String, SplitFile>,
    #[serde(default)]
    pub binary_files: BTreeMap<String, SplitFile>,
    pub total_retries: u64,
    pub max_stream_dim: usize,
    /// Run manifest of the command that wrote this dataset.
    pub run_manifest: Option<String>,
}

pub fn manifest_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.manifest.json"))
}

pub fn split_path(dir: &Path, name: &str, split: DatasetSplit) -> PathBuf {
    dir.join(format!("{name}.{}.jsonl", split.name()))
}

pub fn bin_path(dir: &Path, name: &str, split: DatasetSplit) -> PathBuf {
    dir.join(format!("{name}.{}.bin", split.name()))
}

/// Writes bytes through a running SHA-256.
struct HashingWriter<W: Write> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

fn create(path: &Path) -> Result<HashingWriter<BufWriter<File>>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    let f = File::create(path).map_err(|e| AppError::io(path, e))?;
    Ok(HashingWriter {
        inner: BufWriter::new(f),
        hasher: Sha256::new(),
    })
}

fn finish(path: &Path, mut w: HashingWriter<BufWriter<File>>, records: usize) -> Result<SplitFile> {
    w.flush().map_err(|e| AppError::io(path, e))?;
    Ok(SplitFile {
        file: path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        records,
        sha256: hex(&w.hasher.finalize()),
    })
}

/// Labels every split in parallel and writes the records in index order.
/// Output bytes depend only on the configuration, never on thread timing.
/// `run_manifest` names the run manifest of the calling command.
pub fn build_dataset(
    config: &DatasetConfig,
    dir: &Path,
    name: &str,
    run_manifest: Option<String>,
) -> Result<DatasetManifest> {
    config.validate()?;
    let seeds = SeedStream::new(config.seed);
    let mut files = BTreeMap::new();
    let mut binary_files = BTreeMap::new();
    let mut total_retries = 0u64;
    let mut max_dim = 0usize;

    for split in DatasetSplit::ALL {
        let n = config.counts.get(split);
        let path = split_path(dir, name, split);
        let mut out = create(&path)?;
        let mut bin = if config.binary {
            let p = bin_path(dir, name, split);
            let mut w = create(&p)?;
            write_bin_header(&mut w, config.grid, n as u64).map_err(|e| AppError::io(&p, e))?;
            Some((p, w))
        } else {
            None
        };
        let mut done = 0;
        while done < n {
            let hi = (done + CHUNK).min(n);
            let chunk: Vec<std::result::Result<(LabeledSample, String), supermap_core::error::Error>> = (done..hi)
                .into_par_iter()
                .map(|i| {
                    let s = generate_sample(&seeds, split, i as u64, &config.sampler, config.grid)?;
                    let line = serde_json::to_string(&s).expect("serializable sample");
                    Ok((s, line))
                })
                .collect();
            for r in chunk {
                let (s, line) = r?;
                total_retries += s.meta.retries as u64;
                max_dim = max_dim.max(s.meta.dims[0]).max(s.meta.dims[1]);
                if s.meta.retries > 0 {
                    log::debug!("{} sample {} needed {} retries", split.name(), s.meta.index, s.meta.retries);
                }
                out.write_all(line.as_bytes())
                    .and_then(|_| out.write_all(b"\n"))
                    .map_err(|e| AppError::io(&path, e))?;
                if let Some((p, w)) = bin.as_mut() {
                    write_bin_record(w, &s).map_err(|e| AppError::io(&*p, e))?;
                }
            }
            done = hi;
            log::info!("{}: {done}/{n} samples labeled", split.name());
        }
        files.insert(split.name().to_string(), finish(&path, out, n)?);
        if let Some((p, w)) = bin {
            binary_files.insert(split.name().to_string(), finish(&p, w, n)?);
        }
    }

    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        name: name.to_string(),
        counts: config.counts,
        grid: config.grid,
        config_digest: digest_of(config),
        config: config.clone(),
        files,
        binary_files,
        total_retries,
        max_stream_dim: max_dim,
        run_manifest,
    };
    write_json(&manifest_path(dir, name), &manifest)?;
    Ok(manifest)
}

/// Reads a manifest and checks its version and configuration digest.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let m: DatasetManifest = read_json(path)?;
    if m.format_version != FORMAT_VERSION {
        return Err(AppError::format(path, format!("unsupported format version {}", m.format_version)));
    }
    if digest_of(&m.config) != m.config_digest {
        return Err(AppError::format(path, "configuration digest does not match the stored configuration"));
    }
    Ok(m)
}

/// Parses one JSON-lines file, checking every record's invariants.
pub fn read_jsonl(path: &Path) -> Result<Vec<LabeledSample>> {
    let f = File::open(path).map_err(|e| AppError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| AppError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let s: LabeledSample =
            serde_json::from_str(&line).map_err(|e| AppError::format(path, format!("line {}: {e}", i + 1)))?;
        s.check_invariants()
            .map_err(|e| AppError::format(path, format!("line {}: {e}", i + 1)))?;
        out.push(s);
    }
    Ok(out)
}

/// Loads one split of a dataset after verifying its digest against the manifest.
pub fn load_split(manifest_file: &Path, split: DatasetSplit) -> Result<Vec<LabeledSample>> {
    let m = load_manifest(manifest_file)?;
    let entry = m
        .files
        .get(split.name())
        .ok_or_else(|| AppError::format(manifest_file, format!("no {} split listed", split.name())))?;
    let dir = manifest_file.parent().unwrap_or(Path::new("."));
    let path = dir.join(&entry.file);
    let bytes = std::fs::read(&path).map_err(|e| AppError::io(&path, e))?;
    if sha256_hex(&bytes) != entry.sha256 {
        return Err(AppError::format(&path, "file digest does not match the manifest"));
    }
    let samples = read_jsonl(&path)?;
    if samples.len() != entry.records {
        return Err(AppError::format(
            &path,
            format!("{} records, manifest lists {}", samples.len(), entry.records),
        ));
    }
    Ok(samples)
}

// Packed binary layout, all little-endian:
//   header: magic (8 bytes), version u32, n_mom u32, n_lag u32, n_pow u32, count u64
//   record: payload length u32, then split u8, index u64, stream u64, retries u32,
//           dims 2×u32, methods 2×u8, mean_ratio f64, input_a, input_b, target as f64.

fn write_bin_header(w: &mut impl Write, grid: Grid, count: u64) -> std::io::Result<()> {
    w.write_all(BIN_MAGIC)?;
    for v in [FORMAT_VERSION, grid.n_mom as u32, grid.n_lag as u32, grid.n_pow as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&count.to_le_bytes())
}

fn split_code(s: DatasetSplit) -> u8 {
    DatasetSplit::ALL.iter().position(|x| *x == s).unwrap_or(0) as u8
}

fn method_code(m: Method) -> u8 {
    Method::ALL.iter().position(|x| *x == m).unwrap_or(0) as u8
}

fn write_bin_record(w: &mut impl Write, s: &LabeledSample) -> std::io::Result<()> {
    let mut p = Vec::with_capacity(64 + 8 * (2 * s.input_a.grid.feature_len() + Grid::TARGET.feature_len()));
    p.push(split_code(s.meta.split));
    p.extend_from_slice(&s.meta.index.to_le_bytes());
    p.extend_from_slice(&s.meta.stream.to_le_bytes());
    p.extend_from_slice(&s.meta.retries.to_le_bytes());
    for d in s.meta.dims {
        p.extend_from_slice(&(d as u32).to_le_bytes());
    }
    p.extend(s.meta.methods.map(method_code));
    p.extend_from_slice(&s.meta.mean_ratio.to_le_bytes());
    for v in s.input_a.features().chain(s.input_b.features()).chain(s.target.features()) {
        p.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&(p.len() as u32).to_le_bytes())?;
    w.write_all(&p)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Option<f64> {
        self.take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()))
    }

    fn log_descriptor(&mut self, grid: Grid) -> Option<LogDescriptor> {
        let log_moments = (0..grid.n_mom).map(|_| self.f64()).collect::<Option<Vec<_>>>()?;
        let autocorr = (0..grid.autocorr_len()).map(|_| self.f64()).collect::<Option<Vec<_>>>()?;
        Some(LogDescriptor {
            grid,
            log_moments,
            autocorr,
        })
    }
}

/// Reads a packed binary split.
pub fn read_bin(path: &Path) -> Result<Vec<LabeledSample>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| AppError::io(path, e))?;
    let bad = |msg: &str| AppError::format(path, msg.to_string());
    let mut c = Cursor { buf: &bytes, pos: 0 };
    if c.take(8) != Some(&BIN_MAGIC[..]) {
        return Err(bad("missing SMAPDS01 magic"));
    }
    let version = c.u32().ok_or_else(|| bad("truncated header"))?;
    if version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported format version {version}")));
    }
    let dims: Vec<u32> = (0..3).map(|_| c.u32()).collect::<Option<_>>().ok_or_else(|| bad("truncated header"))?;
    let grid = Grid::new(dims[0] as usize, dims[1] as usize, dims[2] as usize)?;
    let count = c.u64().ok_or_else(|| bad("truncated header"))?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = c.u32().ok_or_else(|| bad("truncated record"))? as usize;
        let payload = c.take(len).ok_or_else(|| bad("truncated record"))?;
        let mut r = Cursor { buf: payload, pos: 0 };
        let sample = (|| {
            let split = *DatasetSplit::ALL.get(r.u8()? as usize)?;
            let index = r.u64()?;
            let stream = r.u64()?;
            let retries = r.u32()?;
            let dims = [r.u32()? as usize, r.u32()? as usize];
            let methods = [*Method::ALL.get(r.u8()? as usize)?, *Method::ALL.get(r.u8()? as usize)?];
            let mean_ratio = r.f64()?;
            let input_a = r.log_descriptor(grid)?;
            let input_b = r.log_descriptor(grid)?;
            let target = r.log_descriptor(Grid::TARGET)?;
            (r.pos == payload.len()).then_some(LabeledSample {
                meta: SampleMeta {
                    split,
                    index,
                    stream,
                    retries,
                    dims,
                    methods,
                    mean_ratio,
                },
                input_a,
                input_b,
                target,
            })
        })()
        .ok_or_else(|| bad("malformed record"))?;
        out.push(sample);
    }
    if c.pos != bytes.len() {
        return Err(bad("trailing bytes after the last record"));
    }
    Ok(out)
}
