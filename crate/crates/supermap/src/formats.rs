//! JSON file formats for MAPs, descriptors and generic configuration, plus
//! the digest helper shared by every manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use supermap_core::linalg::Matrix;
use supermap_core::map::MarkovArrivalProcess;
use supermap_core::{DescriptorSet, Grid};

use crate::error::{AppError, Result};

/// Lowercase hex encoding.
pub fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(2 * bytes.len());
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Digest of a value's canonical JSON serialization.
pub fn digest_of<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("serializable value"))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| AppError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| AppError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| AppError::format(path, e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    write_text(path, &text)
}

/// On-disk MAP: row-major `d0` and `d1` of a `dim × dim` process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFile {
    pub dim: usize,
    pub d0: Vec<f64>,
    pub d1: Vec<f64>,
}

impl MapFile {
    pub fn from_map(map: &MarkovArrivalProcess) -> Self {
        MapFile {
            dim: map.dim(),
            d0: map.d0().as_slice().to_vec(),
            d1: map.d1().as_slice().to_vec(),
        }
    }

    pub fn to_map(&self) -> Result<MarkovArrivalProcess> {
        let n = self.dim;
        if self.d0.len() != n * n || self.d1.len() != n * n {
            return Err(AppError::config(format!(
                "MAP of dimension {n} needs {} entries per matrix, found {} and {}",
                n * n,
                self.d0.len(),
                self.d1.len()
            )));
        }
        Ok(MarkovArrivalProcess::new(
            Matrix::from_row_major(n, n, self.d0.clone())?,
            Matrix::from_row_major(n, n, self.d1.clone())?,
        )?)
    }
}

fn push_array(out: &mut String, values: &[f64]) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        // 17 significant digits reproduce every finite double exactly.
        let _ = write!(out, "{v:.16e}");
    }
    out.push(']');
}

/// MAP JSON with every entry written to 17 significant digits.
pub fn map_to_json(map: &MarkovArrivalProcess) -> String {
    let mut out = format!("{{\"dim\": {}, \"d0\": ", map.dim());
    push_array(&mut out, map.d0().as_slice());
    out.push_str(", \"d1\": ");
    push_array(&mut out, map.d1().as_slice());
    out.push_str("}\n");
    out
}

pub fn map_from_json(text: &str) -> Result<MarkovArrivalProcess> {
    let file: MapFile = serde_json::from_str(text).map_err(|e| AppError::config(format!("MAP JSON: {e}")))?;
    file.to_map()
}

pub fn write_map(path: &Path, map: &MarkovArrivalProcess) -> Result<()> {
    write_text(path, &map_to_json(map))
}

pub fn read_map(path: &Path) -> Result<MarkovArrivalProcess> {
    map_from_json(&read_text(path)?).map_err(|e| match e {
        AppError::Config(msg) => AppError::format(path, msg),
        other => other,
    })
}

/// On-disk descriptor with raw moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorFile {
    pub n_mom: usize,
    pub n_lag: usize,
    pub n_pow: usize,
    pub moments: Vec<f64>,
    /// Lexicographic in `(k, a1, a2)`.
    pub autocorr: Vec<f64>,
}

impl DescriptorFile {
    pub fn from_descriptor(d: &DescriptorSet) -> Self {
        let g = d.grid();
        DescriptorFile {
            n_mom: g.n_mom,
            n_lag: g.n_lag,
            n_pow: g.n_pow,
            moments: d.moments().to_vec(),
            autocorr: d.autocorr().to_vec(),
        }
    }

    pub fn to_descriptor(&self) -> Result<DescriptorSet> {
        let grid = Grid::new(self.n_mom, self.n_lag, self.n_pow)?;
        Ok(DescriptorSet::new(grid, self.moments.clone(), self.autocorr.clone())?)
    }
}

/// A stream given either as a MAP or directly by its descriptor; the two
/// shapes are told apart by their fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StreamFile {
    Map(MapFile),
    Descriptor(DescriptorFile),
}

impl StreamFile {
    /// Descriptor of the stream on `grid`.
    pub fn descriptor(&self, grid: Grid) -> Result<DescriptorSet> {
        match self {
            StreamFile::Map(m) => Ok(m.to_map()?.descriptor_set(grid)?),
            StreamFile::Descriptor(d) => Ok(d.to_descriptor()?.restrict(grid)?),
        }
    }
}
