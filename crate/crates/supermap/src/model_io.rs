//! `.smapnn.json` model files and `.history.csv` training logs.
//!
//! Weight blocks are base64 of little-endian `f64`s. The header records the
//! parameter count and a SHA-256 over every block in file order, so a
//! truncated or edited file is rejected on load.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use supermap_core::neural::{param_count, Activation, EpochRecord, MlpModel, Standardization};
use supermap_core::Grid;

use crate::error::{AppError, Result};
use crate::formats::{hex, read_json, write_json};

pub const MODEL_FORMAT: &str = "smapnn";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerBlock {
    pub weights: String,
    pub biases: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationBlock {
    pub in_shift: String,
    pub in_scale: String,
    pub out_shift: String,
    pub out_scale: String,
}

/// Training provenance stored alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelProvenance {
    pub best_epoch: Option<usize>,
    pub train_config_digest: Option<String>,
    pub dataset_config_digest: Option<String>,
    pub run_manifest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub input_grid: Option<Grid>,
    pub output_grid: Grid,
    pub param_count: usize,
    pub layers: Vec<LayerBlock>,
    pub standardization: StandardizationBlock,
    pub sha256: String,
    #[serde(default)]
    pub provenance: ModelProvenance,
}

fn encode(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode(path: &Path, what: &str, text: &str, len: usize) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| AppError::format(path, format!("{what}: {e}")))?;
    if bytes.len() != 8 * len {
        return Err(AppError::format(
            path,
            format!("{what}: expected {len} values, found {} bytes", bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn blocks_digest(layers: &[LayerBlock], s: &StandardizationBlock) -> String {
    let mut h = Sha256::new();
    for l in layers {
        h.update(l.weights.as_bytes());
        h.update(l.biases.as_bytes());
    }
    for b in [&s.in_shift, &s.in_scale, &s.out_shift, &s.out_scale] {
        h.update(b.as_bytes());
    }
    hex(&h.finalize())
}

impl ModelFile {
    pub fn from_model(model: &MlpModel, provenance: ModelProvenance) -> Self {
        let layers: Vec<LayerBlock> = (0..model.n_layers())
            .map(|l| {
                let (w, b) = model.layer(l);
                LayerBlock {
                    weights: encode(w),
                    biases: encode(b),
                }
            })
            .collect();
        let st = model.standardization();
        let standardization = StandardizationBlock {
            in_shift: encode(&st.in_shift),
            in_scale: encode(&st.in_scale),
            out_shift: encode(&st.out_shift),
            out_scale: encode(&st.out_scale),
        };
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            layer_sizes: model.layer_sizes().to_vec(),
            activation: model.activation(),
            input_grid: model.input_grid(),
            output_grid: model.output_grid(),
            param_count: model.param_count(),
            sha256: blocks_digest(&layers, &standardization),
            layers,
            standardization,
            provenance,
        }
    }

    /// Rebuilds the model; `path` only labels errors.
    pub fn to_model(&self, path: &Path) -> Result<MlpModel> {
        if self.format != MODEL_FORMAT || self.version != MODEL_VERSION {
            return Err(AppError::format(
                path,
                format!("unsupported model format {} v{}", self.format, self.version),
            ));
        }
        let sizes = &self.layer_sizes;
        if sizes.len() < 2 || self.layers.len() != sizes.len() - 1 {
            return Err(AppError::format(path, "layer list does not match the layer sizes"));
        }
        if param_count(sizes) != self.param_count {
            return Err(AppError::format(
                path,
                format!(
                    "header lists {} parameters, layer sizes give {}",
                    self.param_count,
                    param_count(sizes)
                ),
            ));
        }
        if blocks_digest(&self.layers, &self.standardization) != self.sha256 {
            return Err(AppError::format(path, "weight digest mismatch"));
        }
        let mut params = Vec::with_capacity(self.param_count);
        for (l, block) in self.layers.iter().enumerate() {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            params.extend(decode(path, "weights", &block.weights, n_in * n_out)?);
            params.extend(decode(path, "biases", &block.biases, n_out)?);
        }
        let (n_in, n_out) = (sizes[0], sizes[sizes.len() - 1]);
        let s = &self.standardization;
        let standardization = Standardization {
            in_shift: decode(path, "in_shift", &s.in_shift, n_in)?,
            in_scale: decode(path, "in_scale", &s.in_scale, n_in)?,
            out_shift: decode(path, "out_shift", &s.out_shift, n_out)?,
            out_scale: decode(path, "out_scale", &s.out_scale, n_out)?,
        };
        Ok(MlpModel::from_parts(
            sizes.clone(),
            self.activation,
            params,
            self.input_grid,
            self.output_grid,
            standardization,
        )?)
    }
}

pub fn save_model(model: &MlpModel, provenance: ModelProvenance, path: &Path) -> Result<()> {
    write_json(path, &ModelFile::from_model(model, provenance))
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    read_json::<ModelFile>(path)?.to_model(path)
}

/// Model and its provenance block.
pub fn load_model_file(path: &Path) -> Result<(MlpModel, ModelProvenance)> {
    let f: ModelFile = read_json(path)?;
    Ok((f.to_model(path)?, f.provenance))
}

/// Writes `epoch,train_loss,val_loss,moment_term,corr_term` rows.
pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| AppError::format(path, e.to_string()))?;
    for r in history {
        w.serialize(r).map_err(|e| AppError::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

pub fn read_history(path: &Path) -> Result<Vec<EpochRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| AppError::format(path, e.to_string()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| AppError::format(path, e.to_string())))
        .collect()
}
