//! Bulk MAP-pair generation: one JSON file per stream plus an index.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use supermap_core::generators::{sample_map_pair_with, GeneratorConfig, Method, SamplerConfig};
use supermap_core::rng::SeedStream;

use crate::error::{AppError, Result};
use crate::formats::{digest_of, map_to_json, sha256_hex, write_json, write_text};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BulkConfig {
    pub seed: u64,
    pub count: usize,
    pub sampler: SamplerConfig,
}

impl Default for BulkConfig {
    fn default() -> Self {
        BulkConfig {
            seed: 0,
            count: 100,
            sampler: SamplerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub index: usize,
    pub first: String,
    pub second: String,
    pub first_sha256: String,
    pub second_sha256: String,
    /// Mean of the second stream; the first has unit mean.
    pub scale: f64,
    pub first_config: GeneratorConfig,
    pub second_config: GeneratorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BulkManifest {
    pub config_digest: String,
    pub config: BulkConfig,
    pub pairs: Vec<PairEntry>,
    pub run_manifest: Option<String>,
}

impl BulkManifest {
    /// Fraction of streams drawn by each method, in [`Method::ALL`] order.
    pub fn method_shares(&self) -> [f64; 3] {
        let mut counts = [0usize; 3];
        for p in &self.pairs {
            for c in [&p.first_config, &p.second_config] {
                counts[Method::ALL.iter().position(|m| *m == c.method).unwrap_or(0)] += 1;
            }
        }
        let total = (2 * self.pairs.len()).max(1) as f64;
        counts.map(|c| c as f64 / total)
    }
}

pub fn bulk_manifest_path(dir: &Path) -> PathBuf {
    dir.join("pairs.manifest.json")
}

/// Pair `i` is drawn from stream `i` of the master seed, so any prefix of a
/// larger run reproduces a smaller one.
pub fn generate_pairs(config: &BulkConfig, dir: &Path, run_manifest: Option<String>) -> Result<BulkManifest> {
    config.sampler.validate()?;
    if config.count == 0 {
        return Err(AppError::config("count must be positive"));
    }
    let seeds = SeedStream::new(config.seed);
    let pairs = (0..config.count)
        .into_par_iter()
        .map(|i| {
            let pair = sample_map_pair_with(&mut seeds.rng(i as u64), &config.sampler)?;
            let first = format!("pair{i:06}.first.json");
            let second = format!("pair{i:06}.second.json");
            let (a, b) = (map_to_json(&pair.first), map_to_json(&pair.second));
            write_text(&dir.join(&first), &a)?;
            write_text(&dir.join(&second), &b)?;
            Ok(PairEntry {
                index: i,
                first,
                second,
                first_sha256: sha256_hex(a.as_bytes()),
                second_sha256: sha256_hex(b.as_bytes()),
                scale: pair.scale,
                first_config: pair.first_config,
                second_config: pair.second_config,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = BulkManifest {
        config_digest: digest_of(config),
        config: config.clone(),
        pairs,
        run_manifest,
    };
    write_json(&bulk_manifest_path(dir), &manifest)?;
    Ok(manifest)
}
