//! Bank container.
//!
//! ```text
//! magic        "IQRFBANK"
//! version      u16
//! metadata     u32 length + JSON (window, params, per-area feature config)
//! forests      u32 count, then per forest: u16 area-id length, area id,
//!              u32 horizon, u64 length, forest bytes
//! checksum     SHA-256 of everything above
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{AreaModels, ForecastError, ModelBank};
use crate::features::{FeatureConfig, LAYOUT_VERSION};
use crate::qrf::io::{append_checksum, verify_checksum, ByteReader};
use crate::qrf::{Forest, HyperParams, QrfError};
use crate::util::write_atomic;

const MAGIC: &[u8; 8] = b"IQRFBANK";
pub const BANK_FORMAT_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Metadata {
    feature_layout: u32,
    trained_from: DateTime<Utc>,
    trained_to: DateTime<Utc>,
    params: HyperParams,
    latest_target: DateTime<Utc>,
    areas: Vec<AreaMetadata>,
}

#[derive(Serialize, Deserialize)]
struct AreaMetadata {
    id: String,
    config: FeatureConfig,
}

fn corrupt(e: impl std::fmt::Display) -> ForecastError {
    ForecastError::CorruptFile(e.to_string())
}

fn from_qrf(e: QrfError) -> ForecastError {
    match e {
        QrfError::CorruptFile(m) => ForecastError::CorruptFile(m),
        other => ForecastError::CorruptFile(other.to_string()),
    }
}

pub fn write_bank(bank: &ModelBank) -> Vec<u8> {
    let meta = Metadata {
        feature_layout: LAYOUT_VERSION,
        trained_from: bank.trained_on.0,
        trained_to: bank.trained_on.1,
        params: bank.params,
        latest_target: bank.latest_target,
        areas: bank
            .areas
            .iter()
            .map(|(id, m)| AreaMetadata {
                id: id.clone(),
                config: m.config.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&meta).expect("metadata serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&BANK_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(bank.forest_count() as u32).to_le_bytes());
    for (id, models) in &bank.areas {
        for (i, forest) in models.forests.iter().enumerate() {
            let blob = forest.to_bytes();
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            out.extend_from_slice(&(i as u32 + 1).to_le_bytes());
            out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
            out.extend_from_slice(&blob);
        }
    }
    append_checksum(&mut out);
    out
}

pub fn read_bank(bytes: &[u8]) -> Result<ModelBank, ForecastError> {
    let mut header = ByteReader::new(bytes);
    if header.take(MAGIC.len()).map_err(from_qrf)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = header.u16().map_err(from_qrf)?;
    if version != BANK_FORMAT_VERSION {
        return Err(ForecastError::VersionMismatch {
            found: version,
            supported: BANK_FORMAT_VERSION,
        });
    }
    let payload = verify_checksum(bytes).map_err(from_qrf)?;
    let mut r = ByteReader::new(payload);
    r.take(MAGIC.len() + 2).map_err(from_qrf)?;
    let json_len = r.u32().map_err(from_qrf)? as usize;
    let meta: Metadata = serde_json::from_slice(r.take(json_len).map_err(from_qrf)?).map_err(corrupt)?;
    if meta.feature_layout != LAYOUT_VERSION {
        return Err(corrupt(format!("feature layout {} is not supported", meta.feature_layout)));
    }
    meta.params.validate().map_err(corrupt)?;

    let mut forests: BTreeMap<(String, u32), Forest<f64>> = BTreeMap::new();
    let count = r.u32().map_err(from_qrf)?;
    for _ in 0..count {
        let id_len = r.u16().map_err(from_qrf)? as usize;
        let id = std::str::from_utf8(r.take(id_len).map_err(from_qrf)?)
            .map_err(corrupt)?
            .to_string();
        let horizon = r.u32().map_err(from_qrf)?;
        let len = usize::try_from(r.u64().map_err(from_qrf)?).map_err(corrupt)?;
        let forest = match Forest::<f64>::from_bytes(r.take(len).map_err(from_qrf)?) {
            Ok(f) => f,
            Err(QrfError::VersionMismatch { found, .. }) => {
                return Err(corrupt(format!("embedded forest has format version {found}")))
            }
            Err(e) => return Err(from_qrf(e)),
        };
        if forests.insert((id.clone(), horizon), forest).is_some() {
            return Err(corrupt(format!("duplicate forest for {id} horizon {horizon}")));
        }
    }
    if r.remaining() != 0 {
        return Err(corrupt("trailing bytes"));
    }

    let mut areas = BTreeMap::new();
    for AreaMetadata { id, config } in meta.areas {
        config.validate().map_err(corrupt)?;
        let mut list = Vec::with_capacity(config.horizons);
        for h in 1..=config.horizons as u32 {
            let forest = forests
                .remove(&(id.clone(), h))
                .ok_or_else(|| corrupt(format!("missing forest for {id} horizon {h}")))?;
            if forest.feature_dim() != config.feature_dim() {
                return Err(corrupt(format!(
                    "forest for {id} horizon {h} has dimension {}, expected {}",
                    forest.feature_dim(),
                    config.feature_dim()
                )));
            }
            list.push(forest);
        }
        if areas.insert(id.clone(), AreaModels { config, forests: list }).is_some() {
            return Err(corrupt(format!("area {id} listed twice")));
        }
    }
    if let Some((id, h)) = forests.keys().next() {
        return Err(corrupt(format!("forest for {id} horizon {h} has no area entry")));
    }
    Ok(ModelBank {
        areas,
        trained_on: (meta.trained_from, meta.trained_to),
        params: meta.params,
        latest_target: meta.latest_target,
    })
}

/// Writes the bank atomically.
pub fn save_bank(bank: &ModelBank, path: impl AsRef<Path>) -> Result<(), ForecastError> {
    Ok(write_atomic(path.as_ref(), &write_bank(bank))?)
}

pub fn load_bank(path: impl AsRef<Path>) -> Result<ModelBank, ForecastError> {
    read_bank(&std::fs::read(path)?)
}
