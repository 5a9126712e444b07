//! `model.json` (config plus layout manifest) and `weights.bin`
//! (little-endian f64 in manifest order).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layout::Layout;
use super::model::{ModelConfig, SequenceModel};
use super::{Result, SeqError};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub num_params: usize,
    pub layout: Layout,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SeqError + '_ {
    move |source| SeqError::Io { path: path.display().to_string(), source }
}

pub fn write_weights(params: &[f64], path: &Path) -> Result<()> {
    let bytes: Vec<u8> = params.iter().flat_map(|p| p.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_weights(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() != expected * 8 {
        return Err(SeqError::Checkpoint(format!(
            "{}: expected {} bytes, found {}",
            path.display(),
            expected * 8,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn save_model(model: &SequenceModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = Checkpoint {
        format_version: CHECKPOINT_VERSION,
        config: model.config.clone(),
        num_params: model.num_params(),
        layout: model.layout().clone(),
    };
    let path = dir.join("model.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(io_err(&path))?;
    write_weights(&model.params, &dir.join("weights.bin"))
}

pub fn load_model(dir: &Path) -> Result<SequenceModel> {
    let path = dir.join("model.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: Checkpoint =
        serde_json::from_str(&text).map_err(|e| SeqError::Checkpoint(e.to_string()))?;
    if manifest.format_version != CHECKPOINT_VERSION {
        return Err(SeqError::Checkpoint(format!(
            "unsupported checkpoint version {}",
            manifest.format_version
        )));
    }
    let model = SequenceModel::zeros(manifest.config.clone())?;
    if model.layout() != &manifest.layout || model.num_params() != manifest.num_params {
        return Err(SeqError::Checkpoint("layout manifest disagrees with config".into()));
    }
    let params = read_weights(&dir.join("weights.bin"), manifest.num_params)?;
    SequenceModel::from_params(manifest.config, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqcore::HeadKind;

    #[test]
    fn save_load_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ModelConfig::desk_scale(2, 1, 50, HeadKind::Reward);
        let model = SequenceModel::new(cfg, 17).unwrap();
        save_model(&model, dir.path()).unwrap();
        let back = load_model(dir.path()).unwrap();
        assert_eq!(back, model);
        assert!(back.params.iter().zip(&model.params).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn truncated_weights_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ModelConfig::desk_scale(2, 1, 50, HeadKind::State);
        save_model(&SequenceModel::new(cfg, 1).unwrap(), dir.path()).unwrap();
        let w = dir.path().join("weights.bin");
        let bytes = fs::read(&w).unwrap();
        fs::write(&w, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_model(dir.path()), Err(SeqError::Checkpoint(_))));
    }
}
