//! Model checkpoints.
//!
//! Layout: magic `TFCK`, format version (u16 LE), header length (u32 LE),
//! a JSON header, parameter count (u32 LE), then per parameter its name
//! (u16 LE length + UTF-8) followed by the tensor in `TFTN` encoding.
//! The header records the model kind, its configuration, and the SHA-256 of
//! that configuration's JSON encoding.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::param::{ParamStore, Parameter};
use crate::pix2pix::{Direction, TranslationConfig, TranslationModel};
use crate::progan::{self, ProGan, ProGanConfig};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TFCK";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: String,
    pub config: serde_json::Value,
    pub config_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1_weight: Option<f64>,
}

impl CheckpointHeader {
    pub fn new(kind: &str, config: &impl Serialize) -> Result<Self> {
        let config = serde_json::to_value(config).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            kind: kind.to_string(),
            config_digest: digest_json(&config)?,
            config,
            stage: None,
            alpha: None,
            direction: None,
            l1_weight: None,
        })
    }
}

/// SHA-256 (hex) of the compact JSON encoding of `value`.
pub fn config_digest(value: &impl Serialize) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Config(e.to_string()))?;
    digest_json(&v)
}

fn digest_json(v: &serde_json::Value) -> Result<String> {
    let bytes = serde_json::to_vec(v).map_err(|e| Error::Config(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn corrupt(what: &str) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Corruption(format!("{what}: {e}"))
}

pub fn write_checkpoint(w: &mut impl Write, header: &CheckpointHeader, stores: &[&ParamStore<f32>]) -> Result<()> {
    let io = |e: std::io::Error| Error::Corruption(format!("writing checkpoint: {e}"));
    let json = serde_json::to_vec(header).map_err(|e| Error::Config(e.to_string()))?;
    w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(json.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    let count: usize = stores.iter().map(|s| s.len()).sum();
    w.write_all(&(count as u32).to_le_bytes()).map_err(io)?;
    for store in stores {
        for p in store.iter() {
            let name = p.name().as_bytes();
            let len = u16::try_from(name.len()).map_err(|_| Error::Config(format!("parameter name too long: {}", p.name())))?;
            w.write_all(&len.to_le_bytes()).map_err(io)?;
            w.write_all(name).map_err(io)?;
            p.value().write_to(w).map_err(io)?;
        }
    }
    Ok(())
}

/// Header and every stored parameter, in file order. The header's config
/// digest is verified.
pub fn read_checkpoint(r: &mut impl Read) -> Result<(CheckpointHeader, ParamStore<f32>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(corrupt("checkpoint magic"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Corruption("not a checkpoint (bad magic)".into()));
    }
    let mut b2 = [0u8; 2];
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b2).map_err(corrupt("checkpoint version"))?;
    let version = u16::from_le_bytes(b2);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Corruption(format!("unsupported checkpoint version {version}")));
    }
    r.read_exact(&mut b4).map_err(corrupt("header length"))?;
    let mut json = vec![0u8; u32::from_le_bytes(b4) as usize];
    r.read_exact(&mut json).map_err(corrupt("header"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&json).map_err(|e| Error::Corruption(format!("checkpoint header: {e}")))?;
    if digest_json(&header.config)? != header.config_digest {
        return Err(Error::Corruption("checkpoint config digest mismatch".into()));
    }
    r.read_exact(&mut b4).map_err(corrupt("parameter count"))?;
    let count = u32::from_le_bytes(b4);
    let mut store = ParamStore::new();
    for _ in 0..count {
        r.read_exact(&mut b2).map_err(corrupt("parameter name length"))?;
        let mut name = vec![0u8; u16::from_le_bytes(b2) as usize];
        r.read_exact(&mut name).map_err(corrupt("parameter name"))?;
        let name = String::from_utf8(name).map_err(|e| Error::Corruption(format!("parameter name: {e}")))?;
        let value = Tensor::read_from(r)?;
        store
            .insert(Parameter::new(name, value))
            .map_err(|e| Error::Corruption(e.to_string()))?;
    }
    Ok((header, store))
}

/// Overwrite every parameter of `target` with the same-named entry of
/// `source`. Missing names or shape changes are corruption.
pub fn restore_params(target: &mut ParamStore<f32>, source: &ParamStore<f32>) -> Result<()> {
    for p in target.iter_mut() {
        let src = source
            .get(p.name())
            .ok_or_else(|| Error::Corruption(format!("checkpoint lacks parameter {}", p.name())))?;
        if src.value().shape() != p.value().shape() {
            return Err(Error::Corruption(format!(
                "parameter {} has shape {:?} in checkpoint, model expects {:?}",
                p.name(),
                src.value().shape(),
                p.value().shape()
            )));
        }
        *p.value_mut() = src.value().clone();
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

fn expect_kind(header: &CheckpointHeader, kind: &str) -> Result<()> {
    if header.kind != kind {
        return Err(Error::Corruption(format!(
            "expected a {kind} checkpoint, found {}",
            header.kind
        )));
    }
    Ok(())
}

pub const PROGAN_KIND: &str = "progan";
pub const TRANSLATION_KIND: &str = "pix2pix";

pub fn save_progan(path: &Path, model: &ProGan, config: &ProGanConfig) -> Result<()> {
    let state = progan::fade_state(model);
    let mut header = CheckpointHeader::new(PROGAN_KIND, config)?;
    header.stage = Some(state.stage_index);
    header.alpha = Some(state.alpha);
    let mut w = create(path)?;
    write_checkpoint(&mut w, &header, &[&model.g_params, &model.d_params])?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Rebuild a staged model from a checkpoint: the architecture is grown to
/// the recorded stage, then every weight is replaced by the stored one.
pub fn load_progan(path: &Path) -> Result<(ProGan, ProGanConfig)> {
    let (header, stored) = read_checkpoint(&mut open(path)?)?;
    expect_kind(&header, PROGAN_KIND)?;
    let config: ProGanConfig =
        serde_json::from_value(header.config.clone()).map_err(|e| Error::Corruption(e.to_string()))?;
    let mut rng = Rng::new(0);
    let mut model = progan::new_progan(&config, &mut rng)?;
    for _ in 0..header.stage.unwrap_or(0) {
        progan::grow(&mut model, &mut rng).map_err(|e| Error::Corruption(e.to_string()))?;
    }
    progan::set_alpha(&mut model, header.alpha.unwrap_or(1.0)).map_err(|e| Error::Corruption(e.to_string()))?;
    restore_params(&mut model.g_params, &stored)?;
    restore_params(&mut model.d_params, &stored)?;
    Ok((model, config))
}

pub fn save_translation(path: &Path, model: &TranslationModel, config: &TranslationConfig) -> Result<()> {
    let mut header = CheckpointHeader::new(TRANSLATION_KIND, config)?;
    header.direction = Some(model.direction);
    header.l1_weight = Some(model.l1_weight);
    let mut w = create(path)?;
    write_checkpoint(&mut w, &header, &[&model.g_params, &model.d_params])?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_translation(path: &Path) -> Result<(TranslationModel, TranslationConfig)> {
    let (header, stored) = read_checkpoint(&mut open(path)?)?;
    expect_kind(&header, TRANSLATION_KIND)?;
    let config: TranslationConfig =
        serde_json::from_value(header.config.clone()).map_err(|e| Error::Corruption(e.to_string()))?;
    let mut model = TranslationModel::new(&config, &mut Rng::new(0))?;
    restore_params(&mut model.g_params, &stored)?;
    restore_params(&mut model.d_params, &stored)?;
    Ok((model, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan::sample_noise;
    use crate::pix2pix::translate;

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = ProGanConfig::default();
        let b = ProGanConfig {
            latent_dim: 7,
            ..a
        };
        assert_eq!(config_digest(&a).unwrap(), config_digest(&a).unwrap());
        assert_ne!(config_digest(&a).unwrap(), config_digest(&b).unwrap());
        assert_eq!(config_digest(&a).unwrap().len(), 64);
    }

    #[test]
    fn progan_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.tfck");
        let config = ProGanConfig {
            latent_dim: 8,
            target_resolution: 16,
            ..Default::default()
        };
        let mut model = progan::new_progan(&config, &mut Rng::new(3)).unwrap();
        progan::grow(&mut model, &mut Rng::new(4)).unwrap();
        progan::set_alpha(&mut model, 0.25).unwrap();
        save_progan(&path, &model, &config).unwrap();
        let (loaded, cfg) = load_progan(&path).unwrap();
        assert_eq!(cfg, config);
        assert_eq!(progan::fade_state(&loaded), progan::fade_state(&model));
        let z = sample_noise(&model.noise, 2, &mut Rng::new(1)).unwrap();
        assert_eq!(loaded.generate(&z).unwrap(), model.generate(&z).unwrap());
    }

    #[test]
    fn translation_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tfck");
        let config = TranslationConfig {
            direction: Direction::DemToRgb,
            resolution: 16,
            base_channels: 4,
            ..Default::default()
        };
        let model = TranslationModel::new(&config, &mut Rng::new(9)).unwrap();
        save_translation(&path, &model, &config).unwrap();
        let (loaded, _) = load_translation(&path).unwrap();
        let x = Tensor::full(&[1, 1, 16, 16], 0.3f32);
        assert_eq!(translate(&loaded, &x).unwrap(), translate(&model, &x).unwrap());
        assert!(matches!(load_progan(&path), Err(Error::Corruption(_))));
    }

    #[test]
    fn tampering_is_detected() {
        let config = ProGanConfig::default();
        let model = progan::new_progan(&config, &mut Rng::new(0)).unwrap();
        let mut bytes = Vec::new();
        let mut header = CheckpointHeader::new(PROGAN_KIND, &config).unwrap();
        header.config_digest = "0".repeat(64);
        write_checkpoint(&mut bytes, &header, &[&model.g_params]).unwrap();
        assert!(matches!(read_checkpoint(&mut bytes.as_slice()), Err(Error::Corruption(_))));

        let mut bytes = Vec::new();
        let header = CheckpointHeader::new(PROGAN_KIND, &config).unwrap();
        write_checkpoint(&mut bytes, &header, &[&model.g_params]).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(read_checkpoint(&mut bytes.as_slice()), Err(Error::Corruption(_))));
        assert!(matches!(read_checkpoint(&mut &b"NOPE"[..]), Err(Error::Corruption(_))));
    }
}
