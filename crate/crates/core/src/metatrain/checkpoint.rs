//! Checkpoint = `params.bin` (little-endian f64 sections) + `manifest.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Mode, Sgd, TrainConfig, TrainState};
use crate::netcore::{DiscriminatorArch, DiscriminatorNet, GeneratorArch, GeneratorNet, Network};
use crate::{Error, Result};

pub const BLOB_FILE: &str = "params.bin";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub generator: GeneratorArch,
    pub discriminator: DiscriminatorArch,
    pub resolution: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub arch: ArchSpec,
    pub epoch: usize,
    pub mode: Mode,
    pub seed: u64,
    /// Generator plus discriminator parameters.
    pub param_count: usize,
    pub generator_params: usize,
    pub discriminator_params: usize,
    /// Blob layout, in order.
    pub sections: Vec<Section>,
    pub config: TrainConfig,
}

const SECTIONS: [&str; 6] = [
    "generator.params",
    "generator.buffers",
    "discriminator.params",
    "discriminator.buffers",
    "generator.velocity",
    "discriminator.velocity",
];

fn views(state: &TrainState) -> [&[f64]; 6] {
    [
        state.generator.params(),
        state.generator.buffers(),
        state.discriminator.params(),
        state.discriminator.buffers(),
        &state.g_opt.velocity,
        &state.d_opt.velocity,
    ]
}

/// Write `dir/params.bin` and `dir/manifest.json`, creating `dir`.
pub fn save_checkpoint(dir: &Path, state: &TrainState, cfg: &TrainConfig) -> Result<CheckpointManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let parts = views(state);
    let mut blob = Vec::with_capacity(parts.iter().map(|p| p.len() * 8).sum());
    for part in parts {
        for v in part {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        arch: ArchSpec {
            generator: state.generator.arch,
            discriminator: state.discriminator.arch,
            resolution: cfg.resolution,
        },
        epoch: state.epoch,
        mode: cfg.mode,
        seed: cfg.seed,
        param_count: state.generator.param_count() + state.discriminator.param_count(),
        generator_params: state.generator.param_count(),
        discriminator_params: state.discriminator.param_count(),
        sections: SECTIONS
            .iter()
            .zip(parts)
            .map(|(name, p)| Section {
                name: name.to_string(),
                len: p.len(),
            })
            .collect(),
        config: cfg.clone(),
    };
    let blob_path = dir.join(BLOB_FILE);
    std::fs::write(&blob_path, blob).map_err(|e| Error::io(&blob_path, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}

/// Accepts the checkpoint directory or its manifest path.
fn checkpoint_dir(path: &Path) -> PathBuf {
    if path.is_file() {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    } else {
        path.to_path_buf()
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(TrainState, CheckpointManifest)> {
    let dir = checkpoint_dir(path);
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", manifest_path.display())))?;
    let blob_path = dir.join(BLOB_FILE);
    let bytes = std::fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    let total: usize = manifest.sections.iter().map(|s| s.len).sum();
    if bytes.len() != total * 8 {
        return Err(Error::Checkpoint(format!(
            "{}: {} bytes, manifest describes {}",
            blob_path.display(),
            bytes.len(),
            total * 8
        )));
    }
    let names: Vec<&str> = manifest.sections.iter().map(|s| s.name.as_str()).collect();
    if names != SECTIONS {
        return Err(Error::Checkpoint(format!("unexpected blob sections {names:?}")));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut parts = Vec::with_capacity(SECTIONS.len());
    let mut at = 0;
    for s in &manifest.sections {
        parts.push(&values[at..at + s.len]);
        at += s.len;
    }
    let mut generator = GeneratorNet::new(manifest.arch.generator)?;
    generator.load_params(parts[0])?;
    generator.load_buffers(parts[1])?;
    let mut discriminator = DiscriminatorNet::new(manifest.arch.discriminator)?;
    discriminator.load_params(parts[2])?;
    discriminator.load_buffers(parts[3])?;
    if generator.param_count() + discriminator.param_count() != manifest.param_count {
        return Err(Error::Checkpoint("param_count disagrees with the architecture".into()));
    }
    let state = TrainState {
        generator,
        discriminator,
        epoch: manifest.epoch,
        g_opt: Sgd {
            velocity: parts[4].to_vec(),
        },
        d_opt: Sgd {
            velocity: parts[5].to_vec(),
        },
    };
    Ok((state, manifest))
}
