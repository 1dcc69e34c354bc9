//! On-disk episode layout: one directory per episode holding
//! `frames.npy` (shape `T×H×W×3`, little-endian `f32` in `[0,1]`) and
//! `meta.toml` with the label metadata.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::npy;
use super::{Episode, WorldError};

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct EpisodeMeta {
    pub seed: u64,
    pub command_id: u8,
    pub caption: String,
    pub trajectory: Vec<[f64; 2]>,
    pub fps: u32,
    pub scenario: String,
}

pub fn episode_dir(root: &Path, index: usize) -> PathBuf {
    root.join(format!("episode_{index:05}"))
}

pub fn save_episode(dir: &Path, ep: &Episode) -> Result<(), WorldError> {
    std::fs::create_dir_all(dir)?;
    npy::write_npy(&dir.join("frames.npy"), &ep.frames.clone().into_dyn())?;
    let meta = EpisodeMeta {
        seed: ep.seed,
        command_id: ep.command_id,
        caption: ep.caption.clone(),
        trajectory: ep.trajectory.clone(),
        fps: ep.fps,
        scenario: ep.scenario.name().to_string(),
    };
    let text = toml::to_string_pretty(&meta).map_err(|e| WorldError::Config(e.to_string()))?;
    std::fs::write(dir.join("meta.toml"), text)?;
    Ok(())
}

pub fn load_meta(dir: &Path) -> Result<EpisodeMeta, WorldError> {
    let text = std::fs::read_to_string(dir.join("meta.toml"))?;
    toml::from_str(&text).map_err(|e| WorldError::Config(e.to_string()))
}

pub fn load_frames(dir: &Path) -> Result<ndarray::Array4<f32>, WorldError> {
    let arr = npy::read_npy(&dir.join("frames.npy"))?;
    arr.into_dimensionality::<ndarray::Ix4>()
        .map_err(|e| WorldError::Config(format!("frames file is not 4-d: {e}")))
}

/// Lists episode directories under a dataset root in index order.
pub fn list_episode_dirs(root: &Path) -> Result<Vec<PathBuf>, WorldError> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .map(|n| n.starts_with("episode_"))
                    .unwrap_or(false)
        })
        .collect();
    dirs.sort();
    Ok(dirs)
}
