//! Experiment harness: training sweeps, evaluation on random starts,
//! perturbation repair, shape morphing and trace rendering.

pub mod eval;
pub mod manifest;
pub mod render;
pub mod spec;

use cubeswarm_core::{EnvConfig, EnvError, ShapeError};
use cubeswarm_geonet::{load_checkpoint, CheckpointError, NetError, PolicyValueNet};
use cubeswarm_ppo::{latest_checkpoint, train, DistError, TrainError, TrainSummary, UpdateMetrics};
use spec::{Precision, TrainSpec};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub use eval::{evaluate, morph, perturb, EvalReport, MorphResult};
pub use manifest::RunManifest;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Mismatch(String),
    #[error("render: {0}")]
    Render(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Trace(#[from] cubeswarm_core::trace::TraceError),
}

/// Output directory of one seed of a training spec.
pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

/// Trains one seed of `spec`, writing metrics and checkpoints to `dir`.
pub fn train_seed(
    spec: &TrainSpec,
    seed: u64,
    dir: Option<&Path>,
    on_update: impl FnMut(&UpdateMetrics),
) -> Result<(PolicyValueNet<f32>, TrainSummary), BenchError> {
    let env = spec.env_config()?;
    let ncfg = spec.net_config()?;
    let ppo = spec.ppo_config(seed);
    match spec.precision {
        Precision::F32 => {
            let mut net = PolicyValueNet::<f32>::new(ncfg, seed)?;
            let s = train(&env, &mut net, &ppo, dir, on_update)?;
            Ok((net, s))
        }
        Precision::F64 => {
            let mut net = PolicyValueNet::<f64>::new(ncfg, seed)?;
            let s = train(&env, &mut net, &ppo, dir, on_update)?;
            Ok((net.cast(), s))
        }
    }
}

/// A trained policy with the environment it was trained on.
pub struct LoadedPolicy {
    pub net: PolicyValueNet<f32>,
    pub env: EnvConfig,
    pub path: PathBuf,
}

/// Loads a checkpoint file, or the newest checkpoint of a run directory.
pub fn load_policy(path: &Path) -> Result<LoadedPolicy, BenchError> {
    let file = if path.is_dir() {
        let direct = latest_checkpoint(path);
        match direct {
            Ok(f) => f,
            Err(_) => {
                // A multi-seed run directory: take the first seed.
                let mut seeds: Vec<PathBuf> = std::fs::read_dir(path)?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| {
                        p.is_dir()
                            && p.file_name()
                                .is_some_and(|n| n.to_string_lossy().starts_with("seed_"))
                    })
                    .collect();
                seeds.sort();
                let first = seeds.first().ok_or_else(|| {
                    BenchError::Config(format!("no checkpoints under {}", path.display()))
                })?;
                latest_checkpoint(first)?
            }
        }
    } else {
        path.to_path_buf()
    };
    let (net, meta) = load_checkpoint::<f32>(&file)?;
    let env: EnvConfig = serde_json::from_value(meta["env"].clone()).map_err(|e| {
        BenchError::Config(format!(
            "{}: checkpoint lacks its environment: {e}",
            file.display()
        ))
    })?;
    Ok(LoadedPolicy {
        net,
        env,
        path: file,
    })
}
