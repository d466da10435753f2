//! Rollout collection and the update loop.

use crate::buffer::RolloutBuffer;
use crate::dist::{DistError, MaskedCategorical};
use crate::loss::{ppo_loss, LossCoefs, LossStats};
use crate::optim::{clip_grad_norm, Adam};
use cubeswarm_core::{CellCoord, CubeEnv, EnvConfig, EnvError, StepResult};
use cubeswarm_geonet::{save_checkpoint, CellBatch, CheckpointError, PolicyValueNet, Scalar};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub total_steps: usize,
    /// Steps per environment per rollout.
    pub steps_per_rollout: usize,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub clip_range: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub adam_eps: f64,
    pub n_envs: usize,
    pub seed: u64,
    pub normalize_advantages: bool,
    /// Add `γ·V(s')` to the reward of steps cut by the step budget.
    pub bootstrap_timeouts: bool,
    /// Save a checkpoint every this many updates (0: final only).
    pub checkpoint_every: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            total_steps: 40_000,
            steps_per_rollout: 256,
            epochs_per_update: 10,
            minibatch_size: 64,
            learning_rate: 3e-4,
            clip_range: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            adam_eps: 1e-5,
            n_envs: 8,
            seed: 0,
            normalize_advantages: true,
            bootstrap_timeouts: true,
            checkpoint_every: 5,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.total_steps == 0 || self.steps_per_rollout == 0 || self.n_envs == 0 {
            return bad("total_steps, steps_per_rollout and n_envs must be positive");
        }
        if self.epochs_per_update == 0 || self.minibatch_size == 0 {
            return bad("epochs_per_update and minibatch_size must be positive");
        }
        if !(self.clip_range > 0.0 && self.clip_range < 1.0) {
            return bad("clip_range must lie in (0, 1)");
        }
        let positive = [
            self.learning_rate,
            self.gamma,
            self.gae_lambda,
            self.value_coef,
            self.max_grad_norm,
            self.adam_eps,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("learning_rate, gamma, gae_lambda, value_coef, max_grad_norm and adam_eps must be positive");
        }
        if self.gamma > 1.0 || self.gae_lambda > 1.0 {
            return bad("gamma and gae_lambda must be at most 1");
        }
        if !(self.entropy_coef >= 0.0 && self.entropy_coef.is_finite()) {
            return bad("entropy_coef must be non-negative");
        }
        Ok(())
    }

    pub fn rollout_size(&self) -> usize {
        self.n_envs * self.steps_per_rollout
    }

    /// `⌈total_steps / (n_envs · steps_per_rollout)⌉`.
    pub fn num_updates(&self) -> usize {
        self.total_steps.div_ceil(self.rollout_size())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("non-finite loss at update {update}, epoch {epoch}: {stats:?}")]
    NonFinite {
        update: usize,
        epoch: usize,
        stats: LossStats,
    },
}

/// One line of the metrics log. Contains no wall-clock data so that two
/// runs with the same seed write identical logs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub update: usize,
    pub steps: usize,
    /// Episodes that ended during this rollout.
    pub episodes: usize,
    pub mean_episode_reward: Option<f64>,
    pub mean_episode_length: Option<f64>,
    pub success_rate: Option<f64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub update: usize,
    pub steps: usize,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub updates: usize,
    pub steps: usize,
    pub metrics: Vec<UpdateMetrics>,
    pub checkpoints: Vec<CheckpointEntry>,
}

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const INDEX_FILE: &str = "checkpoints.json";

struct Worker {
    env: CubeEnv,
    last: StepResult,
    action_rng: ChaCha8Rng,
    reset_rng: ChaCha8Rng,
    episode_reward: f64,
}

impl Worker {
    /// Resets until the episode is live (starts already on the target or
    /// without a legal move are skipped).
    fn reset(&mut self) -> Result<(), EnvError> {
        loop {
            let seed = self.reset_rng.random::<u64>();
            self.last = self.env.reset(seed)?;
            self.episode_reward = 0.0;
            if !self.last.done {
                return Ok(());
            }
        }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn forward_coords<T: Scalar>(
    net: &PolicyValueNet<T>,
    obs: &[&[CellCoord]],
) -> (CellBatch, Vec<f64>, Vec<Vec<f64>>) {
    let batch = CellBatch::from_coords(obs, net.config().kernel / 2);
    let cache = net.forward(&batch);
    let logits = (0..obs.len())
        .map(|s| {
            cache
                .sample_logits(&batch, s)
                .iter()
                .map(|v| v.f64())
                .collect()
        })
        .collect();
    let values = cache.values.iter().map(|v| v.f64()).collect();
    (batch, values, logits)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)
}

/// Trains `net` in place. With `out_dir`, writes `metrics.jsonl`, periodic
/// checkpoints `ckpt_NNNNN.bin` and their index `checkpoints.json`.
/// `on_update` sees every metrics line as it is produced.
pub fn train<T: Scalar>(
    env_config: &EnvConfig,
    net: &mut PolicyValueNet<T>,
    cfg: &PpoConfig,
    out_dir: Option<&Path>,
    mut on_update: impl FnMut(&UpdateMetrics),
) -> Result<TrainSummary, TrainError> {
    cfg.validate()?;
    env_config.validate()?;
    let mut metrics_file = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(std::io::BufWriter::new(std::fs::File::create(
                dir.join(METRICS_FILE),
            )?))
        }
        None => None,
    };

    let mut workers = Vec::with_capacity(cfg.n_envs);
    for e in 0..cfg.n_envs as u64 {
        let mut env = CubeEnv::new(env_config.clone())?;
        let mut w = Worker {
            last: env.reset(0)?,
            env,
            action_rng: stream_rng(cfg.seed, 2 * e + 2),
            reset_rng: stream_rng(cfg.seed, 2 * e + 3),
            episode_reward: 0.0,
        };
        w.reset()?;
        workers.push(w);
    }
    let mut shuffle_rng = stream_rng(cfg.seed, 1);
    let mut opt = Adam::new(net.num_params(), cfg.learning_rate, cfg.adam_eps);
    let mut grads = vec![T::zero(); net.num_params()];
    let coefs = LossCoefs {
        clip_range: cfg.clip_range,
        value_coef: cfg.value_coef,
        entropy_coef: cfg.entropy_coef,
    };
    let mut summary = TrainSummary {
        updates: 0,
        steps: 0,
        metrics: Vec::new(),
        checkpoints: Vec::new(),
    };
    let updates = cfg.num_updates();

    for update in 1..=updates {
        let mut buffer = RolloutBuffer::new(cfg.n_envs);
        let (mut episodes, mut successes, mut ep_reward_sum, mut ep_len_sum) =
            (0usize, 0usize, 0.0, 0usize);
        for _ in 0..cfg.steps_per_rollout {
            let obs: Vec<Vec<CellCoord>> = workers
                .iter()
                .map(|w| w.env.ensemble().coords().to_vec())
                .collect();
            let refs: Vec<&[CellCoord]> = obs.iter().map(|o| o.as_slice()).collect();
            let (_, values, logits) = forward_coords(net, &refs);
            let mut timeouts = Vec::new();
            for (e, w) in workers.iter_mut().enumerate() {
                let mask = w.last.mask.clone();
                let dist = MaskedCategorical::new(&logits[e], &mask)?;
                let action = dist.sample(&mut w.action_rng);
                let r = w.env.step(action)?;
                w.episode_reward += r.reward;
                let slot = buffer.len();
                buffer.push(
                    obs[e].clone(),
                    mask,
                    action,
                    dist.log_prob(action),
                    values[e],
                    r.reward,
                    r.done,
                );
                let timed_out = r.info.truncated && r.mask.iter().any(|&m| m);
                if timed_out && cfg.bootstrap_timeouts {
                    timeouts.push((slot, w.env.ensemble().coords().to_vec()));
                }
                if r.done {
                    episodes += 1;
                    successes += r.info.success as usize;
                    ep_reward_sum += w.episode_reward;
                    ep_len_sum += r.info.steps;
                    w.reset()?;
                } else {
                    w.last = r;
                }
            }
            if !timeouts.is_empty() {
                let refs: Vec<&[CellCoord]> = timeouts.iter().map(|(_, o)| o.as_slice()).collect();
                let (_, v, _) = forward_coords(net, &refs);
                for ((slot, _), v) in timeouts.iter().zip(v) {
                    buffer.rewards[*slot] += cfg.gamma * v;
                }
            }
        }
        let obs: Vec<Vec<CellCoord>> = workers
            .iter()
            .map(|w| w.env.ensemble().coords().to_vec())
            .collect();
        let refs: Vec<&[CellCoord]> = obs.iter().map(|o| o.as_slice()).collect();
        let (_, last_values, _) = forward_coords(net, &refs);
        buffer.finish(
            &last_values,
            cfg.gamma,
            cfg.gae_lambda,
            cfg.normalize_advantages,
        );
        summary.steps += buffer.len();

        let mut order: Vec<usize> = (0..buffer.len()).collect();
        let mut acc = LossStats::default();
        let mut norm_sum = 0.0;
        let mut minibatches = 0usize;
        for epoch in 0..cfg.epochs_per_update {
            order.shuffle(&mut shuffle_rng);
            for idx in order.chunks(cfg.minibatch_size) {
                let st = ppo_loss(net, &buffer, idx, &coefs, &mut grads)?;
                if !st.total.is_finite() || grads.iter().any(|g| !g.f64().is_finite()) {
                    return Err(TrainError::NonFinite {
                        update,
                        epoch,
                        stats: st,
                    });
                }
                norm_sum += clip_grad_norm(&mut grads, cfg.max_grad_norm);
                opt.step(net.params_mut(), &grads);
                acc.policy_loss += st.policy_loss;
                acc.value_loss += st.value_loss;
                acc.entropy += st.entropy;
                acc.approx_kl += st.approx_kl;
                acc.clip_fraction += st.clip_fraction;
                minibatches += 1;
            }
        }
        let k = minibatches as f64;
        let per_episode = |x: f64| (episodes > 0).then(|| x / episodes as f64);
        let m = UpdateMetrics {
            update,
            steps: summary.steps,
            episodes,
            mean_episode_reward: per_episode(ep_reward_sum),
            mean_episode_length: per_episode(ep_len_sum as f64),
            success_rate: per_episode(successes as f64),
            policy_loss: acc.policy_loss / k,
            value_loss: acc.value_loss / k,
            entropy: acc.entropy / k,
            approx_kl: acc.approx_kl / k,
            clip_fraction: acc.clip_fraction / k,
            grad_norm: norm_sum / k,
        };
        if let Some(f) = metrics_file.as_mut() {
            serde_json::to_writer(&mut *f, &m)?;
            f.write_all(b"\n")?;
            f.flush()?;
        }
        on_update(&m);
        summary.metrics.push(m);
        summary.updates = update;

        let due =
            update == updates || (cfg.checkpoint_every > 0 && update % cfg.checkpoint_every == 0);
        if let (Some(dir), true) = (out_dir, due) {
            let file = format!("ckpt_{update:05}.bin");
            let meta = serde_json::json!({
                "update": update,
                "steps": summary.steps,
                "env": env_config,
                "ppo": cfg,
            });
            save_checkpoint(&dir.join(&file), net, &meta)?;
            summary.checkpoints.push(CheckpointEntry {
                update,
                steps: summary.steps,
                file,
            });
            write_atomic(
                &dir.join(INDEX_FILE),
                &serde_json::to_vec_pretty(&summary.checkpoints)?,
            )?;
        }
    }
    Ok(summary)
}

/// Path of the newest checkpoint listed in `dir`'s index.
pub fn latest_checkpoint(dir: &Path) -> Result<PathBuf, TrainError> {
    let entries: Vec<CheckpointEntry> =
        serde_json::from_slice(&std::fs::read(dir.join(INDEX_FILE))?)?;
    let last = entries
        .iter()
        .max_by_key(|e| e.update)
        .ok_or_else(|| TrainError::Config(format!("no checkpoints in {}", dir.display())))?;
    Ok(dir.join(&last.file))
}
