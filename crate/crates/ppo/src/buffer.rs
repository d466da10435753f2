//! Step-major rollout storage (`index = t·n_envs + env`). Observations are
//! kept as cube coordinates; the network only needs occupied cells.

use crate::gae::{compute_gae, normalize};
use cubeswarm_core::CellCoord;

#[derive(Clone, Debug, Default)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub obs: Vec<Vec<CellCoord>>,
    pub masks: Vec<Vec<bool>>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(n_envs: usize) -> Self {
        Self {
            n_envs,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        obs: Vec<CellCoord>,
        mask: Vec<bool>,
        action: usize,
        log_prob: f64,
        value: f64,
        reward: f64,
        done: bool,
    ) {
        debug_assert!(mask[action], "masked action stored");
        self.obs.push(obs);
        self.masks.push(mask);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.values.push(value);
        self.rewards.push(reward);
        self.dones.push(done);
    }

    /// Fills advantages and returns. Advantages are normalised afterwards
    /// when `normalize_advantages` is set; returns use the raw values.
    pub fn finish(
        &mut self,
        last_values: &[f64],
        gamma: f64,
        lambda: f64,
        normalize_advantages: bool,
    ) {
        let (mut adv, ret) = compute_gae(
            &self.rewards,
            &self.values,
            &self.dones,
            last_values,
            self.n_envs,
            gamma,
            lambda,
        );
        if normalize_advantages {
            normalize(&mut adv);
        }
        self.advantages = adv;
        self.returns = ret;
    }
}
