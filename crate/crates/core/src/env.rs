//! Episodic environment around the simulator: binary/index observations,
//! action decoding and masking, overlap-shaped reward and termination.

use crate::overlap::{OverlapEngine, OverlapError};
use crate::shapes::TargetShape;
use crate::sim::{
    canvas_side_for, render_images, Connectivity, Ensemble, GridImage, MoveCommand, MoveOutcome,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("action {action} out of range for {cubes} cubes")]
    ActionOutOfRange { action: usize, cubes: usize },
    #[error("episode already finished; call reset")]
    EpisodeFinished,
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error(transparent)]
    Overlap(#[from] OverlapError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub alpha0: f64,
    pub alpha1: f64,
    pub gamma0: f64,
    pub gamma1: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            alpha0: 0.7,
            alpha1: 0.7,
            gamma0: 1.2,
            gamma1: 1.2,
        }
    }
}

/// Per-step reward from the current and previous overlap.
///
/// `1` on reaching the target; otherwise `+(α₀/S)(O/Oₘₐₓ)^γ₀` when the
/// overlap did not drop and `−(α₁/S)(O/Oₘₐₓ)^γ₁` when it did.
pub fn reward(o_t: usize, o_prev: usize, o_max: usize, s_max: usize, p: &RewardParams) -> f64 {
    if o_t == o_max {
        return 1.0;
    }
    let frac = o_t as f64 / o_max as f64;
    if o_t >= o_prev {
        p.alpha0 / s_max as f64 * frac.powf(p.gamma0)
    } else {
        -p.alpha1 / s_max as f64 * frac.powf(p.gamma1)
    }
}

/// `a ↦ (⌊a/2⌋, a mod 2)`.
pub fn decode_action(a: usize, cubes: usize) -> Result<MoveCommand, EnvError> {
    if a >= 2 * cubes {
        return Err(EnvError::ActionOutOfRange { action: a, cubes });
    }
    Ok(MoveCommand::from_action(a))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvConfig {
    pub target: TargetShape,
    pub canvas_side: usize,
    pub max_steps: usize,
    pub connectivity: Connectivity,
    pub reward: RewardParams,
    pub seed: u64,
}

impl EnvConfig {
    pub fn new(target: TargetShape, max_steps: usize) -> Self {
        let canvas_side = canvas_side_for(target.len());
        Self {
            target,
            canvas_side,
            max_steps,
            connectivity: Connectivity::Full,
            reward: RewardParams::default(),
            seed: 0,
        }
    }

    pub fn n_cubes(&self) -> usize {
        self.target.len()
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let r = &self.reward;
        if self.max_steps == 0 {
            return Err(EnvError::Config("max_steps must be at least 1".into()));
        }
        if !(r.alpha0 > 0.0 && r.alpha1 > 0.0 && r.gamma0 > 0.0 && r.gamma1 > 0.0) {
            return Err(EnvError::Config(
                "reward alphas and gammas must be positive".into(),
            ));
        }
        if self.canvas_side < canvas_side_for(self.n_cubes()) {
            return Err(EnvError::Config(format!(
                "canvas side {} too small for {} cubes (need {})",
                self.canvas_side,
                self.n_cubes(),
                canvas_side_for(self.n_cubes())
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepInfo {
    pub overlap: usize,
    pub steps: usize,
    /// `None` on reset.
    pub outcome: Option<MoveOutcome>,
    pub success: bool,
    /// Ended by the step budget or by an empty action mask rather than success.
    pub truncated: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: GridImage,
    pub reward: f64,
    pub done: bool,
    pub mask: Vec<bool>,
    pub info: StepInfo,
}

/// One episode at a time over a fixed target shape.
pub struct CubeEnv {
    config: EnvConfig,
    engine: OverlapEngine,
    ensemble: Ensemble,
    steps: usize,
    prev_overlap: usize,
    done: bool,
}

impl CubeEnv {
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let target_img = render_images(&config.target.ensemble(), config.canvas_side)
            .map_err(|e| EnvError::Config(e.to_string()))?;
        let engine = OverlapEngine::new(&target_img);
        let ensemble = config.target.ensemble();
        let n = ensemble.len();
        Ok(Self {
            config,
            engine,
            ensemble,
            steps: 0,
            prev_overlap: n,
            done: true,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn set_connectivity(&mut self, mode: Connectivity) {
        self.config.connectivity = mode;
    }

    pub fn observation(&self) -> GridImage {
        render_images(&self.ensemble, self.config.canvas_side)
            .expect("canvas fits any connected ensemble")
    }

    pub fn action_mask(&self) -> Vec<bool> {
        self.ensemble.legal_moves(self.config.connectivity)
    }

    pub fn current_overlap(&self) -> Result<usize, EnvError> {
        Ok(self.engine.overlap(&self.observation())?.overlap)
    }

    /// Fresh random connected start.
    pub fn reset(&mut self, seed: u64) -> Result<StepResult, EnvError> {
        self.reset_to(Ensemble::random_connected(self.config.n_cubes(), seed))
    }

    /// Start from a given configuration (e.g. the target itself).
    pub fn reset_to(&mut self, ensemble: Ensemble) -> Result<StepResult, EnvError> {
        if ensemble.len() != self.config.n_cubes() {
            return Err(EnvError::Config(format!(
                "initial state has {} cubes, target has {}",
                ensemble.len(),
                self.config.n_cubes()
            )));
        }
        self.ensemble = ensemble;
        self.steps = 0;
        let observation = self.observation();
        let overlap = self.engine.overlap(&observation)?.overlap;
        self.prev_overlap = overlap;
        let success = overlap == self.config.target.max_overlap();
        let mask = self.action_mask();
        let stuck = !success && !mask.iter().any(|&m| m);
        self.done = success || stuck;
        Ok(StepResult {
            observation,
            reward: if success { 1.0 } else { 0.0 },
            done: self.done,
            mask,
            info: StepInfo {
                overlap,
                steps: 0,
                outcome: None,
                success,
                truncated: stuck,
            },
        })
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        let cmd = decode_action(action, self.config.n_cubes())?;
        let outcome = self.ensemble.apply_move(cmd, self.config.connectivity);
        self.steps += 1;
        let observation = self.observation();
        let overlap = self.engine.overlap(&observation)?.overlap;
        let o_max = self.config.target.max_overlap();
        let mut r = reward(
            overlap,
            self.prev_overlap,
            o_max,
            self.config.max_steps,
            &self.config.reward,
        );
        self.prev_overlap = overlap;
        let success = overlap == o_max;
        let mask = self.action_mask();
        let stuck = !success && !mask.iter().any(|&m| m);
        if stuck {
            r = 0.0;
        }
        let out_of_budget = !success && self.steps >= self.config.max_steps;
        self.done = success || stuck || out_of_budget;
        Ok(StepResult {
            observation,
            reward: r,
            done: self.done,
            mask,
            info: StepInfo {
                overlap,
                steps: self.steps,
                outcome: Some(outcome),
                success,
                truncated: stuck || out_of_budget,
            },
        })
    }
}
