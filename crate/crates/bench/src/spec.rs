//! Training run description, loadable from TOML or JSON.

use crate::BenchError;
use cubeswarm_core::{Connectivity, EnvConfig, TargetShape};
use cubeswarm_geonet::{Activation, Arch, NetConfig};
use cubeswarm_ppo::PpoConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    /// Slower; bit-reproducible across runs of the same build.
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    /// Built-in shape name or path to a shape file.
    pub shape: String,
    pub arch: Arch,
    pub kernel: usize,
    pub layers: usize,
    /// Overrides the per-depth default widths.
    pub widths: Option<Vec<usize>>,
    pub activation: Activation,
    /// Defaults to on for mr-cnn with k ≠ 3.
    pub mirror: Option<bool>,
    pub seeds: Vec<u64>,
    pub total_steps: usize,
    /// Step budget per episode.
    pub episode_steps: usize,
    pub precision: Precision,
    /// `total_steps` and `seed` here are overridden by the fields above.
    pub ppo: PpoConfig,
}

pub const APPENDIX_SEEDS: [u64; 5] = [12345, 32823, 57923, 70852, 97245];

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            shape: "line".into(),
            arch: Arch::MrCnn,
            kernel: 5,
            layers: 2,
            widths: None,
            activation: Activation::Relu,
            mirror: None,
            seeds: vec![APPENDIX_SEEDS[0]],
            total_steps: 40_000,
            episode_steps: 300,
            precision: Precision::F32,
            ppo: PpoConfig::default(),
        }
    }
}

impl TrainSpec {
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)?;
        let is_toml = path.extension().is_some_and(|e| e == "toml");
        let value: serde_json::Value = if is_toml {
            let t: toml::Value = toml::from_str(&text)
                .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
            serde_json::to_value(t)?
        } else {
            serde_json::from_str(&text)?
        };
        // A run manifest carries the training config under `config`.
        let value = match value.get("config") {
            Some(inner) if value.get("command").is_some() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(value)
            .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))
    }

    pub fn target(&self) -> Result<TargetShape, BenchError> {
        Ok(TargetShape::resolve(&self.shape)?)
    }

    pub fn net_config(&self) -> Result<NetConfig, BenchError> {
        let widths = match &self.widths {
            Some(w) => w.clone(),
            None => NetConfig::default_widths(self.layers)?,
        };
        if widths.len() != self.layers + 2 {
            return Err(BenchError::Config(format!(
                "{} layers need {} widths ([1, c1..cL, latent]), got {:?}",
                self.layers,
                self.layers + 2,
                widths
            )));
        }
        let mirror = self
            .mirror
            .unwrap_or(self.arch == Arch::MrCnn && self.kernel != 3);
        Ok(NetConfig::with_widths(
            self.arch,
            self.kernel,
            widths,
            self.activation,
            mirror,
        )?)
    }

    /// Training environment: full connectivity checks.
    pub fn env_config(&self) -> Result<EnvConfig, BenchError> {
        let mut env = EnvConfig::new(self.target()?, self.episode_steps);
        env.connectivity = Connectivity::Full;
        env.validate()?;
        Ok(env)
    }

    pub fn ppo_config(&self, seed: u64) -> PpoConfig {
        PpoConfig {
            total_steps: self.total_steps,
            seed,
            ..self.ppo.clone()
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.seeds.is_empty() {
            return Err(BenchError::Config("at least one seed is required".into()));
        }
        self.net_config()?;
        self.env_config()?;
        self.ppo_config(0).validate()?;
        Ok(())
    }
}
