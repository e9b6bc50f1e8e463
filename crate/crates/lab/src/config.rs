//! Experiment configuration: a flat TOML file with four sections
//! (environment, learner, schedule, run) and no includes.
//!
//! Parsing and validation failures are configuration errors; the binary maps
//! them to exit code 2.

use std::path::{Path, PathBuf};

use earl_core::envs::{DiagonalEnv, Env, StepResult, TwoColorsEnv};
use earl_learn::ppo::{ModelKind, PpoConfig};
use earl_learn::sac::SacConfig;
use earl_learn::schedule::{ScheduleKind, TemperatureSchedule};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSection,
    pub learner: LearnerSection,
    pub schedule: ScheduleSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    /// "diagonal" or "twocolors".
    pub kind: String,
    #[serde(default = "default_size")]
    pub size: usize,
    /// Step cap per episode. Truncation for both worlds; neither terminates
    /// on its own except Diagonal's corners.
    #[serde(default)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSection {
    /// "ppo" or "sac".
    pub kind: String,
    /// "mlp" or "tabular".
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_gamma")]
    pub gamma: f64,

    // On-policy settings.
    #[serde(default = "default_clip")]
    pub clip_ratio: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_minibatch")]
    pub minibatch: usize,
    #[serde(default = "default_policy_lr")]
    pub policy_lr: f64,
    #[serde(default = "default_value_lr")]
    pub value_lr: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_rollout")]
    pub rollout_steps: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_true")]
    pub shape_rewards: bool,
    #[serde(default = "default_true")]
    pub augment_advantages: bool,

    // Off-policy settings.
    #[serde(default = "default_capacity")]
    pub capacity: usize,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_sac_lr")]
    pub q_lr: f64,
    #[serde(default = "default_sac_lr")]
    pub sac_value_lr: f64,
    #[serde(default = "default_sac_lr")]
    pub sac_policy_lr: f64,
    #[serde(default = "default_total_steps")]
    pub total_steps: usize,
    #[serde(default = "default_metric_window")]
    pub metric_window: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    /// "constant" or "exponential".
    pub kind: String,
    pub alpha0: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub label: String,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

fn default_size() -> usize {
    10
}
fn default_model() -> String {
    "mlp".into()
}
fn default_gamma() -> f64 {
    0.99
}
fn default_clip() -> f64 {
    0.2
}
fn default_epochs() -> usize {
    4
}
fn default_minibatch() -> usize {
    128
}
fn default_policy_lr() -> f64 {
    3e-3
}
fn default_value_lr() -> f64 {
    1e-2
}
fn default_lambda() -> f64 {
    0.95
}
fn default_rollout() -> usize {
    1024
}
fn default_iterations() -> usize {
    80
}
fn default_true() -> bool {
    true
}
fn default_capacity() -> usize {
    100_000
}
fn default_batch() -> usize {
    64
}
fn default_tau() -> f64 {
    0.005
}
fn default_sac_lr() -> f64 {
    3e-4
}
fn default_total_steps() -> usize {
    30_000
}
fn default_metric_window() -> usize {
    1_000
}
fn default_warmup() -> usize {
    500
}
fn default_sigma() -> f64 {
    0.99
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Diagonal,
    TwoColors,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerKind {
    Ppo,
    Sac,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.env_kind()?;
        self.learner_kind()?;
        self.model_kind()?;
        self.build_schedule()?;
        if self.environment.size < 2 {
            return Err(Error::Config("environment size must be >= 2".into()));
        }
        if let Some(h) = self.environment.horizon {
            if h == 0 {
                return Err(Error::Config("horizon must be >= 1".into()));
            }
        }
        if self.run.seeds.is_empty() {
            return Err(Error::Config("seeds list must be nonempty".into()));
        }
        match self.learner_kind()? {
            LearnerKind::Ppo => self.ppo_config()?.validate()?,
            LearnerKind::Sac => self.sac_config()?.validate()?,
        }
        Ok(())
    }

    pub fn env_kind(&self) -> Result<EnvKind> {
        match self.environment.kind.as_str() {
            "diagonal" => Ok(EnvKind::Diagonal),
            "twocolors" => Ok(EnvKind::TwoColors),
            other => Err(Error::Config(format!(
                "unknown environment kind {other:?}; expected \"diagonal\" or \"twocolors\""
            ))),
        }
    }

    pub fn learner_kind(&self) -> Result<LearnerKind> {
        match self.learner.kind.as_str() {
            "ppo" => Ok(LearnerKind::Ppo),
            "sac" => Ok(LearnerKind::Sac),
            other => Err(Error::Config(format!(
                "unknown learner kind {other:?}; expected \"ppo\" or \"sac\""
            ))),
        }
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        match self.learner.model.as_str() {
            "mlp" => Ok(ModelKind::Mlp),
            "tabular" => Ok(ModelKind::Tabular),
            other => Err(Error::Config(format!(
                "unknown model {other:?}; expected \"mlp\" or \"tabular\""
            ))),
        }
    }

    pub fn build_schedule(&self) -> Result<TemperatureSchedule> {
        let kind = match self.schedule.kind.as_str() {
            "constant" => ScheduleKind::Constant,
            "exponential" => ScheduleKind::ExponentialDecay,
            other => {
                return Err(Error::Config(format!(
                    "unknown schedule kind {other:?}; expected \"constant\" or \"exponential\""
                )))
            }
        };
        Ok(TemperatureSchedule::new(
            kind,
            self.schedule.alpha0,
            self.schedule.sigma,
        )?)
    }

    pub fn ppo_config(&self) -> Result<PpoConfig> {
        let l = &self.learner;
        Ok(PpoConfig {
            model: self.model_kind()?,
            clip_ratio: l.clip_ratio,
            epochs: l.epochs,
            minibatch: l.minibatch,
            policy_lr: l.policy_lr,
            value_lr: l.value_lr,
            gamma: l.gamma,
            lambda: l.lambda,
            rollout_steps: l.rollout_steps,
            iterations: l.iterations,
            shape_rewards: l.shape_rewards,
            augment_advantages: l.augment_advantages,
        })
    }

    pub fn sac_config(&self) -> Result<SacConfig> {
        let l = &self.learner;
        Ok(SacConfig {
            model: self.model_kind()?,
            capacity: l.capacity,
            batch: l.batch,
            tau: l.tau,
            q_lr: l.q_lr,
            value_lr: l.sac_value_lr,
            policy_lr: l.sac_policy_lr,
            gamma: l.gamma,
            total_steps: l.total_steps,
            metric_window: l.metric_window,
            warmup: l.warmup,
        })
    }

    /// Environment handle for one run. Grid layouts are fixed; only the
    /// TwoColors goal stream depends on the seed.
    pub fn build_env(&self, run_seed: u64) -> Result<LabEnv> {
        Ok(match self.env_kind()? {
            EnvKind::Diagonal => {
                let horizon = self.environment.horizon.unwrap_or(100);
                LabEnv::Diagonal(DiagonalEnv::with_shape(self.environment.size, horizon))
            }
            EnvKind::TwoColors => {
                let horizon = self.environment.horizon.unwrap_or(500);
                LabEnv::TwoColors(TwoColorsEnv::with_shape(
                    self.environment.size,
                    horizon,
                    run_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1),
                ))
            }
        })
    }
}

/// The two grid worlds behind one concrete type, so generic training code
/// monomorphizes once per call site instead of needing trait objects.
pub enum LabEnv {
    Diagonal(DiagonalEnv),
    TwoColors(TwoColorsEnv),
}

macro_rules! delegate {
    ($self:ident, $e:ident => $body:expr) => {
        match $self {
            LabEnv::Diagonal($e) => $body,
            LabEnv::TwoColors($e) => $body,
        }
    };
}

impl Env for LabEnv {
    fn n_obs(&self) -> usize {
        delegate!(self, e => e.n_obs())
    }
    fn n_actions(&self) -> usize {
        delegate!(self, e => e.n_actions())
    }
    fn obs_dim(&self) -> usize {
        delegate!(self, e => e.obs_dim())
    }
    fn reset(&mut self) -> usize {
        delegate!(self, e => e.reset())
    }
    fn step(&mut self, action: usize) -> earl_core::Result<StepResult> {
        delegate!(self, e => e.step(action))
    }
    fn obs_id(&self) -> usize {
        delegate!(self, e => e.obs_id())
    }
    fn encode_obs(&self, obs_id: usize, out: &mut [f64]) {
        delegate!(self, e => e.encode_obs(obs_id, out))
    }
}

/// Small fast config for the crate's own tests: tabular model on a 4x4
/// Diagonal world, a few short iterations.
#[cfg(test)]
pub fn tiny_ppo_config(out_dir: &Path, seeds: &[u64]) -> ExperimentConfig {
    let text = format!(
        r#"
[environment]
kind = "diagonal"
size = 4
horizon = 20

[learner]
kind = "ppo"
model = "tabular"
gamma = 0.95
rollout_steps = 64
iterations = 5
epochs = 2
minibatch = 32
policy_lr = 0.1
value_lr = 0.1

[schedule]
kind = "exponential"
alpha0 = 0.05

[run]
label = "tiny"
seeds = {seeds:?}
output_dir = {dir:?}
"#,
        dir = out_dir.display().to_string()
    );
    ExperimentConfig::from_str(&text).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
[environment]
kind = "diagonal"

[learner]
kind = "ppo"

[schedule]
kind = "exponential"
alpha0 = 0.05

[run]
label = "demo"
seeds = [1, 2]
output_dir = "out"
"#;

    #[test]
    fn defaults_fill_in_and_validate() {
        let cfg = ExperimentConfig::from_str(GOOD).unwrap();
        assert_eq!(cfg.env_kind().unwrap(), EnvKind::Diagonal);
        assert_eq!(cfg.learner.minibatch, 128);
        assert_eq!(cfg.schedule.sigma, 0.99);
        let ppo = cfg.ppo_config().unwrap();
        assert_eq!(ppo.clip_ratio, 0.2);
    }

    #[test]
    fn bad_kinds_and_empty_seeds_are_config_errors() {
        for (from, to) in [
            ("kind = \"diagonal\"", "kind = \"mujoco\""),
            ("kind = \"ppo\"", "kind = \"trpo\""),
            ("kind = \"exponential\"", "kind = \"linear\""),
            ("seeds = [1, 2]", "seeds = []"),
        ] {
            let text = GOOD.replace(from, to);
            let err = ExperimentConfig::from_str(&text).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{from} -> {to}: {err}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = GOOD.replace("alpha0 = 0.05", "alpha0 = 0.05\nwarp = 9");
        assert!(matches!(
            ExperimentConfig::from_str(&text),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn env_construction_matches_the_section() {
        let cfg = ExperimentConfig::from_str(GOOD).unwrap();
        let mut env = cfg.build_env(3).unwrap();
        assert_eq!(env.n_actions(), 4);
        assert_eq!(env.obs_dim(), 100);
        assert_eq!(env.reset(), 0);

        let text = GOOD.replace("kind = \"diagonal\"", "kind = \"twocolors\"");
        let cfg = ExperimentConfig::from_str(&text).unwrap();
        let env = cfg.build_env(3).unwrap();
        assert_eq!(env.obs_dim(), 200);
    }
}
