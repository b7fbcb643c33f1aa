//! Experiment configuration, read from TOML. Command-line flags override file values.

use anyhow::{bail, Context, Result};
use schmidt_games::dynamics::SystemSpec;
use schmidt_games::games::GameKind;
use schmidt_games::strategies::BobPolicy;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub game: GameKind,
    pub system: SystemSpec,
    /// Point whose orbit closure Alice keeps away from.
    pub target: Vec<f64>,
    pub policy: BobPolicy,
    /// Rounds per game; `10 r` when absent.
    pub depth: Option<u32>,
    pub games: u32,
    /// First seed; a batch uses `seed..seed + games`.
    pub seed: u64,
    pub params: Params,
    pub tiling: TilingConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub beta: f64,
    pub gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<u32>,
    /// Radius of Bob's opening ball.
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TilingConfig {
    pub epsilon: f64,
    pub seed: u64,
    pub levels: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Also write one JSONL transcript per batch game.
    pub transcripts: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            game: GameKind::Potential,
            system: SystemSpec::doubling(),
            target: vec![0.0],
            policy: BobPolicy::Random,
            depth: None,
            games: 1,
            seed: 0,
            params: Params::default(),
            tiling: TilingConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl Default for Params {
    fn default() -> Self {
        Params { alpha: None, beta: 0.5, gamma: 1.0, a: None, b: None, rho: 1e-4 }
    }
}

impl Default for TilingConfig {
    fn default() -> Self {
        TilingConfig { epsilon: 0.1, seed: 1, levels: 12 }
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out"), transcripts: false }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        let p = &self.params;
        if self.target.len() != self.system.dim() {
            bail!("target has {} coordinates, the system lives on T^{}", self.target.len(), self.system.dim());
        }
        if !(p.beta > 0.0 && p.beta < 1.0) {
            bail!("beta must lie in (0, 1), got {}", p.beta);
        }
        if !(p.rho > 0.0 && p.rho <= 0.125) {
            bail!("rho must lie in (0, 1/8], got {}", p.rho);
        }
        if self.games == 0 {
            bail!("games must be positive");
        }
        match self.game {
            GameKind::Potential => {
                if !(p.gamma > 0.0) {
                    bail!("gamma must be positive, got {}", p.gamma);
                }
                if !self.system.is_expanding() {
                    bail!("the potential game needs an expanding system");
                }
            }
            GameKind::Absolute => {
                if p.beta >= 1.0 / 3.0 {
                    bail!("the absolute game needs beta < 1/3, got {}", p.beta);
                }
                bail!("no Alice strategy is implemented for the absolute game; use the potential game");
            }
            GameKind::Schmidt => {
                if !self.system.is_anosov() {
                    bail!("the Schmidt game strategy needs an Anosov system");
                }
                if let Some(a) = p.alpha {
                    if !(a > 0.0 && a < 1.0) {
                        bail!("alpha must lie in (0, 1), got {a}");
                    }
                }
            }
            GameKind::Modified => {
                if self.system.dim() != 1 || !self.system.is_expanding() {
                    bail!("the modified game runs on expanding circle maps");
                }
                if !(self.tiling.epsilon > 0.0 && self.tiling.epsilon < 0.5) {
                    bail!("tiling epsilon must lie in (0, 1/2)");
                }
                if !(1..=20).contains(&self.tiling.levels) {
                    bail!("tiling levels must lie in 1..=20");
                }
                // a, b > a_* is checked once the tiling is certified
            }
        }
        Ok(())
    }
}
