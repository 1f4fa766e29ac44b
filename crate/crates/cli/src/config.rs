//! Experiment configuration shared by every subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rental_core::{
    Distribution, Error, FixedRateOptions, HorizonPriors, IroningMode, RentalMechanism,
    RewardClass, RewardFn,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MechanismChoice {
    #[default]
    FixedRate,
    Threshold,
    /// A mechanism JSON file (`{"swacs": [...], "rewards": [...]}`), resolved
    /// relative to the config file.
    CustomMenu {
        path: PathBuf,
    },
}

impl MechanismChoice {
    pub fn name(&self) -> &'static str {
        match self {
            MechanismChoice::FixedRate => "fixed_rate",
            MechanismChoice::Threshold => "threshold",
            MechanismChoice::CustomMenu { .. } => "custom_menu",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    /// Directory for CSV tables; defaults to the directory of `--out`.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizon: usize,
    /// One prior used at every horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<Distribution>,
    /// Per-horizon priors ordered `D_n, ..., D_1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distributions: Option<Vec<Distribution>>,
    pub reward: RewardFn,
    #[serde(default)]
    pub mechanism: MechanismChoice,
    #[serde(default)]
    pub ironing: IroningMode,
    #[serde(default)]
    pub normalize_base_payment: bool,
    /// Grid size for truthfulness and monotonicity audits.
    #[serde(default = "default_audit_grid")]
    pub audit_grid: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_episodes")]
    pub episodes: u64,
    #[serde(default)]
    pub outputs: Outputs,
}

fn default_audit_grid() -> usize {
    1000
}

fn default_episodes() -> u64 {
    10_000
}

fn invalid(path: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        msg: msg.into(),
    }
}

/// Parses JSON, reporting failures with the offending field path and position.
pub fn parse_json<T: DeserializeOwned>(text: &str, source: &str) -> anyhow::Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    match serde_path_to_error::deserialize(de) {
        Ok(v) => Ok(v),
        Err(e) => {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Err(invalid(
                if path == "." { "<root>" } else { &path },
                format!("{inner} in {source}"),
            )
            .into())
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_json(&text, &path.display().to_string())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let mut cfg: ExperimentConfig = read_json(path)?;
        if let MechanismChoice::CustomMenu { path: p } = &mut cfg.mechanism {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let cfg: ExperimentConfig = parse_json(text, "config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.horizon == 0 {
            return Err(invalid("horizon", "must be at least 1"));
        }
        match (&self.distribution, &self.distributions) {
            (Some(_), Some(_)) => {
                return Err(invalid(
                    "distributions",
                    "give either `distribution` or `distributions`, not both",
                ))
            }
            (None, None) => return Err(invalid("distribution", "missing prior")),
            (None, Some(ds)) if ds.len() != self.horizon => {
                return Err(invalid(
                    "distributions",
                    format!(
                        "expected {} priors (one per horizon), got {}",
                        self.horizon,
                        ds.len()
                    ),
                ))
            }
            _ => {}
        }
        if let IroningMode::Grid(m) = self.ironing {
            if m < 16 {
                return Err(invalid("ironing.m", "need at least 16 cells"));
            }
        }
        if self.audit_grid < 2 {
            return Err(invalid("audit_grid", "need at least 2 points"));
        }
        if self.episodes == 0 {
            return Err(invalid("episodes", "must be at least 1"));
        }
        if self.mechanism == MechanismChoice::Threshold {
            let class = self.reward.class()?;
            if class != RewardClass::NegativeTradeoff {
                return Err(invalid(
                    "reward",
                    format!(
                        "threshold mechanism needs a negative tradeoff reward, got {}",
                        class.name()
                    ),
                ));
            }
            if !self.priors().is_iid() {
                return Err(invalid(
                    "distributions",
                    "threshold mechanism requires i.i.d. agents",
                ));
            }
        }
        Ok(())
    }

    pub fn priors(&self) -> HorizonPriors {
        match (&self.distribution, &self.distributions) {
            (Some(d), _) => HorizonPriors::iid(d.clone(), self.horizon),
            (None, Some(ds)) => HorizonPriors::from_descending(ds.clone()).expect("validated"),
            (None, None) => unreachable!("validated"),
        }
    }

    pub fn fixed_rate_options(&self) -> FixedRateOptions {
        FixedRateOptions {
            ironing: self.ironing,
            normalize_base_payment: self.normalize_base_payment,
        }
    }

    /// The custom mechanism named by the config, if any.
    pub fn custom_mechanism(&self) -> anyhow::Result<Option<RentalMechanism>> {
        let MechanismChoice::CustomMenu { path } = &self.mechanism else {
            return Ok(None);
        };
        let m: RentalMechanism = read_json(path)?;
        if m.horizon() != self.horizon {
            bail!(invalid(
                "mechanism.path",
                format!(
                    "mechanism has horizon {}, config says {}",
                    m.horizon(),
                    self.horizon
                ),
            ));
        }
        Ok(Some(m))
    }
}
