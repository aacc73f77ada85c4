use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, EvaluationConfig};
use crate::baselines::BaselineConfig;
use crate::envs::EnvSpec;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    #[default]
    Asre,
    Egreedy,
    Softq,
    PriorPenalty,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [AgentKind::Asre, AgentKind::Egreedy, AgentKind::Softq, AgentKind::PriorPenalty];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Asre => "asre",
            AgentKind::Egreedy => "egreedy",
            AgentKind::Softq => "softq",
            AgentKind::PriorPenalty => "prior_penalty",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown agent {s:?}; expected asre, egreedy, softq or prior_penalty")))
    }
}

/// One experiment: an environment, an agent and the seeds to run it on.
///
/// ```toml
/// agent = "asre"
/// total_steps = 30000
/// seeds = [0, 1, 2, 3, 4]
/// output_dir = "runs/shooter"
///
/// [env]
/// kind = "shooter"
/// width = 7
/// budget = 5
/// horizon = 30
///
/// [asre]
/// lambda = 0.01
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    #[serde(default)]
    pub agent: AgentKind,
    pub total_steps: u64,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Checkpoints averaged into a run's final score.
    #[serde(default = "ExperimentConfig::default_final_checkpoints")]
    pub final_checkpoints: usize,
    /// Replaces the evaluation settings of both agent sections when present,
    /// so that compared agents are scored alike.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvaluationConfig>,
    #[serde(default)]
    pub asre: AgentConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
}

impl ExperimentConfig {
    fn default_final_checkpoints() -> usize {
        5
    }

    pub fn new(env: EnvSpec, agent: AgentKind, total_steps: u64, seeds: Vec<u64>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            env,
            agent,
            total_steps,
            seeds,
            output_dir: output_dir.into(),
            final_checkpoints: Self::default_final_checkpoints(),
            evaluation: None,
            asre: AgentConfig::default(),
            baseline: BaselineConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    /// Parses `text` after applying `section.key=value` overrides. Values are
    /// read as TOML (`0.2`, `true`, `[1, 2]`, `"x"`); anything that does not
    /// parse is taken as a bare string.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: Self = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be positive".into()));
        }
        if self.final_checkpoints == 0 {
            return Err(Error::Config("final_checkpoints must be positive".into()));
        }
        if self.evaluation.as_ref().is_some_and(|e| e.interval > 0 && e.episodes == 0) {
            return Err(Error::Config("evaluation.episodes must be positive".into()));
        }
        let mdp = self.env.build().map_err(|e| Error::Config(format!("env: {e}")))?;
        self.asre.validate(mdp.num_actions())?;
        self.baseline.validate()?;
        Ok(())
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not of the form key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("override {spec:?} has an empty key")));
    }
    let value = parse_value(raw.trim());
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut cur = table;
    for k in parents {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {spec:?}: {k} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
