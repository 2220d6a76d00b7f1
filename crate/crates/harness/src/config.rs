use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vartrack_core::freq::FreqMode;
use vartrack_core::stream::{StreamKind, StreamSpec};
use vartrack_core::Eps;

use crate::checks::{lookup, CheckDef};
use crate::error::{HarnessError, Result};

/// Tracker under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackerSpec {
    Det,
    Rand,
    PartitionOnly,
    SingleSite,
    Freq(FreqTrackerSpec),
}

impl TrackerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TrackerSpec::Det => "det",
            TrackerSpec::Rand => "rand",
            TrackerSpec::PartitionOnly => "partition_only",
            TrackerSpec::SingleSite => "single_site",
            TrackerSpec::Freq(_) => "freq",
        }
    }
}

fn default_insert_prob() -> f64 {
    0.6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreqTrackerSpec {
    pub mode: FreqMode,
    pub universe: u64,
    /// Insertion probability of the generated workload.
    #[serde(default = "default_insert_prob")]
    pub insert_prob: f64,
}

fn default_trials() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    /// `stream.seed` is replaced per trial by a seed derived from `seed`.
    pub stream: StreamSpec,
    pub tracker: TrackerSpec,
    pub eps: Eps,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<PathBuf>,
    /// Registry names; empty runs every check that applies to the tracker.
    #[serde(default)]
    pub checks: Vec<String>,
    /// Run trials on the rayon pool.
    #[serde(default = "default_parallel")]
    pub parallel: bool,
}

fn default_parallel() -> bool {
    true
}

impl ExperimentConfig {
    pub fn new(
        name: impl Into<String>,
        stream: StreamSpec,
        tracker: TrackerSpec,
        eps: Eps,
    ) -> Self {
        ExperimentConfig {
            name: name.into(),
            stream,
            tracker,
            eps,
            trials: 1,
            seed: 0,
            outputs: None,
            checks: Vec::new(),
            parallel: true,
        }
    }

    /// Reads a JSON config. Relative replay paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        if let StreamKind::Replay { path: replay } = &mut config.stream.kind {
            let p = Path::new(replay.as_str());
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *replay = dir.join(p).to_string_lossy().into_owned();
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        // Eps construction already enforces (0, 1].
        self.stream
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        match &self.tracker {
            TrackerSpec::Freq(f) => {
                if f.universe == 0 {
                    return Err(HarnessError::Config(
                        "freq tracker needs a positive universe".into(),
                    ));
                }
                if !(0.0..=1.0).contains(&f.insert_prob) {
                    return Err(HarnessError::Config(format!(
                        "insert_prob {} outside [0, 1]",
                        f.insert_prob
                    )));
                }
                if f.mode == FreqMode::CrPrecis && self.eps == Eps::new(1, 1).expect("1 is valid") {
                    return Err(HarnessError::Config("crprecis needs eps < 1".into()));
                }
                if matches!(self.stream.kind, StreamKind::Replay { .. }) {
                    return Err(HarnessError::Config(
                        "freq tracker generates its own workload".into(),
                    ));
                }
            }
            TrackerSpec::SingleSite if self.stream.k != 1 => {
                return Err(HarnessError::Config(format!(
                    "single_site needs k = 1, got {}",
                    self.stream.k
                )));
            }
            _ => {}
        }
        self.resolved_checks().map(|_| ())
    }

    /// Requested checks, or every applicable one when none are listed.
    pub fn resolved_checks(&self) -> Result<Vec<&'static CheckDef>> {
        if self.checks.is_empty() {
            return Ok(crate::checks::registry()
                .iter()
                .filter(|c| c.applies_to(&self.tracker))
                .collect());
        }
        self.checks
            .iter()
            .map(|name| {
                let def = lookup(name).ok_or_else(|| HarnessError::UnknownCheck(name.clone()))?;
                if !def.applies_to(&self.tracker) {
                    return Err(HarnessError::Config(format!(
                        "check `{name}` does not apply to the {} tracker",
                        self.tracker.name()
                    )));
                }
                Ok(def)
            })
            .collect()
    }
}
