use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ltmle_core::dgp::{parse_dgp, DgpSpec};
use ltmle_core::learners::{LearnerSet, LearnerSpec};
use ltmle_core::ltmle::EstimationOptions;
use ltmle_core::panel::{CovariateStrategy, CsvSchema, NodeRef, Regime};
use ltmle_core::study::bundled_dgp;
use ltmle_core::superlearner::MetaLearner;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Reads a JSON config; returns it with the directory relative paths
/// resolve against.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<(T, PathBuf)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let config = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((config, base))
}

/// Parses a DGP given by bundled name or by path.
pub fn load_dgp(name: &str, base: &Path) -> Result<DgpSpec> {
    let text = match bundled_dgp(name) {
        Some(t) if !base.join(name).exists() => t.to_string(),
        _ => {
            let p = base.join(name);
            fs::read_to_string(&p).with_context(|| format!("reading DGP {}", p.display()))?
        }
    };
    parse_dgp(&text).with_context(|| format!("parsing DGP `{name}`"))
}

fn default_set() -> LearnerSet {
    LearnerSet::L1
}

fn default_folds() -> usize {
    10
}

fn default_floor() -> f64 {
    0.01
}

fn default_true() -> bool {
    true
}

/// Settings of the `estimate` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    /// Wide panel CSV, relative to the config file.
    pub data: String,
    pub treatment_vars: Vec<String>,
    pub outcome: NodeRef,
    /// Regimes to evaluate; each is contrasted with `reference`.
    pub regimes: Vec<Regime>,
    /// Name of the reference regime; defaults to the last one.
    #[serde(default)]
    pub reference: Option<String>,
    #[serde(default = "default_set")]
    pub learner_set: LearnerSet,
    /// Overrides the preset library for the outcome models.
    #[serde(default)]
    pub q_library: Option<Vec<LearnerSpec>>,
    /// Overrides the preset library for the treatment models.
    #[serde(default)]
    pub g_library: Option<Vec<LearnerSpec>>,
    pub strategy: CovariateStrategy,
    #[serde(default)]
    pub q_exclude: Vec<String>,
    #[serde(default)]
    pub g_exclude: Vec<String>,
    #[serde(default)]
    pub lag: i32,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub meta: MetaLearner,
    #[serde(default = "default_floor")]
    pub g_floor: f64,
    #[serde(default = "default_floor")]
    pub truncation: f64,
    /// Also report the weighting estimator.
    #[serde(default = "default_true")]
    pub iptw: bool,
    /// Report the unnormalized weighting estimator next to the normalized one.
    #[serde(default)]
    pub iptw_ht: bool,
    /// Write per-unit influence-curve values.
    #[serde(default)]
    pub ic_csv: bool,
}

impl EstimateConfig {
    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            treatment_vars: self.treatment_vars.clone(),
            outcome: None,
        }
    }

    pub fn options(&self) -> EstimationOptions {
        let mut o = EstimationOptions::new(self.learner_set, self.strategy.clone());
        if let Some(q) = &self.q_library {
            o.q_library = q.clone();
        }
        if let Some(g) = &self.g_library {
            o.g_library = g.clone();
        }
        o.q_exclude = self.q_exclude.clone();
        o.g_exclude = self.g_exclude.clone();
        o.lag = self.lag;
        o.folds = self.folds;
        o.seed = self.seed;
        o.meta = self.meta;
        o.g_floor = self.g_floor;
        o.truncation = self.truncation;
        o
    }

    /// Index of the reference regime.
    pub fn reference_index(&self) -> Result<usize> {
        if self.regimes.len() < 2 {
            bail!("at least two regimes are required");
        }
        match &self.reference {
            None => Ok(self.regimes.len() - 1),
            Some(name) => self
                .regimes
                .iter()
                .position(|r| &r.name == name)
                .with_context(|| format!("reference regime `{name}` is not defined")),
        }
    }
}

/// Settings of the `simulate` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub dgp: String,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    /// Simulate under this regime instead of the observational law.
    #[serde(default)]
    pub intervene: Option<Regime>,
}

/// Settings of the `truth` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub dgp: String,
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Contrasted regimes; defaults to always versus never treated.
    #[serde(default)]
    pub regimes: Option<[Regime; 2]>,
    /// Defaults to the DGP's declared outcome.
    #[serde(default)]
    pub outcome: Option<NodeRef>,
}

impl TruthConfig {
    pub fn regimes(&self) -> [Regime; 2] {
        self.regimes
            .clone()
            .unwrap_or_else(|| [Regime::static_rule("always", 1), Regime::static_rule("never", 0)])
    }
}
