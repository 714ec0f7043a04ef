//! Replicated simulation studies: bias and coverage of the estimators
//! across learner libraries and outcome-model misspecification designs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{mc_truth, parse_dgp, simulate_panel, DgpSpec};
use crate::error::{Error, Result};
use crate::iptw::iptw_regime_mean;
use crate::learners::LearnerSet;
use crate::ltmle::{
    anchor_covariates, ate_contrast, estimate_regimes, fit_g_sequence, outcome_dataset, EstimationOptions,
    Estimator, GFitSequence,
};
use crate::panel::{select_covariates, CovariateStrategy, ModelTarget, NodeOrdering, NodeRef, PanelDataset, Regime};
use crate::stats::{mean, sd};
use crate::superlearner::MetaLearner;

/// Source text of the DGPs shipped with the crate, by file name.
pub fn bundled_dgp(name: &str) -> Option<&'static str> {
    match name {
        "sim1.dgp" => Some(include_str!("../../../assets/sim1.dgp")),
        "sim2.dgp" => Some(include_str!("../../../assets/sim2.dgp")),
        _ => None,
    }
}

/// Outcome-model variable exclusions; treatment models always see the
/// full history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MisspecDesign {
    pub name: String,
    #[serde(default)]
    pub q_exclude: Vec<String>,
}

impl MisspecDesign {
    pub fn both_correct() -> Self {
        MisspecDesign {
            name: "both_correct".into(),
            q_exclude: Vec::new(),
        }
    }

    pub fn q_incorrect(vars: &[&str]) -> Self {
        MisspecDesign {
            name: "q_incorrect".into(),
            q_exclude: vars.iter().map(|v| v.to_string()).collect(),
        }
    }
}

/// Label of the single design of estimators without outcome models.
pub const G_ONLY: &str = "g_only";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthSource {
    Analytic { value: f64 },
    MonteCarlo { reps: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorPlan {
    pub estimator: Estimator,
    pub learner_sets: Vec<LearnerSet>,
}

fn default_n() -> usize {
    1000
}

fn default_folds() -> usize {
    10
}

fn default_designs() -> Vec<MisspecDesign> {
    vec![MisspecDesign::both_correct()]
}

/// A replicated study of the contrast `regimes[0] − regimes[1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub name: String,
    /// Bundled DGP name or a path relative to the config file.
    pub dgp: String,
    #[serde(default = "default_n")]
    pub n: usize,
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    pub outcome: NodeRef,
    pub regimes: [Regime; 2],
    pub estimators: Vec<EstimatorPlan>,
    #[serde(default = "default_designs")]
    pub designs: Vec<MisspecDesign>,
    #[serde(default = "CovariateStrategy::screen_learn")]
    pub strategy: CovariateStrategy,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub lag: i32,
    #[serde(default)]
    pub meta: MetaLearner,
    pub truth: TruthSource,
}

impl StudyConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: StudyConfig = serde_json::from_str(text)?;
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidArgument("reps must be at least 1".into()));
        }
        if self.n < 2 * self.folds {
            return Err(Error::InvalidArgument("n must allow two units per fold".into()));
        }
        if self.estimators.is_empty() || self.estimators.iter().any(|e| e.learner_sets.is_empty()) {
            return Err(Error::InvalidArgument("every estimator needs at least one learner set".into()));
        }
        if self.designs.is_empty() {
            return Err(Error::InvalidArgument("at least one design is required".into()));
        }
        for r in &self.regimes {
            r.check()?;
        }
        Ok(())
    }

    /// Parses the DGP, looking up bundled names first.
    pub fn load_dgp(&self, base_dir: &Path) -> Result<DgpSpec> {
        let text = match bundled_dgp(&self.dgp) {
            Some(t) => t.to_string(),
            None => std::fs::read_to_string(base_dir.join(&self.dgp))?,
        };
        let spec = parse_dgp(&text)?;
        for d in &self.designs {
            check_design(spec.ordering(), &self.outcome, d)?;
        }
        Ok(spec)
    }

    pub fn options(&self, set: LearnerSet, design: &MisspecDesign) -> EstimationOptions {
        let mut o = EstimationOptions::new(set, self.strategy.clone());
        o.q_exclude = design.q_exclude.clone();
        o.folds = self.folds;
        o.lag = self.lag;
        o.meta = self.meta;
        o.seed = self.seed;
        o
    }

    pub fn resolve_truth(&self, spec: &DgpSpec) -> Result<f64> {
        match self.truth {
            TruthSource::Analytic { value } => Ok(value),
            TruthSource::MonteCarlo { reps, seed } => {
                Ok(mc_truth(spec, &self.regimes[0], &self.regimes[1], &self.outcome, reps, seed)?.psi)
            }
        }
    }
}

fn check_design(ordering: &NodeOrdering, outcome: &NodeRef, design: &MisspecDesign) -> Result<()> {
    let treatments = ordering.treatment_vars();
    for v in &design.q_exclude {
        if treatments.contains(v.as_str()) || *v == outcome.var {
            return Err(Error::InvalidArgument(format!(
                "design `{}` may not exclude the treatment or outcome variable `{v}`",
                design.name
            )));
        }
        if !ordering.nodes().iter().any(|n| n.node.var == *v) {
            return Err(Error::UnknownNode(v.clone()));
        }
    }
    Ok(())
}

/// Predictor sets of every outcome and treatment model under a design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovariateSets {
    pub q: Vec<(NodeRef, Vec<NodeRef>)>,
    pub g: Vec<(NodeRef, Vec<NodeRef>)>,
}

/// Applies `design` to the covariate sets chosen by `strategy` on `dataset`
/// restricted to `outcome`. Treatment-model sets are left untouched.
pub fn misspecify_config(
    dataset: &PanelDataset,
    outcome: &NodeRef,
    strategy: &CovariateStrategy,
    lag: i32,
    design: &MisspecDesign,
) -> Result<CovariateSets> {
    let data = outcome_dataset(dataset, outcome, lag)?;
    let ordering = data.ordering();
    check_design(ordering, outcome, design)?;
    let mut opts = EstimationOptions::new(LearnerSet::Glm, strategy.clone());
    opts.q_exclude = design.q_exclude.clone();
    opts.lag = lag;
    let q = anchor_covariates(&data, &opts)?;
    let g = ordering
        .intervention_positions()
        .into_iter()
        .map(|p| {
            let node = ordering.node(p).clone();
            let cov = select_covariates(strategy, ordering, ModelTarget::G { time: node.time })?;
            Ok((node, cov))
        })
        .collect::<Result<_>>()?;
    Ok(CovariateSets { q, g })
}

/// One estimator run within one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub rep: usize,
    pub estimator: Estimator,
    pub learner_set: LearnerSet,
    pub design: String,
    pub psi: Option<f64>,
    pub se: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub error: Option<String>,
}

fn row(rep: usize, estimator: Estimator, set: LearnerSet, design: &str, r: Result<crate::ltmle::EstimateResult>) -> RawRow {
    let mut out = RawRow {
        rep,
        estimator,
        learner_set: set,
        design: design.to_string(),
        psi: None,
        se: None,
        ci_lo: None,
        ci_hi: None,
        error: None,
    };
    match r {
        Ok(e) => {
            out.psi = Some(e.psi);
            out.se = Some(e.se);
            out.ci_lo = Some(e.ci[0]);
            out.ci_hi = Some(e.ci[1]);
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    out
}

/// Rows of replication `rep` alone; see [`run_replications`].
pub fn run_replication(config: &StudyConfig, spec: &DgpSpec, rep: usize) -> Result<Vec<RawRow>> {
    let dataset = simulate_panel(spec, config.n, config.seed.wrapping_add(rep as u64))?;
    let data = outcome_dataset(&dataset, &config.outcome, config.lag)?;
    let mut g_cache: BTreeMap<LearnerSet, std::result::Result<GFitSequence, String>> = BTreeMap::new();
    let mut rows = Vec::new();
    for plan in &config.estimators {
        for &set in &plan.learner_sets {
            let base = config.options(set, &MisspecDesign::both_correct());
            let g = g_cache
                .entry(set)
                .or_insert_with(|| fit_g_sequence(&data, &base).map_err(|e| e.to_string()));
            let designs: Vec<MisspecDesign> = match plan.estimator {
                Estimator::Ltmle => config.designs.clone(),
                Estimator::Iptw | Estimator::IptwHt => vec![MisspecDesign {
                    name: G_ONLY.into(),
                    q_exclude: Vec::new(),
                }],
            };
            for design in &designs {
                let result = match g {
                    Err(e) => Err(Error::LearnerFailure {
                        learner: format!("{set} treatment models"),
                        reason: e.clone(),
                    }),
                    Ok(g) => {
                        let opts = config.options(set, design);
                        match plan.estimator {
                            Estimator::Ltmle => estimate_regimes(&data, &config.outcome, &config.regimes, &opts, Some(g))
                                .and_then(|r| ate_contrast(&r[0], &r[1])),
                            e => {
                                let normalized = e == Estimator::Iptw;
                                let est = |r: &Regime| iptw_regime_mean(&data, &config.outcome, r, &opts, Some(g), normalized);
                                est(&config.regimes[0])
                                    .and_then(|a| est(&config.regimes[1]).and_then(|b| ate_contrast(&a, &b)))
                            }
                        }
                    }
                };
                if let Err(e) = &result {
                    log::warn!("replication {rep}: {:?} with {set} ({}) failed: {e}", plan.estimator, design.name);
                }
                rows.push(row(rep, plan.estimator, set, &design.name, result));
            }
        }
    }
    Ok(rows)
}

/// Runs every replication; replication `r` simulates with seed `seed + r`.
///
/// Replications run in parallel on the current rayon pool and the rows
/// come back in replication order, so the table does not depend on the
/// schedule. Estimator failures are recorded in the rows.
pub fn run_replications(config: &StudyConfig, spec: &DgpSpec) -> Result<Vec<RawRow>> {
    config.check()?;
    let per_rep: Vec<Vec<RawRow>> = (0..config.reps)
        .into_par_iter()
        .map(|r| run_replication(config, spec, r))
        .collect::<Result<_>>()?;
    Ok(per_rep.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub estimator: Estimator,
    pub learner_set: LearnerSet,
    pub design: String,
    pub abs_bias: f64,
    pub coverage: f64,
    pub mean_se: f64,
    pub sd_psi: f64,
    pub failures: usize,
}

/// Bias and coverage per (estimator, learner set, design), in order of
/// first appearance. Failed runs are excluded and counted.
pub fn summarize_metrics(rows: &[RawRow], truth: f64) -> Vec<MetricsRow> {
    let mut keys: Vec<(Estimator, LearnerSet, String)> = Vec::new();
    for r in rows {
        let k = (r.estimator, r.learner_set, r.design.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(estimator, learner_set, design)| {
            let group: Vec<&RawRow> = rows
                .iter()
                .filter(|r| r.estimator == estimator && r.learner_set == learner_set && r.design == design)
                .collect();
            let ok: Vec<&RawRow> = group.iter().copied().filter(|r| r.psi.is_some()).collect();
            let psi: Vec<f64> = ok.iter().filter_map(|r| r.psi).collect();
            let se: Vec<f64> = ok.iter().filter_map(|r| r.se).collect();
            let covered = ok
                .iter()
                .filter(|r| r.ci_lo.unwrap() <= truth && truth <= r.ci_hi.unwrap())
                .count();
            let (abs_bias, coverage, mean_se) = if ok.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                ((mean(&psi) - truth).abs(), covered as f64 / ok.len() as f64, mean(&se))
            };
            MetricsRow {
                estimator,
                learner_set,
                design,
                abs_bias,
                coverage,
                mean_se,
                sd_psi: sd(&psi),
                failures: group.len() - ok.len(),
            }
        })
        .collect()
}

/// Learner sets of one estimator and design, from largest to smallest
/// absolute bias.
pub fn bias_ordering(metrics: &[MetricsRow], estimator: Estimator, design: &str) -> Vec<(LearnerSet, f64)> {
    let mut v: Vec<(LearnerSet, f64)> = metrics
        .iter()
        .filter(|m| m.estimator == estimator && m.design == design)
        .map(|m| (m.learner_set, m.abs_bias))
        .collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1));
    v
}

pub fn find_metrics<'a>(
    metrics: &'a [MetricsRow],
    estimator: Estimator,
    set: LearnerSet,
    design: &str,
) -> Option<&'a MetricsRow> {
    metrics
        .iter()
        .find(|m| m.estimator == estimator && m.learner_set == set && m.design == design)
}

pub fn write_metrics_csv<W: Write>(metrics: &[MetricsRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for m in metrics {
        w.serialize(m)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_raw_csv<W: Write>(rows: &[RawRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
