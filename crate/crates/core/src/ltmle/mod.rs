//! Longitudinal targeted maximum likelihood estimation of regime-specific
//! outcome means, with influence-curve inference and weight diagnostics.

mod fluctuate;
mod gfit;
mod report;

pub use fluctuate::{fluctuate_step, Fluctuation};
pub use gfit::{clever_covariates, fit_g_sequence, CleverCovariates, GFitSequence, GModel, G_FLOOR, TRUNCATION_LEVEL};
pub use report::{diagnostics_summary, write_diagnostics_csv, write_ic_csv, DiagnosticsTable};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{Family, LearnerSet, LearnerSpec, TrainingTask};
use crate::matrix::Matrix;
use crate::panel::{
    select_covariates, CovariateStrategy, ModelTarget, NodeRef, PanelDataset, Regime, RegimeAssignment, Role,
};
use crate::seed;
use crate::stats::{mean, sd};
use crate::superlearner::{CvPlan, MetaLearner, SuperLearnerFit, WeightRow, PREDICTION_BOUND};

/// Normal critical value of the reported 95% intervals.
pub const Z_95: f64 = 1.96;
/// Share of the outcome range added on each side of the scaling bounds.
pub const SCALE_PADDING: f64 = 0.1;

/// Settings shared by the targeted and the weighting estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationOptions {
    pub q_library: Vec<LearnerSpec>,
    pub g_library: Vec<LearnerSpec>,
    pub strategy: CovariateStrategy,
    /// Variables never used as outcome-model predictors.
    #[serde(default)]
    pub q_exclude: Vec<String>,
    /// Variables never used as treatment-model predictors.
    #[serde(default)]
    pub g_exclude: Vec<String>,
    /// Periods between the last relevant intervention and the outcome.
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
}

fn default_folds() -> usize {
    10
}

fn default_floor() -> f64 {
    0.01
}

impl EstimationOptions {
    pub fn new(set: LearnerSet, strategy: CovariateStrategy) -> Self {
        EstimationOptions {
            q_library: set.specs(),
            g_library: set.specs(),
            strategy,
            q_exclude: Vec::new(),
            g_exclude: Vec::new(),
            lag: 0,
            folds: default_folds(),
            seed: 0,
            meta: MetaLearner::Simplex,
            g_floor: default_floor(),
            truncation: default_floor(),
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.q_library.is_empty() || self.g_library.is_empty() {
            return Err(Error::InvalidArgument("learner libraries must not be empty".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidArgument("at least two folds are required".into()));
        }
        if self.lag < 0 {
            return Err(Error::InvalidArgument("lag must be non-negative".into()));
        }
        for (name, v) in [("g floor", self.g_floor), ("truncation level", self.truncation)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must lie in (0, 1)")));
            }
        }
        for l in self.q_library.iter().chain(&self.g_library) {
            l.learner.check()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Ltmle,
    /// Normalized inverse-probability weighting.
    Iptw,
    /// Unnormalized inverse-probability weighting.
    IptwHt,
}

/// Affine map of the outcome onto `[0, 1]`: `(y - lower) / (upper - lower)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeScale {
    pub lower: f64,
    pub upper: f64,
}

impl OutcomeScale {
    /// Observed range padded on both sides; `None` for a constant outcome.
    pub fn from_outcome(y: &[f64]) -> Option<Self> {
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        (range > 0.0).then_some(OutcomeScale {
            lower: lo - SCALE_PADDING * range,
            upper: hi + SCALE_PADDING * range,
        })
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn to_unit(&self, y: f64) -> f64 {
        (y - self.lower) / self.width()
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        self.lower + self.width() * u
    }
}

/// Weight diagnostics of one regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Percentage of adherent unit-times whose cumulative adherence
    /// probability fell below the truncation level.
    pub truncation_pct: f64,
    /// Mean of the terminal clever covariate over all units.
    pub cc_mean: f64,
    /// Maximum of the terminal clever covariate.
    pub cc_max: f64,
    /// Effective sample size `(Σ H)² / Σ H²` of the terminal weights.
    pub ess: f64,
    pub adherent: usize,
}

impl Diagnostics {
    pub fn from_clever(cc: &CleverCovariates) -> Self {
        let (mut cells, mut truncated) = (0usize, 0usize);
        for (flags, h) in cc.truncated.iter().zip(&cc.h) {
            for (&t, &hk) in flags.iter().zip(h) {
                if hk > 0.0 {
                    cells += 1;
                    truncated += usize::from(t);
                }
            }
        }
        let h: &[f64] = cc.h.last().map_or(&[], Vec::as_slice);
        let s: f64 = h.iter().sum();
        let s2: f64 = h.iter().map(|v| v * v).sum();
        Diagnostics {
            truncation_pct: if cells == 0 { 0.0 } else { 100.0 * truncated as f64 / cells as f64 },
            cc_mean: if h.is_empty() { 0.0 } else { mean(h) },
            cc_max: h.iter().copied().fold(0.0, f64::max),
            ess: if s2 > 0.0 { s * s / s2 } else { 0.0 },
            adherent: h.iter().filter(|&&v| v > 0.0).count(),
        }
    }
}

/// One iterated outcome regression and its fluctuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub anchor: NodeRef,
    pub covariates: Vec<NodeRef>,
    pub epsilon: f64,
    pub targeted: bool,
    /// `Σ H (target − Q*)` on the unit scale after the update.
    pub score: f64,
    pub cv_risk: f64,
    pub weights: Vec<WeightRow>,
}

/// A regime mean, or a contrast of two, with influence-curve inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub estimator: Estimator,
    pub regime: String,
    pub outcome: NodeRef,
    pub n: usize,
    pub psi: f64,
    pub se: f64,
    pub ci: [f64; 2],
    pub diagnostics: Option<Diagnostics>,
    pub scale: Option<OutcomeScale>,
    #[serde(default)]
    pub steps: Vec<StepReport>,
    pub dataset_fingerprint: u64,
    /// Per-unit influence-curve values in outcome units.
    #[serde(skip)]
    pub ic: Vec<f64>,
}

impl EstimateResult {
    pub(crate) fn from_ic(
        estimator: Estimator,
        regime: &str,
        outcome: &NodeRef,
        psi: f64,
        ic: Vec<f64>,
        dataset_fingerprint: u64,
    ) -> Self {
        let n = ic.len();
        let se = sd(&ic) / (n as f64).sqrt();
        EstimateResult {
            estimator,
            regime: regime.to_string(),
            outcome: outcome.clone(),
            n,
            psi,
            se,
            ci: [psi - Z_95 * se, psi + Z_95 * se],
            diagnostics: None,
            scale: None,
            steps: Vec::new(),
            dataset_fingerprint,
            ic,
        }
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci[0] <= truth && truth <= self.ci[1]
    }
}

/// Difference `ψ_j − ψ_k` with the influence curve of the difference.
pub fn ate_contrast(j: &EstimateResult, k: &EstimateResult) -> Result<EstimateResult> {
    if j.dataset_fingerprint != k.dataset_fingerprint || j.outcome != k.outcome || j.n != k.n {
        return Err(Error::Mismatch("contrast of estimates from different datasets or outcomes".into()));
    }
    if j.estimator != k.estimator {
        return Err(Error::Mismatch("contrast of estimates from different estimators".into()));
    }
    if j.ic.len() != j.n || k.ic.len() != k.n {
        return Err(Error::Mismatch("influence curves are missing".into()));
    }
    let ic = j.ic.iter().zip(&k.ic).map(|(a, b)| a - b).collect();
    Ok(EstimateResult::from_ic(
        j.estimator,
        &format!("{} - {}", j.regime, k.regime),
        &j.outcome,
        j.psi - k.psi,
        ic,
        j.dataset_fingerprint,
    ))
}

/// Design matrix of `covariates`; intervention nodes take the prescribed
/// treatments when `assignment` is given.
pub(crate) fn design_matrix(
    dataset: &PanelDataset,
    covariates: &[NodeRef],
    assignment: Option<&RegimeAssignment>,
) -> Result<Matrix> {
    let ordering = dataset.ordering();
    let mut cols = Vec::with_capacity(covariates.len());
    for node in covariates {
        let pos = ordering.position(node).ok_or_else(|| Error::UnknownNode(node.to_string()))?;
        let prescribed = assignment.and_then(|a| {
            (ordering.role(pos) == Role::Intervention)
                .then(|| a.positions.iter().position(|&p| p == pos))
                .flatten()
                .map(|k| &a.prescribed[k])
        });
        cols.push(match prescribed {
            Some(d) => d.iter().map(|&v| f64::from(v)).collect(),
            None => dataset.column_at(pos).to_vec(),
        });
    }
    Ok(Matrix::from_columns(dataset.n_units(), &cols))
}

/// An outcome regression anchored at the outcome variable at one time.
#[derive(Debug, Clone)]
struct Anchor {
    node: NodeRef,
    /// Index of the last intervention node before the anchor.
    k: usize,
    covariates: Vec<NodeRef>,
}

fn anchors(dataset: &PanelDataset, opts: &EstimationOptions) -> Result<Vec<Anchor>> {
    let ordering = dataset.ordering();
    let outcome = ordering
        .outcome()
        .ok_or_else(|| Error::InvalidDataset("dataset has no terminal outcome".into()))?
        .clone();
    let interventions = ordering.intervention_positions();
    let first = *interventions
        .first()
        .ok_or_else(|| Error::InvalidDataset(format!("no intervention node precedes {outcome}")))?;
    let first_time = ordering.node(first).time;
    let mut out = Vec::new();
    for pos in 0..ordering.len() {
        let node = ordering.node(pos);
        if node.var != outcome.var || node.time < first_time + opts.lag {
            continue;
        }
        let Some(k) = interventions.iter().rposition(|&p| p < pos) else {
            continue;
        };
        let covariates: Vec<NodeRef> = select_covariates(&opts.strategy, ordering, ModelTarget::Q { time: node.time })?
            .into_iter()
            .filter(|c| !opts.q_exclude.contains(&c.var))
            .collect();
        if covariates.is_empty() {
            return Err(Error::NoAdmissiblePredictors(format!("Q at {}", node.time)));
        }
        out.push(Anchor {
            node: node.clone(),
            k,
            covariates,
        });
    }
    if out.is_empty() {
        return Err(Error::InvalidDataset(format!("no outcome regression is anchored before {outcome}")));
    }
    Ok(out)
}

/// Anchor node and predictors of every outcome regression, earliest first.
pub(crate) fn anchor_covariates(dataset: &PanelDataset, opts: &EstimationOptions) -> Result<Vec<(NodeRef, Vec<NodeRef>)>> {
    Ok(anchors(dataset, opts)?.into_iter().map(|a| (a.node, a.covariates)).collect())
}

/// Regime-independent parts of a run: the restricted dataset, treatment
/// models, outcome scale and the terminal outcome regression.
struct Prepared<'a> {
    data: PanelDataset,
    g: &'a GFitSequence,
    anchors: Vec<Anchor>,
    scale: Option<OutcomeScale>,
    y: Vec<f64>,
    plan: CvPlan,
    terminal: Option<SuperLearnerFit>,
}

fn prepare<'a>(data: PanelDataset, g: &'a GFitSequence, opts: &EstimationOptions) -> Result<Prepared<'a>> {
    g.check_matches(&data)?;
    let anchors = anchors(&data, opts)?;
    let outcome_pos = data.ordering().len() - 1;
    let y = data.column_at(outcome_pos).to_vec();
    let scale = OutcomeScale::from_outcome(&y);
    let plan = CvPlan::new(data.unit_ids(), opts.folds, opts.seed)?;
    let terminal = match scale {
        Some(s) => {
            let last = anchors.last().expect("anchors are non-empty");
            let x = design_matrix(&data, &last.covariates, None)?;
            let target: Vec<f64> = y.iter().map(|&v| s.to_unit(v)).collect();
            Some(fit_q(&x, target, &last.node, &data, &plan, opts)?)
        }
        None => None,
    };
    Ok(Prepared {
        data,
        g,
        anchors,
        scale,
        y,
        plan,
        terminal,
    })
}

fn fit_q(
    x: &Matrix,
    target: Vec<f64>,
    anchor: &NodeRef,
    data: &PanelDataset,
    plan: &CvPlan,
    opts: &EstimationOptions,
) -> Result<SuperLearnerFit> {
    let pos = data.ordering().position(anchor).expect("anchor is in the ordering") as u64;
    let task = TrainingTask::unweighted(x.clone(), target, Family::QuasiBinomial)?;
    SuperLearnerFit::fit(&task, &opts.q_library, plan, opts.meta, seed::derive(opts.seed, &[1, pos]))
}

fn run_regime(p: &Prepared<'_>, regime: &Regime, opts: &EstimationOptions) -> Result<EstimateResult> {
    let data = &p.data;
    let outcome = data.ordering().outcome().expect("checked when anchoring").clone();
    let assignment = RegimeAssignment::new(data, regime)?;
    let g = p.g.adherence_probabilities(&assignment, opts.g_floor);
    let cc = clever_covariates(&g, &assignment.adherent, opts.truncation);
    let diagnostics = Diagnostics::from_clever(&cc);
    let n = data.n_units();
    let fingerprint = data.fingerprint();

    let Some(scale) = p.scale else {
        let mut r = EstimateResult::from_ic(Estimator::Ltmle, &regime.name, &outcome, p.y[0], vec![0.0; n], fingerprint);
        r.diagnostics = Some(diagnostics);
        return Ok(r);
    };
    if diagnostics.adherent == 0 {
        log::warn!("no adherent units under regime `{}`", regime.name);
    }

    let mut target: Vec<f64> = p.y.iter().map(|&v| scale.to_unit(v)).collect();
    let mut ic = vec![0.0; n];
    let mut steps = Vec::with_capacity(p.anchors.len());
    for (step, anchor) in p.anchors.iter().enumerate().rev() {
        let terminal = step + 1 == p.anchors.len();
        let fitted;
        let sl = if terminal {
            p.terminal.as_ref().expect("a scaled outcome has a terminal fit")
        } else {
            let x = design_matrix(data, &anchor.covariates, None)?;
            fitted = fit_q(&x, target.clone(), &anchor.node, data, &p.plan, opts)?;
            &fitted
        };
        let x_d = design_matrix(data, &anchor.covariates, Some(&assignment))?;
        let q_d: Vec<f64> = sl
            .predict(&x_d)?
            .into_iter()
            .map(|v| v.clamp(PREDICTION_BOUND, 1.0 - PREDICTION_BOUND))
            .collect();
        let h = &cc.h[anchor.k];
        let fl = fluctuate_step(&target, &q_d, h);
        if !fl.targeted {
            log::warn!("no adherent units at {} under regime `{}`", anchor.node, regime.name);
        }
        let mut score = 0.0;
        for i in 0..n {
            let r = h[i] * (target[i] - fl.updated[i]);
            ic[i] += r;
            score += r;
        }
        steps.push(StepReport {
            anchor: anchor.node.clone(),
            covariates: anchor.covariates.clone(),
            epsilon: fl.epsilon,
            targeted: fl.targeted,
            score,
            cv_risk: sl.cv_risk,
            weights: sl.weight_table(),
        });
        target = fl.updated;
    }
    steps.reverse();
    let psi_unit = mean(&target);
    let w = scale.width();
    let ic: Vec<f64> = ic.iter().zip(&target).map(|(r, q)| w * (r + q - psi_unit)).collect();
    let mut r = EstimateResult::from_ic(Estimator::Ltmle, &regime.name, &outcome, scale.from_unit(psi_unit), ic, fingerprint);
    r.diagnostics = Some(diagnostics);
    r.scale = Some(scale);
    r.steps = steps;
    Ok(r)
}

/// Dataset restricted to the nodes that bear on `outcome`.
pub fn outcome_dataset(dataset: &PanelDataset, outcome: &NodeRef, lag: i32) -> Result<PanelDataset> {
    dataset.for_outcome(outcome, lag)
}

/// Targeted estimates of the mean of `outcome` under each regime.
///
/// Treatment models are fitted once unless `g` is supplied; it must have
/// been fitted on [`outcome_dataset`]. The terminal outcome regression does
/// not depend on the regime and is shared.
pub fn estimate_regimes(
    dataset: &PanelDataset,
    outcome: &NodeRef,
    regimes: &[Regime],
    opts: &EstimationOptions,
    g: Option<&GFitSequence>,
) -> Result<Vec<EstimateResult>> {
    opts.check()?;
    let data = outcome_dataset(dataset, outcome, opts.lag)?;
    let owned;
    let g = match g {
        Some(g) => g,
        None => {
            owned = fit_g_sequence(&data, opts)?;
            &owned
        }
    };
    let prepared = prepare(data, g, opts)?;
    regimes.iter().map(|r| run_regime(&prepared, r, opts)).collect()
}

pub fn estimate_regime_mean(
    dataset: &PanelDataset,
    outcome: &NodeRef,
    regime: &Regime,
    opts: &EstimationOptions,
) -> Result<EstimateResult> {
    Ok(estimate_regimes(dataset, outcome, std::slice::from_ref(regime), opts, None)?.remove(0))
}
