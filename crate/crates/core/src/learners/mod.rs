//! Candidate learners and feature screeners for super learning.
//!
//! Every learner fits a weighted regression of a response on a predictor
//! matrix and predicts on the response scale.  Quasi-binomial tasks have
//! responses in `[0, 1]` and predictions that stay there.

mod gam;
mod glm;
mod mars;
mod nnet;
mod screen;
mod sets;
mod standardize;
mod tree;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::fnv1a;

pub use glm::GlmModel;
pub use screen::{screen_features, ScreenerKind, ScreenerSpec};
pub use sets::LearnerSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    QuasiBinomial,
}

/// Weighted regression problem handed to a learner.
#[derive(Debug, Clone)]
pub struct TrainingTask {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    pub family: Family,
}

impl TrainingTask {
    pub fn new(x: Matrix, y: Vec<f64>, w: Vec<f64>, family: Family) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n || w.len() != n {
            return Err(Error::Mismatch(format!(
                "{n} predictor rows, {} responses, {} weights",
                y.len(),
                w.len()
            )));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("empty training task".into()));
        }
        if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("training data contain missing or infinite values".into()));
        }
        if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        if w.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidArgument("all weights are zero".into()));
        }
        if family == Family::QuasiBinomial && y.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidArgument("quasi-binomial responses must lie in [0, 1]".into()));
        }
        Ok(TrainingTask { x, y, w, family })
    }

    /// Task with unit weights.
    pub fn unweighted(x: Matrix, y: Vec<f64>, family: Family) -> Result<Self> {
        let n = y.len();
        TrainingTask::new(x, y, vec![1.0; n], family)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn subset(&self, rows: &[usize]) -> TrainingTask {
        TrainingTask {
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            w: rows.iter().map(|&i| self.w[i]).collect(),
            family: self.family,
        }
    }

    pub fn with_columns(&self, cols: &[usize]) -> TrainingTask {
        TrainingTask {
            x: self.x.select_columns(cols),
            y: self.y.clone(),
            w: self.w.clone(),
            family: self.family,
        }
    }

    pub fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::with_capacity(8 * (self.x.nrows() * (self.x.ncols() + 2)));
        for j in 0..self.x.ncols() {
            self.x.column(j).iter().for_each(|v| bytes.extend(v.to_le_bytes()));
        }
        self.y.iter().chain(&self.w).for_each(|v| bytes.extend(v.to_le_bytes()));
        bytes.push(self.family as u8);
        fnv1a(&bytes)
    }
}

/// Learner algorithm and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerKind {
    Mean,
    GlmMain,
    GlmTwoway,
    RidgeGaussianPrior {
        #[serde(default = "defaults::prior_sd")]
        prior_sd: f64,
    },
    Cart {
        #[serde(default = "defaults::cart_depth")]
        max_depth: usize,
        #[serde(default = "defaults::min_leaf")]
        min_leaf: f64,
        #[serde(default = "defaults::cp")]
        cp: f64,
    },
    RandomForest {
        #[serde(default = "defaults::trees")]
        trees: usize,
        #[serde(default)]
        mtry: Option<usize>,
        #[serde(default = "defaults::min_leaf")]
        min_leaf: f64,
        #[serde(default = "defaults::max_bins")]
        max_bins: usize,
    },
    NeuralNet {
        #[serde(default = "defaults::hidden")]
        hidden: usize,
        #[serde(default = "defaults::decay")]
        decay: f64,
        #[serde(default = "defaults::max_iter")]
        max_iter: usize,
    },
    MarsLite {
        #[serde(default = "defaults::max_terms")]
        max_terms: usize,
        #[serde(default = "defaults::degree")]
        degree: usize,
    },
    GamSpline {
        #[serde(default = "defaults::knots")]
        knots: usize,
        #[serde(default = "defaults::spline_penalty")]
        penalty: f64,
    },
    Gbm {
        #[serde(default = "defaults::gbm_trees")]
        trees: usize,
        #[serde(default = "defaults::gbm_depth")]
        depth: usize,
        #[serde(default = "defaults::shrinkage")]
        shrinkage: f64,
        #[serde(default = "defaults::subsample")]
        subsample: f64,
    },
}

pub(crate) mod defaults {
    pub fn prior_sd() -> f64 {
        2.5
    }
    pub fn cart_depth() -> usize {
        10
    }
    pub fn min_leaf() -> f64 {
        5.0
    }
    pub fn cp() -> f64 {
        0.01
    }
    pub fn trees() -> usize {
        500
    }
    pub fn max_bins() -> usize {
        64
    }
    pub fn hidden() -> usize {
        5
    }
    pub fn decay() -> f64 {
        0.01
    }
    pub fn max_iter() -> usize {
        500
    }
    pub fn max_terms() -> usize {
        21
    }
    pub fn degree() -> usize {
        2
    }
    pub fn knots() -> usize {
        5
    }
    pub fn spline_penalty() -> f64 {
        1.0
    }
    pub fn gbm_trees() -> usize {
        100
    }
    pub fn gbm_depth() -> usize {
        3
    }
    pub fn shrinkage() -> f64 {
        0.1
    }
    pub fn subsample() -> f64 {
        0.5
    }
}

impl LearnerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerKind::Mean => "mean",
            LearnerKind::GlmMain => "glm_main",
            LearnerKind::GlmTwoway => "glm_twoway",
            LearnerKind::RidgeGaussianPrior { .. } => "ridge_gaussian_prior",
            LearnerKind::Cart { .. } => "cart",
            LearnerKind::RandomForest { .. } => "random_forest",
            LearnerKind::NeuralNet { .. } => "neural_net",
            LearnerKind::MarsLite { .. } => "mars_lite",
            LearnerKind::GamSpline { .. } => "gam_spline",
            LearnerKind::Gbm { .. } => "gbm",
        }
    }

    pub fn ridge() -> Self {
        LearnerKind::RidgeGaussianPrior {
            prior_sd: defaults::prior_sd(),
        }
    }

    pub fn cart() -> Self {
        LearnerKind::Cart {
            max_depth: defaults::cart_depth(),
            min_leaf: defaults::min_leaf(),
            cp: defaults::cp(),
        }
    }

    pub fn random_forest() -> Self {
        LearnerKind::RandomForest {
            trees: defaults::trees(),
            mtry: None,
            min_leaf: defaults::min_leaf(),
            max_bins: defaults::max_bins(),
        }
    }

    pub fn neural_net() -> Self {
        LearnerKind::NeuralNet {
            hidden: defaults::hidden(),
            decay: defaults::decay(),
            max_iter: defaults::max_iter(),
        }
    }

    pub fn mars_lite() -> Self {
        LearnerKind::MarsLite {
            max_terms: defaults::max_terms(),
            degree: defaults::degree(),
        }
    }

    pub fn gam_spline() -> Self {
        LearnerKind::GamSpline {
            knots: defaults::knots(),
            penalty: defaults::spline_penalty(),
        }
    }

    pub fn gbm() -> Self {
        LearnerKind::Gbm {
            trees: defaults::gbm_trees(),
            depth: defaults::gbm_depth(),
            shrinkage: defaults::shrinkage(),
            subsample: defaults::subsample(),
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("{}: {what}", self.name())));
        match *self {
            LearnerKind::RidgeGaussianPrior { prior_sd } if !(prior_sd > 0.0) => bad("prior_sd must be positive"),
            LearnerKind::Cart { max_depth, min_leaf, cp } if max_depth == 0 || !(min_leaf >= 0.0) || !(cp >= 0.0) => {
                bad("depth must be positive, min_leaf and cp nonnegative")
            }
            LearnerKind::RandomForest { trees, max_bins, .. } if trees == 0 || max_bins < 2 => {
                bad("needs at least one tree and two bins")
            }
            LearnerKind::NeuralNet { hidden, decay, .. } if hidden == 0 || !(decay >= 0.0) => {
                bad("needs a hidden unit and nonnegative decay")
            }
            LearnerKind::MarsLite { max_terms, degree } if max_terms < 3 || degree == 0 => {
                bad("needs at least three terms and degree one")
            }
            LearnerKind::GamSpline { penalty, .. } if !(penalty >= 0.0) => bad("penalty must be nonnegative"),
            LearnerKind::Gbm { trees, depth, shrinkage, subsample }
                if trees == 0 || depth == 0 || !(shrinkage > 0.0) || !(subsample > 0.0 && subsample <= 1.0) =>
            {
                bad("invalid boosting parameters")
            }
            _ => Ok(()),
        }
    }
}

/// A learner with an optional screener in front of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub learner: LearnerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screener: Option<ScreenerSpec>,
}

impl LearnerSpec {
    pub fn plain(learner: LearnerKind) -> Self {
        LearnerSpec { learner, screener: None }
    }

    pub fn screened(learner: LearnerKind, screener: ScreenerSpec) -> Self {
        LearnerSpec {
            learner,
            screener: Some(screener),
        }
    }

    pub fn screener_label(&self) -> String {
        self.screener.as_ref().map_or_else(|| "none".to_string(), ScreenerSpec::label)
    }
}

impl fmt::Display for LearnerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.screener {
            None => write!(f, "{}", self.learner.name()),
            Some(s) => write!(f, "{}+{}", self.learner.name(), s.label()),
        }
    }
}

/// Fitted parameters of one learner.
pub(crate) trait Model: Send + Sync + fmt::Debug {
    /// Predictions on the response scale for the selected feature columns.
    fn predict(&self, x: &Matrix) -> Vec<f64>;

    fn as_glm(&self) -> Option<&GlmModel> {
        None
    }
}

#[derive(Debug)]
struct MeanModel(f64);

impl Model for MeanModel {
    fn predict(&self, x: &Matrix) -> Vec<f64> {
        vec![self.0; x.nrows()]
    }
}

/// A fitted learner; immutable and shareable across threads.
#[derive(Debug)]
pub struct FittedLearner {
    kind: LearnerKind,
    family: Family,
    n_features: usize,
    features: Vec<usize>,
    model: Box<dyn Model>,
    fingerprint: u64,
}

impl FittedLearner {
    pub fn kind(&self) -> &LearnerKind {
        &self.kind
    }

    /// Indices of the columns used after screening.
    pub fn features(&self) -> &[usize] {
        &self.features
    }

    pub fn training_fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::Mismatch(format!(
                "{} was trained on {} columns, got {}",
                self.kind.name(),
                self.n_features,
                x.ncols()
            )));
        }
        let sub = if self.features.len() == self.n_features {
            self.model.predict(x)
        } else {
            self.model.predict(&x.select_columns(&self.features))
        };
        let mut out = sub;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::learner(self.kind.name(), "non-finite prediction"));
        }
        if self.family == Family::QuasiBinomial {
            out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        }
        Ok(out)
    }

    /// Coefficients of a fitted GLM-type learner.
    pub fn glm(&self) -> Option<&GlmModel> {
        self.model.as_glm()
    }
}

pub fn fit_learner(spec: &LearnerSpec, task: &TrainingTask, seed: u64) -> Result<FittedLearner> {
    let features = match &spec.screener {
        Some(s) if !matches!(spec.learner, LearnerKind::Mean) => screen_features(task, s, seed)?,
        _ => (0..task.p()).collect(),
    };
    fit_on_features(&spec.learner, task, features, seed)
}

pub fn predict_learner(model: &FittedLearner, x: &Matrix) -> Result<Vec<f64>> {
    model.predict(x)
}

/// Fits `kind` on a precomputed feature subset of `task`.
pub(crate) fn fit_on_features(
    kind: &LearnerKind,
    task: &TrainingTask,
    features: Vec<usize>,
    seed: u64,
) -> Result<FittedLearner> {
    kind.check()?;
    let name = kind.name();
    if features.is_empty() && !matches!(kind, LearnerKind::Mean) {
        return Err(Error::learner(name, "no features to fit on"));
    }
    let sub;
    let t = if features.len() == task.p() {
        task
    } else {
        sub = task.with_columns(&features);
        &sub
    };
    let model: Box<dyn Model> = match kind {
        LearnerKind::Mean => Box::new(MeanModel(crate::stats::weighted_mean(&t.y, &t.w))),
        LearnerKind::GlmMain => Box::new(glm::fit_main(t)?),
        LearnerKind::GlmTwoway => Box::new(glm::fit_twoway(t)?),
        LearnerKind::RidgeGaussianPrior { prior_sd } => Box::new(glm::fit_ridge(t, *prior_sd)?),
        LearnerKind::Cart { max_depth, min_leaf, cp } => Box::new(tree::fit_cart(t, *max_depth, *min_leaf, *cp)?),
        LearnerKind::RandomForest {
            trees,
            mtry,
            min_leaf,
            max_bins,
        } => Box::new(tree::fit_forest(t, *trees, *mtry, *min_leaf, *max_bins, seed)?),
        LearnerKind::NeuralNet { hidden, decay, max_iter } => {
            Box::new(nnet::fit(t, *hidden, *decay, *max_iter, seed)?)
        }
        LearnerKind::MarsLite { max_terms, degree } => Box::new(mars::fit(t, *max_terms, *degree)?),
        LearnerKind::GamSpline { knots, penalty } => Box::new(gam::fit(t, *knots, *penalty)?),
        LearnerKind::Gbm {
            trees,
            depth,
            shrinkage,
            subsample,
        } => Box::new(tree::fit_gbm(t, *trees, *depth, *shrinkage, *subsample, seed)?),
    };
    Ok(FittedLearner {
        kind: kind.clone(),
        family: task.family,
        n_features: task.p(),
        features,
        model,
        fingerprint: task.fingerprint(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn synthetic(n: usize, seed: u64, family: Family) -> TrainingTask {
        let mut rng = crate::seed::rng(seed, &[]);
        let x1: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let x3: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random::<f64>() < 0.4))).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let f = 0.8 * x1[i] - 0.5 * x2[i] * x2[i] + x3[i];
                match family {
                    Family::Gaussian => f + 0.3 * rng.sample::<f64, _>(StandardNormal),
                    Family::QuasiBinomial => crate::stats::expit(f),
                }
            })
            .collect();
        TrainingTask::unweighted(Matrix::from_columns(n, &[x1, x2, x3]), y, family).unwrap()
    }

    fn all_kinds() -> Vec<LearnerKind> {
        vec![
            LearnerKind::Mean,
            LearnerKind::GlmMain,
            LearnerKind::GlmTwoway,
            LearnerKind::ridge(),
            LearnerKind::cart(),
            LearnerKind::RandomForest {
                trees: 20,
                mtry: None,
                min_leaf: 5.0,
                max_bins: 64,
            },
            LearnerKind::neural_net(),
            LearnerKind::mars_lite(),
            LearnerKind::gam_spline(),
            LearnerKind::Gbm {
                trees: 20,
                depth: 3,
                shrinkage: 0.1,
                subsample: 0.5,
            },
        ]
    }

    #[test]
    fn mean_learner_predicts_weighted_mean() {
        let t = TrainingTask::unweighted(Matrix::from_columns(3, &[vec![0.0, 1.0, 2.0]]), vec![1.0, 2.0, 3.0], Family::Gaussian)
            .unwrap();
        let m = fit_learner(&LearnerSpec::plain(LearnerKind::Mean), &t, 0).unwrap();
        assert_eq!(m.predict(&t.x).unwrap(), vec![2.0; 3]);
    }

    #[test]
    fn glm_recovers_exact_line() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.37 - 2.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 + 2.0 * v).collect();
        let t = TrainingTask::unweighted(Matrix::from_columns(20, &[x]), y, Family::Gaussian).unwrap();
        let m = fit_learner(&LearnerSpec::plain(LearnerKind::GlmMain), &t, 0).unwrap();
        let c = m.glm().unwrap().coefficients(1).unwrap();
        assert!((c[0] - 3.0).abs() < 1e-8 && (c[1] - 2.0).abs() < 1e-8, "{c:?}");
    }

    #[test]
    fn every_learner_is_deterministic_and_respects_family_range() {
        for family in [Family::Gaussian, Family::QuasiBinomial] {
            let t = synthetic(150, 4, family);
            for kind in all_kinds() {
                let spec = LearnerSpec::plain(kind);
                let a = fit_learner(&spec, &t, 9).unwrap().predict(&t.x).unwrap();
                let b = fit_learner(&spec, &t, 9).unwrap().predict(&t.x).unwrap();
                assert_eq!(a, b, "{spec}");
                assert!(a.iter().all(|v| v.is_finite()), "{spec}");
                if family == Family::QuasiBinomial {
                    assert!(a.iter().all(|v| (0.0..=1.0).contains(v)), "{spec}");
                }
            }
        }
    }

    #[test]
    fn flexible_learners_beat_the_mean_in_sample() {
        let t = synthetic(300, 5, Family::Gaussian);
        let mse = |k: LearnerKind| {
            let p = fit_learner(&LearnerSpec::plain(k), &t, 1).unwrap().predict(&t.x).unwrap();
            p.iter().zip(&t.y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / t.n() as f64
        };
        let base = mse(LearnerKind::Mean);
        for k in all_kinds().into_iter().skip(1) {
            let name = k.name();
            let m = mse(k);
            assert!(m < base, "{name}: {m} vs mean {base}");
        }
    }

    #[test]
    fn replication_equals_integer_weight() {
        let t = synthetic(40, 6, Family::Gaussian);
        let mut w = vec![1.0; 40];
        w[3] = 3.0;
        w[17] = 2.0;
        let weighted = TrainingTask::new(t.x.clone(), t.y.clone(), w, Family::Gaussian).unwrap();
        let mut rows: Vec<usize> = (0..40).collect();
        rows.extend([3, 3, 17]);
        let replicated = t.subset(&rows);
        for kind in [LearnerKind::Mean, LearnerKind::GlmMain] {
            let a = fit_learner(&LearnerSpec::plain(kind.clone()), &weighted, 0).unwrap().predict(&t.x).unwrap();
            let b = fit_learner(&LearnerSpec::plain(kind), &replicated, 0).unwrap().predict(&t.x).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ridge_approaches_glm_as_prior_widens() {
        let t = synthetic(200, 7, Family::Gaussian);
        let glm = fit_learner(&LearnerSpec::plain(LearnerKind::GlmMain), &t, 0).unwrap();
        let ridge = fit_learner(&LearnerSpec::plain(LearnerKind::RidgeGaussianPrior { prior_sd: 1e6 }), &t, 0).unwrap();
        let a = glm.glm().unwrap().coefficients(3).unwrap();
        let b = ridge.glm().unwrap().coefficients(3).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-4, "{a:?} {b:?}");
        }
    }

    #[test]
    fn twoway_nests_main_effects() {
        let t = synthetic(200, 8, Family::Gaussian);
        let loss = |k: LearnerKind| {
            let p = fit_learner(&LearnerSpec::plain(k), &t, 0).unwrap().predict(&t.x).unwrap();
            p.iter().zip(&t.y).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        };
        assert!(loss(LearnerKind::GlmTwoway) <= loss(LearnerKind::GlmMain) + 1e-9);
    }

    #[test]
    fn twoway_fails_when_columns_exceed_rows() {
        let n = 8;
        let cols: Vec<Vec<f64>> = (0..4).map(|j| (0..n).map(|i| ((i * (j + 3)) % 7) as f64).collect()).collect();
        let t = TrainingTask::unweighted(Matrix::from_columns(n, &cols), vec![1.0; n], Family::Gaussian).unwrap();
        let e = fit_learner(&LearnerSpec::plain(LearnerKind::GlmTwoway), &t, 0).unwrap_err();
        assert!(matches!(e, Error::LearnerFailure { .. }));
    }

    #[test]
    fn unlimited_cart_memorizes_training_data() {
        let t = synthetic(60, 9, Family::Gaussian);
        let kind = LearnerKind::Cart {
            max_depth: usize::MAX,
            min_leaf: 1.0,
            cp: 0.0,
        };
        let p = fit_learner(&LearnerSpec::plain(kind), &t, 0).unwrap().predict(&t.x).unwrap();
        for (a, b) in p.iter().zip(&t.y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn neural_net_output_is_squashed_on_arbitrary_inputs() {
        let t = synthetic(100, 10, Family::QuasiBinomial);
        let m = fit_learner(&LearnerSpec::plain(LearnerKind::neural_net()), &t, 3).unwrap();
        let wild = Matrix::from_rows(&[vec![1e6, -1e6, 5.0], vec![-40.0, 300.0, -2.0]]);
        assert!(m.predict(&wild).unwrap().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn prediction_checks_column_count() {
        let t = synthetic(50, 11, Family::Gaussian);
        let m = fit_learner(&LearnerSpec::plain(LearnerKind::GlmMain), &t, 0).unwrap();
        assert!(matches!(m.predict(&Matrix::zeros(2, 2)), Err(Error::Mismatch(_))));
    }

    #[test]
    fn pearson_screen_picks_the_signal() {
        let mut rng = crate::seed::rng(12, &[]);
        let n = 200;
        let x1: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = x1.iter().map(|v| 2.0 * v + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
        let t = TrainingTask::unweighted(Matrix::from_columns(n, &[x1, x2, vec![4.0; n]]), y, Family::Gaussian).unwrap();
        assert_eq!(screen_features(&t, &ScreenerSpec::pearson(1), 0).unwrap(), vec![0]);
        for s in [
            ScreenerSpec::pearson(5),
            ScreenerSpec::elastic_net(5),
            ScreenerSpec::rf_importance(5),
            ScreenerSpec::cramers_v(4),
        ] {
            let sel = screen_features(&t, &s, 0).unwrap();
            assert!(sel.contains(&0) && !sel.contains(&2), "{}: {sel:?}", s.label());
        }
    }

    #[test]
    fn constant_features_cannot_be_screened() {
        let t = TrainingTask::unweighted(Matrix::from_columns(4, &[vec![1.0; 4], vec![2.0; 4]]), vec![0.0, 1.0, 0.0, 1.0], Family::Gaussian)
            .unwrap();
        assert!(matches!(
            screen_features(&t, &ScreenerSpec::pearson(2), 0),
            Err(Error::NothingToScreen)
        ));
    }

    #[test]
    fn cramers_v_respects_its_cap() {
        let mut rng = crate::seed::rng(13, &[]);
        let n = 300;
        let cols: Vec<Vec<f64>> = (0..10).map(|_| (0..n).map(|_| f64::from(rng.random_range(0..3u8))).collect()).collect();
        let y: Vec<f64> = (0..n).map(|i| cols[0][i] + cols[1][i]).collect();
        let t = TrainingTask::unweighted(Matrix::from_columns(n, &cols), y, Family::Gaussian).unwrap();
        for cap in [4, 8] {
            assert!(screen_features(&t, &ScreenerSpec::cramers_v(cap), 0).unwrap().len() <= cap);
        }
    }
}
