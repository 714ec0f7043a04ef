//! Cross-validated stacking of candidate learners.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{fit_on_features, screen_features, Family, FittedLearner, LearnerSpec, ScreenerSpec, TrainingTask};
use crate::linalg::solve_dense;
use crate::matrix::Matrix;
use crate::seed;

/// Predictions of quasi-binomial super learners are kept this far from 0 and 1.
pub const PREDICTION_BOUND: f64 = 5e-4;

/// Fold assignment for k-fold cross-validation.
///
/// Units are ranked by a seeded hash of their identifier and dealt to folds
/// round-robin, so folds are balanced and a unit's fold does not depend on
/// its row position.
#[derive(Debug, Clone, PartialEq)]
pub struct CvPlan {
    k: usize,
    fold: Vec<usize>,
}

impl CvPlan {
    pub fn new(unit_ids: &[String], k: usize, seed: u64) -> Result<Self> {
        let n = unit_ids.len();
        if k < 2 || k > n {
            return Err(Error::InvalidArgument(format!("cannot split {n} units into {k} folds")));
        }
        let mut order: Vec<(u64, &str, usize)> = unit_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (seed::derive(seed, &[seed::hash_str(id)]), id.as_str(), i))
            .collect();
        order.sort_unstable();
        let mut fold = vec![0; n];
        for (r, &(_, _, i)) in order.iter().enumerate() {
            fold[i] = r % k;
        }
        Ok(CvPlan { k, fold })
    }

    /// Plan from an explicit assignment; every fold must be nonempty.
    pub fn from_folds(fold: Vec<usize>, k: usize) -> Result<Self> {
        for f in 0..k {
            if !fold.contains(&f) {
                return Err(Error::InvalidArgument(format!("fold {f} is empty")));
            }
        }
        if fold.iter().any(|&f| f >= k) {
            return Err(Error::InvalidArgument("fold index out of range".into()));
        }
        Ok(CvPlan { k, fold })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.fold.len()
    }

    pub fn fold_of(&self, unit: usize) -> usize {
        self.fold[unit]
    }

    fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.fold.len()).partition(|&i| self.fold[i] != f)
    }
}

/// Out-of-fold predictions and risks of every candidate.
#[derive(Debug, Clone)]
pub struct CvResult {
    /// `predictions[m]` is learner `m`'s out-of-fold prediction vector, or
    /// `None` if it failed on some fold.
    pub predictions: Vec<Option<Vec<f64>>>,
    /// Weighted mean squared error; infinite for failed learners.
    pub risks: Vec<f64>,
    pub failures: Vec<Option<String>>,
}

/// Distinct screeners among the specs, and each spec's screener slot.
fn screener_slots(specs: &[LearnerSpec]) -> (Vec<ScreenerSpec>, Vec<Option<usize>>) {
    let mut distinct: Vec<ScreenerSpec> = Vec::new();
    let slots = specs
        .iter()
        .map(|s| {
            let sc = s.screener.as_ref()?;
            if matches!(s.learner, crate::learners::LearnerKind::Mean) {
                return None;
            }
            Some(distinct.iter().position(|d| d == sc).unwrap_or_else(|| {
                distinct.push(sc.clone());
                distinct.len() - 1
            }))
        })
        .collect();
    (distinct, slots)
}

/// Fits every learner on `train`, screening once per distinct screener.
fn fit_all(
    train: &TrainingTask,
    specs: &[LearnerSpec],
    include: &[bool],
    seed: u64,
) -> Vec<Result<FittedLearner>> {
    let (screeners, slots) = screener_slots(specs);
    let screened: Vec<Option<Result<Vec<usize>>>> = screeners
        .iter()
        .enumerate()
        .map(|(s, sc)| {
            let used = slots.iter().zip(include).any(|(sl, &inc)| inc && *sl == Some(s));
            used.then(|| screen_features(train, sc, seed::derive(seed, &[0x5c, s as u64])))
        })
        .collect();
    specs
        .par_iter()
        .enumerate()
        .map(|(m, spec)| {
            if !include[m] {
                return Err(Error::learner(spec.learner.name(), "not refitted"));
            }
            let features = match slots[m] {
                Some(s) => match screened[s].as_ref().expect("screened when used") {
                    Ok(f) => f.clone(),
                    Err(e) => return Err(Error::learner(spec.learner.name(), format!("screening failed: {e}"))),
                },
                None => (0..train.p()).collect(),
            };
            fit_on_features(&spec.learner, train, features, seed::derive(seed, &[m as u64]))
        })
        .collect()
}

pub fn cv_predictions(task: &TrainingTask, specs: &[LearnerSpec], plan: &CvPlan, seed: u64) -> Result<CvResult> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("no candidate learners".into()));
    }
    if plan.n() != task.n() {
        return Err(Error::Mismatch(format!("fold plan for {} units, task has {}", plan.n(), task.n())));
    }
    let m = specs.len();
    let all = vec![true; m];
    let per_fold: Vec<(Vec<usize>, Vec<Result<Vec<f64>>>)> = (0..plan.k())
        .into_par_iter()
        .map(|f| {
            let (train_rows, test_rows) = plan.split(f);
            let train = task.subset(&train_rows);
            let test_x = task.x.select_rows(&test_rows);
            let fits = fit_all(&train, specs, &all, seed::derive(seed, &[f as u64]));
            let preds = fits.into_iter().map(|r| r.and_then(|fit| fit.predict(&test_x))).collect();
            (test_rows, preds)
        })
        .collect();

    let mut predictions: Vec<Option<Vec<f64>>> = vec![Some(vec![0.0; task.n()]); m];
    let mut failures: Vec<Option<String>> = vec![None; m];
    for (rows, preds) in per_fold {
        for (j, p) in preds.into_iter().enumerate() {
            match p {
                Ok(v) => {
                    if let Some(col) = predictions[j].as_mut() {
                        for (&i, x) in rows.iter().zip(v) {
                            col[i] = x;
                        }
                    }
                }
                Err(e) => {
                    if failures[j].is_none() {
                        log::warn!("learner {} failed in cross-validation: {e}", specs[j]);
                        failures[j] = Some(e.to_string());
                    }
                    predictions[j] = None;
                }
            }
        }
    }
    let risks = predictions
        .iter()
        .map(|p| p.as_ref().map_or(f64::INFINITY, |z| weighted_mse(&task.y, z, &task.w)))
        .collect();
    Ok(CvResult {
        predictions,
        risks,
        failures,
    })
}

pub fn weighted_mse(y: &[f64], pred: &[f64], w: &[f64]) -> f64 {
    let mut s = 0.0;
    let mut sw = 0.0;
    for ((a, b), c) in y.iter().zip(pred).zip(w) {
        s += c * (a - b) * (a - b);
        sw += c;
    }
    s / sw
}

/// How the combination weights are computed from the out-of-fold matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaLearner {
    /// Least squares over the probability simplex.
    #[default]
    Simplex,
    /// Non-negative least squares, then rescaled to sum to one.
    NnlsNormalized,
}

const WEIGHT_FLOOR: f64 = 1e-10;

/// Weighted Gram system of the columns: `(G, b)` with `G = ZᵀWZ / Σw`.
fn gram(z: &[&[f64]], y: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = z.len();
    let sw: f64 = w.iter().sum();
    let mut g = vec![0.0; m * m];
    let mut b = vec![0.0; m];
    for j in 0..m {
        b[j] = z[j].iter().zip(y).zip(w).map(|((a, c), d)| a * c * d).sum::<f64>() / sw;
        for k in 0..=j {
            let s = z[j].iter().zip(z[k]).zip(w).map(|((a, c), d)| a * c * d).sum::<f64>() / sw;
            g[j * m + k] = s;
            g[k * m + j] = s;
        }
    }
    (g, b)
}

/// Minimizes the weighted squared error of `Σ_m w_m z_m` over the simplex.
///
/// Primal active-set method started at uniform weights.  A ridge of
/// relative size 1e-12 keeps the reduced systems solvable and makes
/// identical columns share weight equally.
///
/// Identical columns are solved as one and share its weight equally.
pub fn solve_simplex_weights(z: &[&[f64]], y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::AllLearnersFailed);
    }
    let mut reps: Vec<usize> = Vec::new();
    let group: Vec<usize> = (0..z.len())
        .map(|j| match reps.iter().position(|&r| z[r] == z[j]) {
            Some(g) => g,
            None => {
                reps.push(j);
                reps.len() - 1
            }
        })
        .collect();
    let cols: Vec<&[f64]> = reps.iter().map(|&r| z[r]).collect();
    let sub = simplex_active_set(&cols, y, w)?;
    let mut size = vec![0usize; reps.len()];
    group.iter().for_each(|&g| size[g] += 1);
    Ok(group.iter().map(|&g| sub[g] / size[g] as f64).collect())
}

fn simplex_active_set(z: &[&[f64]], y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let m = z.len();
    if m == 1 {
        return Ok(vec![1.0]);
    }
    let (mut g, b) = gram(z, y, w);
    let tr = (0..m).map(|j| g[j * m + j]).sum::<f64>() / m as f64;
    let ridge = 1e-12 * tr.max(f64::MIN_POSITIVE);
    for j in 0..m {
        g[j * m + j] += ridge;
    }
    let tol = 1e-12 * tr.max(1e-300);
    let mut alpha = vec![1.0 / m as f64; m];
    let mut free: Vec<bool> = vec![true; m];
    for _ in 0..(20 * m + 50) {
        let f: Vec<usize> = (0..m).filter(|&j| free[j]).collect();
        let nf = f.len();
        // KKT system of the equality-constrained subproblem on the free set
        let dim = nf + 1;
        let mut a = vec![0.0; dim * dim];
        let mut r = vec![0.0; dim];
        for (p, &i) in f.iter().enumerate() {
            for (q, &j) in f.iter().enumerate() {
                a[p * dim + q] = g[i * m + j];
            }
            a[p * dim + nf] = 1.0;
            a[nf * dim + p] = 1.0;
            r[p] = b[i];
        }
        r[nf] = 1.0;
        let sol = solve_dense(&a, &r, dim).ok_or_else(|| Error::InvalidArgument("singular weight system".into()))?;
        let target: Vec<f64> = sol[..nf].to_vec();
        if target.iter().all(|&v| v >= 0.0) {
            for (p, &i) in f.iter().enumerate() {
                alpha[i] = target[p];
            }
            // multipliers of the bound constraints: grad_j - lambda
            let grad: Vec<f64> = (0..m)
                .map(|j| (0..m).map(|k| g[j * m + k] * alpha[k]).sum::<f64>() - b[j])
                .collect();
            let lambda = f.iter().map(|&i| grad[i]).sum::<f64>() / nf as f64;
            let release = (0..m)
                .filter(|&j| !free[j])
                .map(|j| (j, grad[j] - lambda))
                .filter(|&(_, mu)| mu < -tol)
                .min_by(|x, y| x.1.total_cmp(&y.1));
            match release {
                Some((j, _)) => free[j] = true,
                None => break,
            }
        } else {
            // move toward the target until the first weight hits zero
            let mut t = 1.0;
            for (p, &i) in f.iter().enumerate() {
                if target[p] < 0.0 {
                    let ti = alpha[i] / (alpha[i] - target[p]);
                    t = f64::min(t, ti);
                }
            }
            for (p, &i) in f.iter().enumerate() {
                alpha[i] += t * (target[p] - alpha[i]);
            }
            for (p, &i) in f.iter().enumerate() {
                if target[p] < 0.0 && alpha[i] <= 1e-15 {
                    alpha[i] = 0.0;
                    free[i] = false;
                }
            }
            if f.iter().all(|&i| !free[i]) {
                return Err(Error::InvalidArgument("active set emptied".into()));
            }
        }
    }
    // weights at ridge-noise level are zero at the unpenalized optimum
    alpha.iter_mut().for_each(|a| {
        if *a < WEIGHT_FLOOR {
            *a = 0.0
        }
    });
    let s: f64 = alpha.iter().sum();
    alpha.iter_mut().for_each(|a| *a /= s);
    Ok(alpha)
}

/// Lawson–Hanson non-negative least squares, then normalized to sum to
/// one (uniform if every coefficient is zero).
pub fn solve_nnls_normalized(z: &[&[f64]], y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let m = z.len();
    if m == 0 {
        return Err(Error::AllLearnersFailed);
    }
    let (g, b) = gram(z, y, w);
    let mut x = vec![0.0; m];
    let mut passive = vec![false; m];
    let tol = 1e-12 * (0..m).map(|j| g[j * m + j]).fold(0.0, f64::max).max(1e-300);
    for _ in 0..(3 * m + 10) {
        let grad: Vec<f64> = (0..m).map(|j| b[j] - (0..m).map(|k| g[j * m + k] * x[k]).sum::<f64>()).collect();
        let Some(j) = (0..m)
            .filter(|&j| !passive[j] && grad[j] > tol)
            .max_by(|&a, &c| grad[a].total_cmp(&grad[c]))
        else {
            break;
        };
        passive[j] = true;
        loop {
            let p: Vec<usize> = (0..m).filter(|&i| passive[i]).collect();
            let np = p.len();
            let mut a = vec![0.0; np * np];
            let mut r = vec![0.0; np];
            for (u, &i) in p.iter().enumerate() {
                for (v, &k) in p.iter().enumerate() {
                    a[u * np + v] = g[i * m + k];
                }
                a[u * np + u] += 1e-14;
                r[u] = b[i];
            }
            let s = solve_dense(&a, &r, np).ok_or_else(|| Error::InvalidArgument("singular NNLS system".into()))?;
            if s.iter().all(|&v| v > 0.0) {
                for (u, &i) in p.iter().enumerate() {
                    x[i] = s[u];
                }
                break;
            }
            let mut t = 1.0;
            for (u, &i) in p.iter().enumerate() {
                if s[u] <= 0.0 {
                    t = f64::min(t, x[i] / (x[i] - s[u]));
                }
            }
            for (u, &i) in p.iter().enumerate() {
                x[i] += t * (s[u] - x[i]);
                if x[i] <= 1e-15 {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    let s: f64 = x.iter().sum();
    if s > 0.0 {
        Ok(x.iter().map(|v| v / s).collect())
    } else {
        Ok(vec![1.0 / m as f64; m])
    }
}

/// A fitted super learner.
#[derive(Debug)]
pub struct SuperLearnerFit {
    pub specs: Vec<LearnerSpec>,
    pub family: Family,
    pub cv: CvResult,
    /// One weight per spec; zero for failed learners.
    pub weights: Vec<f64>,
    /// CV risk of the weighted combination of out-of-fold predictions.
    pub cv_risk: f64,
    fits: Vec<Option<FittedLearner>>,
}

/// One row of the learner-weight table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub learner: String,
    pub screener: String,
    pub weight: f64,
    pub cv_risk: f64,
}

impl SuperLearnerFit {
    pub fn fit(
        task: &TrainingTask,
        specs: &[LearnerSpec],
        plan: &CvPlan,
        meta: MetaLearner,
        seed: u64,
    ) -> Result<Self> {
        let cv = cv_predictions(task, specs, plan, seed)?;
        let mut usable: Vec<bool> = cv.predictions.iter().map(Option::is_some).collect();
        let mut failures = cv.failures.clone();
        loop {
            let idx: Vec<usize> = (0..specs.len()).filter(|&j| usable[j]).collect();
            if idx.is_empty() {
                return Err(Error::AllLearnersFailed);
            }
            let cols: Vec<&[f64]> = idx.iter().map(|&j| cv.predictions[j].as_deref().unwrap()).collect();
            let sub = match meta {
                MetaLearner::Simplex => solve_simplex_weights(&cols, &task.y, &task.w)?,
                MetaLearner::NnlsNormalized => solve_nnls_normalized(&cols, &task.y, &task.w)?,
            };
            let mut weights = vec![0.0; specs.len()];
            for (&j, wj) in idx.iter().zip(&sub) {
                weights[j] = *wj;
            }
            let include: Vec<bool> = weights.iter().map(|&w| w > 0.0).collect();
            let refits = fit_all(task, specs, &include, seed::derive(seed, &[u64::MAX]));
            let mut fits = Vec::with_capacity(specs.len());
            let mut refit_failed = false;
            for (j, r) in refits.into_iter().enumerate() {
                match r {
                    Ok(f) => fits.push(Some(f)),
                    Err(e) => {
                        if include[j] {
                            log::warn!("learner {} failed on the full data: {e}", specs[j]);
                            failures[j] = Some(e.to_string());
                            usable[j] = false;
                            refit_failed = true;
                        }
                        fits.push(None);
                    }
                }
            }
            if refit_failed {
                continue;
            }
            let n = task.n();
            let mut combo = vec![0.0; n];
            for (j, &wj) in weights.iter().enumerate() {
                if wj > 0.0 {
                    let z = cv.predictions[j].as_ref().unwrap();
                    combo.iter_mut().zip(z).for_each(|(c, v)| *c += wj * v);
                }
            }
            let cv_risk = weighted_mse(&task.y, &combo, &task.w);
            let mut cv = cv.clone();
            cv.failures = failures;
            return Ok(SuperLearnerFit {
                specs: specs.to_vec(),
                family: task.family,
                cv,
                weights,
                cv_risk,
                fits,
            });
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.nrows()];
        for (fit, &w) in self.fits.iter().zip(&self.weights) {
            if w > 0.0 {
                let p = fit.as_ref().expect("positive weight implies a refit").predict(x)?;
                out.iter_mut().zip(p).for_each(|(o, v)| *o += w * v);
            }
        }
        if self.family == Family::QuasiBinomial {
            out.iter_mut()
                .for_each(|v| *v = v.clamp(PREDICTION_BOUND, 1.0 - PREDICTION_BOUND));
        }
        Ok(out)
    }

    /// Full-data refit of learner `m`, when it carries weight.
    pub fn learner_fit(&self, m: usize) -> Option<&FittedLearner> {
        self.fits[m].as_ref()
    }

    pub fn weight_table(&self) -> Vec<WeightRow> {
        self.specs
            .iter()
            .enumerate()
            .map(|(m, s)| WeightRow {
                learner: s.learner.name().to_string(),
                screener: s.screener_label(),
                weight: self.weights[m],
                cv_risk: self.cv.risks[m],
            })
            .collect()
    }
}

/// Convenience wrapper: fit, then predict on `x_new`.
pub fn sl_fit_predict(
    task: &TrainingTask,
    specs: &[LearnerSpec],
    plan: &CvPlan,
    x_new: &Matrix,
    seed: u64,
) -> Result<(SuperLearnerFit, Vec<f64>)> {
    let fit = SuperLearnerFit::fit(task, specs, plan, MetaLearner::Simplex, seed)?;
    let pred = fit.predict(x_new)?;
    Ok((fit, pred))
}

pub fn write_weight_csv<W: Write>(rows: &[WeightRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
