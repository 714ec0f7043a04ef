use serde::{Deserialize, Serialize};

use super::standardize::{weighted_moments, Standardizer};
use super::tree::grow_forest;
use super::TrainingTask;
use crate::error::{Error, Result};
use crate::seed;

/// Feature-screening algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScreenerKind {
    /// Largest absolute weighted Pearson correlation with the response.
    PearsonCorr,
    /// Nonzero coefficients of a cross-validated elastic net.
    ElasticNet {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    /// Impurity importance of a small random forest.
    RfImportance {
        #[serde(default = "default_rf_trees")]
        trees: usize,
    },
    /// Cramér's V between binned feature and binned response.
    CramersV,
}

fn default_alpha() -> f64 {
    0.75
}

fn default_rf_trees() -> usize {
    100
}

fn default_limit() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenerSpec {
    #[serde(flatten)]
    pub kind: ScreenerKind,
    /// Maximum number of features kept.
    #[serde(default = "default_limit")]
    pub limit: usize,
}

impl ScreenerSpec {
    pub fn pearson(limit: usize) -> Self {
        ScreenerSpec {
            kind: ScreenerKind::PearsonCorr,
            limit,
        }
    }

    pub fn elastic_net(limit: usize) -> Self {
        ScreenerSpec {
            kind: ScreenerKind::ElasticNet { alpha: default_alpha() },
            limit,
        }
    }

    pub fn rf_importance(limit: usize) -> Self {
        ScreenerSpec {
            kind: ScreenerKind::RfImportance {
                trees: default_rf_trees(),
            },
            limit,
        }
    }

    pub fn cramers_v(max: usize) -> Self {
        ScreenerSpec {
            kind: ScreenerKind::CramersV,
            limit: max,
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            ScreenerKind::PearsonCorr => "pearson_corr".into(),
            ScreenerKind::ElasticNet { .. } => "elastic_net".into(),
            ScreenerKind::RfImportance { .. } => "rf_importance".into(),
            ScreenerKind::CramersV => format!("cramers_v_{}", self.limit),
        }
    }
}

/// Minimum number of features the elastic-net screener returns when the
/// penalized fit keeps fewer.
const ENET_MIN_KEEP: usize = 2;

/// Selects at most `spec.limit` informative columns, returned in increasing
/// index order.  Constant columns are never selected.
pub fn screen_features(task: &TrainingTask, spec: &ScreenerSpec, seed: u64) -> Result<Vec<usize>> {
    if task.p() == 0 {
        return Err(Error::InvalidArgument("no features to screen".into()));
    }
    if spec.limit == 0 {
        return Err(Error::InvalidArgument("screening limit must be positive".into()));
    }
    let std = Standardizer::fit(&task.x, &task.w);
    if std.cols.is_empty() {
        return Err(Error::NothingToScreen);
    }
    let corr = abs_correlations(task, &std);
    let mut chosen = match &spec.kind {
        ScreenerKind::PearsonCorr => top_k(&corr, spec.limit, 0.0),
        ScreenerKind::ElasticNet { alpha } => {
            let beta = elastic_net_cv(task, &std, *alpha, seed)?;
            let mut keep = top_k(&beta, spec.limit, 0.0);
            let want = ENET_MIN_KEEP.min(spec.limit).min(std.cols.len());
            if keep.len() < want {
                for j in top_k(&corr, std.cols.len(), -1.0) {
                    if keep.len() >= want {
                        break;
                    }
                    if !keep.contains(&j) {
                        keep.push(j);
                    }
                }
            }
            keep
        }
        ScreenerKind::RfImportance { trees } => {
            let sub = task.with_columns(&std.cols);
            let (_, imp) = grow_forest(&sub, *trees, None, 5.0, 64, seed::derive(seed, &[0x7266]))?;
            let mut full = vec![0.0; task.p()];
            for (k, &j) in std.cols.iter().enumerate() {
                full[j] = imp[k];
            }
            top_k(&full, spec.limit, 0.0)
        }
        ScreenerKind::CramersV => {
            let v = cramers_v(task, &std);
            top_k(&v, spec.limit, 0.0)
        }
    };
    if chosen.is_empty() {
        // no feature carries signal: keep the single most correlated one
        chosen = top_k(&corr, 1, -1.0);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Indices of the `k` largest scores strictly above `floor`, ties broken by index.
fn top_k(score: &[f64], k: usize, floor: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..score.len()).filter(|&j| score[j] > floor).collect();
    idx.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// |corr(x_j, y)| for kept columns, -1 for constant ones.
fn abs_correlations(task: &TrainingTask, std: &Standardizer) -> Vec<f64> {
    let mut out = vec![-1.0; task.p()];
    let (my, sy) = weighted_moments(&task.y, &task.w);
    let sw: f64 = task.w.iter().sum();
    for (k, &j) in std.cols.iter().enumerate() {
        if sy == 0.0 {
            out[j] = 0.0;
            continue;
        }
        let c: f64 = task
            .x
            .column(j)
            .iter()
            .zip(&task.y)
            .zip(&task.w)
            .map(|((x, y), w)| w * (x - std.center[k]) * (y - my))
            .sum::<f64>()
            / sw;
        out[j] = (c / (std.scale[k] * sy)).abs();
    }
    out
}

/// Elastic-net path by coordinate descent on the weighted Gram matrix of
/// standardized predictors; returns |β| per original column at the
/// λ with the smallest cross-validated error.
fn elastic_net_cv(task: &TrainingTask, std: &Standardizer, alpha: f64, seed: u64) -> Result<Vec<f64>> {
    const N_LAMBDA: usize = 20;
    const FOLDS: usize = 5;
    let n = task.n();
    let cols = std.apply(&task.x);
    let lambdas = {
        let (my, _) = weighted_moments(&task.y, &task.w);
        let sw: f64 = task.w.iter().sum();
        let lmax = cols
            .iter()
            .map(|c| {
                (c.iter().zip(&task.y).zip(&task.w).map(|((x, y), w)| w * x * (y - my)).sum::<f64>() / sw).abs()
            })
            .fold(0.0, f64::max)
            / alpha.max(1e-3);
        if !(lmax > 0.0) {
            return Ok(vec![0.0; task.p()]);
        }
        let ratio: f64 = 1e-3;
        (0..N_LAMBDA)
            .map(|k| lmax * ratio.powf(k as f64 / (N_LAMBDA - 1) as f64))
            .collect::<Vec<f64>>()
    };

    // balanced seeded fold assignment
    let mut order: Vec<(u64, usize)> = (0..n).map(|i| (seed::derive(seed, &[0x656e, i as u64]), i)).collect();
    order.sort_unstable();
    let mut fold = vec![0usize; n];
    for (r, &(_, i)) in order.iter().enumerate() {
        fold[i] = r % FOLDS;
    }

    let mut cv_err = [0.0; N_LAMBDA];
    for f in 0..FOLDS {
        let w_train: Vec<f64> = (0..n).map(|i| if fold[i] == f { 0.0 } else { task.w[i] }).collect();
        if w_train.iter().all(|&v| v == 0.0) {
            continue;
        }
        let path = enet_path(&cols, &task.y, &w_train, alpha, &lambdas);
        for (l, (b0, beta)) in path.iter().enumerate() {
            for i in (0..n).filter(|&i| fold[i] == f) {
                let mut pred = *b0;
                for (c, b) in cols.iter().zip(beta) {
                    pred += b * c[i];
                }
                cv_err[l] += task.w[i] * (task.y[i] - pred).powi(2);
            }
        }
    }
    let best = (0..N_LAMBDA).fold(0, |b, l| if cv_err[l] < cv_err[b] { l } else { b });
    let path = enet_path(&cols, &task.y, &task.w, alpha, &lambdas[..=best]);
    let (_, beta) = &path[best];
    let mut out = vec![0.0; task.p()];
    for (k, &j) in std.cols.iter().enumerate() {
        out[j] = beta[k].abs();
    }
    Ok(out)
}

/// Coefficients along a decreasing λ path, warm-started.
fn enet_path(cols: &[Vec<f64>], y: &[f64], w: &[f64], alpha: f64, lambdas: &[f64]) -> Vec<(f64, Vec<f64>)> {
    let p = cols.len();
    let sw: f64 = w.iter().sum();
    let wn: Vec<f64> = w.iter().map(|v| v / sw).collect();
    let xm: Vec<f64> = cols.iter().map(|c| c.iter().zip(&wn).map(|(a, b)| a * b).sum()).collect();
    let ym: f64 = y.iter().zip(&wn).map(|(a, b)| a * b).sum();
    // centered weighted Gram and cross-products
    let mut g = vec![0.0; p * p];
    let mut r = vec![0.0; p];
    for j in 0..p {
        let cj: Vec<f64> = cols[j].iter().zip(&wn).map(|(x, w)| w * (x - xm[j])).collect();
        r[j] = cj.iter().zip(y).map(|(a, b)| a * (b - ym)).sum();
        for k in 0..=j {
            let s: f64 = cj.iter().zip(&cols[k]).map(|(a, b)| a * (b - xm[k])).sum();
            g[j * p + k] = s;
            g[k * p + j] = s;
        }
    }
    let var_y: f64 = y.iter().zip(&wn).map(|(a, b)| b * (a - ym) * (a - ym)).sum();
    // converged when no coordinate moves the fit by more than a tiny share
    // of the outcome variance
    let tol = 1e-7 * var_y.max(f64::MIN_POSITIVE);
    let mut beta = vec![0.0; p];
    // grad[j] = r[j] - (G beta)[j], kept current as coefficients move
    let mut grad = r.clone();
    let mut out = Vec::with_capacity(lambdas.len());
    for &lam in lambdas {
        let l1 = lam * alpha;
        let l2 = lam * (1.0 - alpha);
        let mut full_pass = true;
        for _ in 0..10_000 {
            let mut max_delta: f64 = 0.0;
            for j in 0..p {
                let gjj = g[j * p + j];
                if gjj <= 0.0 || (!full_pass && beta[j] == 0.0) {
                    continue;
                }
                let new = soft(grad[j] + gjj * beta[j], l1) / (gjj + l2);
                let delta = new - beta[j];
                if delta != 0.0 {
                    for k in 0..p {
                        grad[k] -= g[k * p + j] * delta;
                    }
                    beta[j] = new;
                    max_delta = max_delta.max(gjj * delta * delta);
                }
            }
            if max_delta < tol {
                if full_pass {
                    break;
                }
                full_pass = true;
            } else {
                full_pass = false;
            }
        }
        let b0 = ym - xm.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
        out.push((b0, beta.clone()));
    }
    out
}

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Bin codes: the values themselves when there are at most four distinct
/// levels, otherwise weighted quartiles.
fn bin_codes(x: &[f64]) -> (Vec<usize>, usize) {
    let mut distinct = x.to_vec();
    distinct.sort_by(|a, b| a.total_cmp(b));
    distinct.dedup();
    if distinct.len() <= 4 {
        let codes = x.iter().map(|v| distinct.partition_point(|d| d < v)).collect();
        return (codes, distinct.len());
    }
    let mut s = x.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let cuts: Vec<f64> = [0.25, 0.5, 0.75]
        .iter()
        .map(|&q| crate::stats::quantile_sorted(&s, q))
        .collect();
    let codes = x.iter().map(|v| cuts.partition_point(|c| c < v)).collect();
    (codes, 4)
}

fn cramers_v(task: &TrainingTask, std: &Standardizer) -> Vec<f64> {
    let mut out = vec![-1.0; task.p()];
    let (yc, ly) = bin_codes(&task.y);
    let sw: f64 = task.w.iter().sum();
    for &j in &std.cols {
        let (xc, lx) = bin_codes(task.x.column(j));
        let mut table = vec![0.0; lx * ly];
        for i in 0..task.n() {
            table[xc[i] * ly + yc[i]] += task.w[i];
        }
        let rows: Vec<f64> = (0..lx).map(|a| (0..ly).map(|b| table[a * ly + b]).sum()).collect();
        let colsum: Vec<f64> = (0..ly).map(|b| (0..lx).map(|a| table[a * ly + b]).sum()).collect();
        let mut chi2 = 0.0;
        for a in 0..lx {
            for b in 0..ly {
                let e = rows[a] * colsum[b] / sw;
                if e > 0.0 {
                    chi2 += (table[a * ly + b] - e).powi(2) / e;
                }
            }
        }
        let kr = rows.iter().filter(|&&v| v > 0.0).count();
        let kc = colsum.iter().filter(|&&v| v > 0.0).count();
        let m = kr.min(kc);
        out[j] = if m > 1 { (chi2 / (sw * (m - 1) as f64)).sqrt() } else { 0.0 };
    }
    out
}
