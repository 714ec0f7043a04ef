use super::standardize::{weighted_moments, Standardizer};
use super::{Family, Model, TrainingTask};
use crate::error::{Error, Result};
use crate::linalg::{solve_spd, weighted_gram};
use crate::matrix::Matrix;
use crate::stats::{expit, logit, weighted_mean};

const ALIAS_TOL: f64 = 1e-10;
const MAX_IRLS: usize = 50;
const MU_EPS: f64 = 1e-10;

/// Penalized (quasi-)likelihood fit of `y` on `[1, cols]`.
///
/// `penalty[j]` is the ridge weight on the coefficient of `cols[j]`; the
/// intercept is never penalized.  Gaussian tasks use the identity link,
/// quasi-binomial tasks the logit link fitted by IRLS.
pub(crate) fn fit_penalized(
    cols: &[Vec<f64>],
    y: &[f64],
    w: &[f64],
    family: Family,
    penalty: &[f64],
    name: &str,
) -> Result<Vec<f64>> {
    let n = y.len();
    let x = Matrix::from_columns(n, cols);
    let solve = |wk: &[f64], z: &[f64]| -> Vec<f64> {
        let (mut g, r, p) = weighted_gram(&x, z, wk, true);
        for (j, pen) in penalty.iter().enumerate() {
            g[(j + 1) * p + j + 1] += pen;
        }
        solve_spd(&g, &r, p, ALIAS_TOL).x
    };
    let beta = match family {
        Family::Gaussian => solve(w, y),
        Family::QuasiBinomial => {
            let m = weighted_mean(y, w).clamp(1e-6, 1.0 - 1e-6);
            let mut beta = vec![0.0; cols.len() + 1];
            beta[0] = logit(m);
            let mut eta = vec![beta[0]; n];
            let mut dev_old = f64::INFINITY;
            let mut wk = vec![0.0; n];
            let mut z = vec![0.0; n];
            for _ in 0..MAX_IRLS {
                for i in 0..n {
                    let mu = expit(eta[i]);
                    let v = (mu * (1.0 - mu)).max(MU_EPS);
                    wk[i] = w[i] * v;
                    z[i] = eta[i] + (y[i] - mu) / v;
                }
                beta = solve(&wk, &z);
                linear_predictor(&x, &beta, &mut eta);
                let dev = penalized_deviance(y, w, &eta, &beta, penalty);
                if !dev.is_finite() {
                    return Err(Error::learner(name, "IRLS diverged"));
                }
                if (dev_old - dev).abs() <= 1e-10 * (dev.abs() + 0.1) {
                    break;
                }
                dev_old = dev;
            }
            beta
        }
    };
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::learner(name, "non-finite coefficients"));
    }
    Ok(beta)
}

fn linear_predictor(x: &Matrix, beta: &[f64], eta: &mut [f64]) {
    eta.iter_mut().for_each(|e| *e = beta[0]);
    for j in 0..x.ncols() {
        let b = beta[j + 1];
        if b != 0.0 {
            for (e, v) in eta.iter_mut().zip(x.column(j)) {
                *e += b * v;
            }
        }
    }
}

fn penalized_deviance(y: &[f64], w: &[f64], eta: &[f64], beta: &[f64], penalty: &[f64]) -> f64 {
    let mut d = 0.0;
    for i in 0..y.len() {
        let mu = expit(eta[i]).clamp(1e-300, 1.0 - 1e-16);
        let yi = y[i];
        let mut term = 0.0;
        if yi > 0.0 {
            term += yi * (yi / mu).ln();
        }
        if yi < 1.0 {
            term += (1.0 - yi) * ((1.0 - yi) / (1.0 - mu)).ln();
        }
        d += 2.0 * w[i] * term;
    }
    d + penalty.iter().zip(&beta[1..]).map(|(p, b)| p * b * b).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Term {
    Main(usize),
    Pair(usize, usize),
}

/// A fitted generalized linear model on standardized terms.
#[derive(Debug, Clone)]
pub struct GlmModel {
    family: Family,
    std: Standardizer,
    terms: Vec<Term>,
    /// Centering and scaling of each term after it is formed.
    term_center: Vec<f64>,
    term_scale: Vec<f64>,
    beta: Vec<f64>,
}

impl GlmModel {
    fn term_columns(&self, x: &Matrix) -> Vec<Vec<f64>> {
        let mains = self.std.apply(x);
        raw_terms(&mains, &self.terms)
            .into_iter()
            .enumerate()
            .map(|(k, c)| {
                c.into_iter()
                    .map(|v| (v - self.term_center[k]) / self.term_scale[k])
                    .collect()
            })
            .collect()
    }

    /// Intercept and one slope per original predictor (zero for dropped
    /// columns); `None` when the model has interaction terms.
    pub fn coefficients(&self, p: usize) -> Option<Vec<f64>> {
        if self.terms.iter().any(|t| matches!(t, Term::Pair(..))) {
            return None;
        }
        let mut out = vec![0.0; p + 1];
        out[0] = self.beta[0];
        for (k, t) in self.terms.iter().enumerate() {
            let Term::Main(m) = *t else { unreachable!() };
            let j = self.std.cols[m];
            let s = self.std.scale[m] * self.term_scale[k];
            let c = self.std.center[m] + self.term_center[k] * self.std.scale[m];
            out[j + 1] = self.beta[k + 1] / s;
            out[0] -= self.beta[k + 1] * c / s;
        }
        Some(out)
    }
}

fn raw_terms(mains: &[Vec<f64>], terms: &[Term]) -> Vec<Vec<f64>> {
    terms
        .iter()
        .map(|t| match *t {
            Term::Main(j) => mains[j].clone(),
            Term::Pair(i, j) => mains[i].iter().zip(&mains[j]).map(|(a, b)| a * b).collect(),
        })
        .collect()
}

impl Model for GlmModel {
    fn predict(&self, x: &Matrix) -> Vec<f64> {
        let cols = self.term_columns(x);
        let mut eta = vec![self.beta[0]; x.nrows()];
        for (c, b) in cols.iter().zip(&self.beta[1..]) {
            for (e, v) in eta.iter_mut().zip(c) {
                *e += b * v;
            }
        }
        match self.family {
            Family::Gaussian => eta,
            Family::QuasiBinomial => eta.into_iter().map(expit).collect(),
        }
    }

    fn as_glm(&self) -> Option<&GlmModel> {
        Some(self)
    }
}

enum Penalty {
    None,
    Prior { sd: f64 },
}

fn fit_terms(task: &TrainingTask, twoway: bool, penalty: Penalty, name: &str) -> Result<GlmModel> {
    let std = Standardizer::fit(&task.x, &task.w);
    let k = std.cols.len();
    let mut terms: Vec<Term> = (0..k).map(Term::Main).collect();
    if twoway {
        for i in 0..k {
            for j in (i + 1)..k {
                terms.push(Term::Pair(i, j));
            }
        }
        if terms.len() + 1 >= task.n() {
            return Err(Error::learner(
                name,
                format!("{} design columns for {} observations", terms.len() + 1, task.n()),
            ));
        }
    }
    let mains = std.apply(&task.x);
    let mut cols = raw_terms(&mains, &terms);
    let mut term_center = Vec::with_capacity(cols.len());
    let mut term_scale = Vec::with_capacity(cols.len());
    for c in cols.iter_mut() {
        let (m, s) = weighted_moments(c, &task.w);
        let s = if s > 1e-12 { s } else { 1.0 };
        c.iter_mut().for_each(|v| *v = (*v - m) / s);
        term_center.push(m);
        term_scale.push(s);
    }
    let q = cols.len();
    let beta = match penalty {
        Penalty::None => fit_penalized(&cols, &task.y, &task.w, task.family, &vec![0.0; q], name)?,
        Penalty::Prior { sd } => {
            let prec = 1.0 / (sd * sd);
            match task.family {
                Family::QuasiBinomial => {
                    fit_penalized(&cols, &task.y, &task.w, task.family, &vec![prec; q], name)?
                }
                Family::Gaussian => {
                    // Posterior mode with the residual variance re-estimated
                    // from the current fit.
                    let sw: f64 = task.w.iter().sum();
                    let (_, sdy) = weighted_moments(&task.y, &task.w);
                    let mut sigma2 = (sdy * sdy).max(1e-12);
                    let mut beta = Vec::new();
                    for _ in 0..5 {
                        beta = fit_penalized(&cols, &task.y, &task.w, task.family, &vec![sigma2 * prec; q], name)?;
                        let mut rss = 0.0;
                        for i in 0..task.n() {
                            let mut f = beta[0];
                            for (c, b) in cols.iter().zip(&beta[1..]) {
                                f += b * c[i];
                            }
                            rss += task.w[i] * (task.y[i] - f).powi(2);
                        }
                        let df = (sw - (q + 1) as f64).max(sw / 2.0);
                        let next = (rss / df).max(1e-12);
                        if (next - sigma2).abs() <= 1e-8 * sigma2 {
                            break;
                        }
                        sigma2 = next;
                    }
                    beta
                }
            }
        }
    };
    Ok(GlmModel {
        family: task.family,
        std,
        terms,
        term_center,
        term_scale,
        beta,
    })
}

pub(crate) fn fit_main(task: &TrainingTask) -> Result<GlmModel> {
    fit_terms(task, false, Penalty::None, "glm_main")
}

pub(crate) fn fit_twoway(task: &TrainingTask) -> Result<GlmModel> {
    fit_terms(task, true, Penalty::None, "glm_twoway")
}

pub(crate) fn fit_ridge(task: &TrainingTask, prior_sd: f64) -> Result<GlmModel> {
    fit_terms(task, false, Penalty::Prior { sd: prior_sd }, "ridge_gaussian_prior")
}
