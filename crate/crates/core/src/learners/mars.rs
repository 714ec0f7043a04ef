use super::glm::fit_penalized;
use super::{Family, Model, TrainingTask};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::stats::quantile_sorted;

/// Candidates scored exactly per forward step after ranking by residual
/// correlation.
const EXACT_CANDIDATES: usize = 10;
const KNOT_QUANTILES: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Hinge {
    feature: usize,
    knot: f64,
    /// `+1` for `max(0, x - knot)`, `-1` for `max(0, knot - x)`.
    sign: f64,
}

impl Hinge {
    fn eval(&self, x: f64) -> f64 {
        (self.sign * (x - self.knot)).max(0.0)
    }
}

/// Product of hinges; the empty product is the intercept.
#[derive(Debug, Clone, Default)]
struct BasisFn(Vec<Hinge>);

impl BasisFn {
    fn column(&self, x: &Matrix) -> Vec<f64> {
        let mut c = vec![1.0; x.nrows()];
        for h in &self.0 {
            for (v, xv) in c.iter_mut().zip(x.column(h.feature)) {
                *v *= h.eval(*xv);
            }
        }
        c
    }
}

/// Forward-stepwise additive hinge regression without a pruning pass.
#[derive(Debug)]
pub(crate) struct MarsModel {
    family: Family,
    basis: Vec<BasisFn>,
    beta: Vec<f64>,
}

fn wdot(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), z)| x * y * z).sum()
}

/// Orthonormalizes `c` against `q` (weighted inner product); `None` when the
/// remainder is numerically zero.
fn orthonormalize(mut c: Vec<f64>, q: &[Vec<f64>], w: &[f64]) -> Option<Vec<f64>> {
    let n0 = wdot(&c, &c, w);
    if !(n0 > 0.0) {
        return None;
    }
    for _ in 0..2 {
        for qk in q {
            let a = wdot(qk, &c, w);
            c.iter_mut().zip(qk).for_each(|(v, qv)| *v -= a * qv);
        }
    }
    let nn = wdot(&c, &c, w);
    if nn <= 1e-10 * n0 {
        return None;
    }
    let s = nn.sqrt();
    c.iter_mut().for_each(|v| *v /= s);
    Some(c)
}

struct Candidate {
    parent: usize,
    feature: usize,
    knot: f64,
    proxy: f64,
}

pub(crate) fn fit(task: &TrainingTask, max_terms: usize, degree: usize) -> Result<MarsModel> {
    let n = task.n();
    let w = &task.w;
    let sw: f64 = w.iter().sum();
    let knots: Vec<Vec<f64>> = (0..task.p())
        .map(|j| {
            let mut s = task.x.column(j).to_vec();
            s.sort_by(|a, b| a.total_cmp(b));
            let max = s[n - 1];
            let mut k: Vec<f64> = (1..=KNOT_QUANTILES)
                .map(|q| quantile_sorted(&s, q as f64 / (KNOT_QUANTILES + 1) as f64))
                .filter(|&v| v < max)
                .collect();
            k.dedup();
            k
        })
        .collect();

    let mut basis = vec![BasisFn::default()];
    let mut cols = vec![vec![1.0; n]];
    let mut q = vec![vec![1.0 / sw.sqrt(); n]];
    let ybar = wdot(&q[0], &task.y, w);
    let mut r: Vec<f64> = task.y.iter().map(|v| v - ybar * q[0][0]).collect();
    let rss0 = wdot(&r, &r, w);

    while basis.len() + 2 <= max_terms && rss0 > 0.0 {
        let mut cands = Vec::new();
        for (pi, parent) in basis.iter().enumerate() {
            if parent.0.len() >= degree {
                continue;
            }
            let pc = &cols[pi];
            for f in 0..task.p() {
                if parent.0.iter().any(|h| h.feature == f) {
                    continue;
                }
                let xf = task.x.column(f);
                for &k in &knots[f] {
                    let mut proxy = 0.0;
                    for sign in [1.0, -1.0] {
                        let (mut num, mut den) = (0.0, 0.0);
                        for i in 0..n {
                            let v = pc[i] * (sign * (xf[i] - k)).max(0.0);
                            num += w[i] * r[i] * v;
                            den += w[i] * v * v;
                        }
                        if den > 0.0 {
                            proxy += num * num / den;
                        }
                    }
                    cands.push(Candidate {
                        parent: pi,
                        feature: f,
                        knot: k,
                        proxy,
                    });
                }
            }
        }
        if cands.is_empty() {
            break;
        }
        cands.sort_by(|a, b| b.proxy.total_cmp(&a.proxy));
        cands.truncate(EXACT_CANDIDATES);

        let mut best: Option<(f64, Vec<(BasisFn, Vec<f64>, Vec<f64>)>)> = None;
        for c in &cands {
            let mut added = Vec::new();
            let mut qq = q.clone();
            let mut gain = 0.0;
            for sign in [1.0, -1.0] {
                let mut b = basis[c.parent].clone();
                b.0.push(Hinge {
                    feature: c.feature,
                    knot: c.knot,
                    sign,
                });
                let col = b.column(&task.x);
                if let Some(u) = orthonormalize(col.clone(), &qq, w) {
                    let a = wdot(&r, &u, w);
                    gain += a * a;
                    qq.push(u.clone());
                    added.push((b, col, u));
                }
            }
            if !added.is_empty() && best.as_ref().is_none_or(|(g, _)| gain > *g) {
                best = Some((gain, added));
            }
        }
        let Some((gain, added)) = best else { break };
        if gain <= 1e-8 * rss0 {
            break;
        }
        for (b, col, u) in added {
            let a = wdot(&r, &u, w);
            r.iter_mut().zip(&u).for_each(|(v, uv)| *v -= a * uv);
            basis.push(b);
            cols.push(col);
            q.push(u);
        }
    }

    let beta = fit_penalized(&cols[1..], &task.y, w, Family::Gaussian, &vec![0.0; cols.len() - 1], "mars_lite")?;
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::learner("mars_lite", "non-finite coefficients"));
    }
    Ok(MarsModel {
        family: task.family,
        basis,
        beta,
    })
}

impl Model for MarsModel {
    fn predict(&self, x: &Matrix) -> Vec<f64> {
        let mut out = vec![self.beta[0]; x.nrows()];
        for (b, coef) in self.basis.iter().zip(&self.beta).skip(1) {
            for (o, v) in out.iter_mut().zip(b.column(x)) {
                *o += coef * v;
            }
        }
        if self.family == Family::QuasiBinomial {
            out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        }
        out
    }
}
