use rand::Rng;

use super::standardize::{weighted_moments, Standardizer};
use super::{Family, Model, TrainingTask};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;
use crate::stats::expit;

/// Single-hidden-layer perceptron with logistic hidden units.
#[derive(Debug)]
pub(crate) struct NetModel {
    family: Family,
    std: Standardizer,
    hidden: usize,
    theta: Vec<f64>,
    y_center: f64,
    y_scale: f64,
}

struct Net<'a> {
    p: usize,
    hidden: usize,
    rows: &'a [f64],
    y: &'a [f64],
    w: &'a [f64],
    sigmoid_out: bool,
    decay: f64,
}

impl Net<'_> {
    fn out_offset(&self) -> usize {
        self.hidden * (self.p + 1)
    }

    fn forward(&self, theta: &[f64], row: &[f64], z: &mut [f64]) -> f64 {
        let p1 = self.p + 1;
        let off = self.out_offset();
        let mut out = theta[off];
        for k in 0..self.hidden {
            let wk = &theta[k * p1..(k + 1) * p1];
            let mut a = wk[0];
            for j in 0..self.p {
                a += wk[j + 1] * row[j];
            }
            z[k] = expit(a);
            out += theta[off + 1 + k] * z[k];
        }
        if self.sigmoid_out {
            expit(out)
        } else {
            out
        }
    }

    fn loss_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let p1 = self.p + 1;
        let off = self.out_offset();
        let mut z = vec![0.0; self.hidden];
        let mut loss = 0.0;
        for (i, row) in self.rows.chunks_exact(self.p).enumerate() {
            let yhat = self.forward(theta, row, &mut z);
            let e = yhat - self.y[i];
            loss += self.w[i] * e * e;
            let mut r = 2.0 * self.w[i] * e;
            if self.sigmoid_out {
                r *= yhat * (1.0 - yhat);
            }
            if r == 0.0 {
                continue;
            }
            grad[off] += r;
            for k in 0..self.hidden {
                grad[off + 1 + k] += r * z[k];
                let d = r * theta[off + 1 + k] * z[k] * (1.0 - z[k]);
                let gk = &mut grad[k * p1..(k + 1) * p1];
                gk[0] += d;
                for j in 0..self.p {
                    gk[j + 1] += d * row[j];
                }
            }
        }
        for (g, t) in grad.iter_mut().zip(theta) {
            loss += self.decay * t * t;
            *g += 2.0 * self.decay * t;
        }
        loss
    }
}

/// Limited-memory BFGS with a backtracking Armijo line search.
///
/// Stops after `max_iter` iterations or when an iteration reduces the
/// objective by less than `reltol` relative to its value.
pub(crate) fn lbfgs(
    mut f: impl FnMut(&[f64], &mut [f64]) -> f64,
    mut x: Vec<f64>,
    max_iter: usize,
    reltol: f64,
) -> Vec<f64> {
    const M: usize = 7;
    let d = x.len();
    let mut g = vec![0.0; d];
    let mut fx = f(&x, &mut g);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut x_new = vec![0.0; d];
    let mut g_new = vec![0.0; d];
    for _ in 0..max_iter {
        // two-loop recursion for the search direction
        let mut q = g.clone();
        let k = s_hist.len();
        let mut alpha = vec![0.0; k];
        for j in (0..k).rev() {
            let rho = 1.0 / dot(&y_hist[j], &s_hist[j]);
            alpha[j] = rho * dot(&s_hist[j], &q);
            axpy(-alpha[j], &y_hist[j], &mut q);
        }
        let gamma = if k > 0 {
            dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1])
        } else {
            1.0 / norm(&g).max(1e-12)
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for j in 0..k {
            let rho = 1.0 / dot(&y_hist[j], &s_hist[j]);
            let beta = rho * dot(&y_hist[j], &q);
            axpy(alpha[j] - beta, &s_hist[j], &mut q);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            s_hist.clear();
            y_hist.clear();
            dir = g.iter().map(|v| -v / norm(&g).max(1e-12)).collect();
            slope = dot(&g, &dir);
            if !(slope < 0.0) {
                break;
            }
        }
        let mut step = 1.0;
        let mut f_new;
        let mut accepted = false;
        for _ in 0..40 {
            for i in 0..d {
                x_new[i] = x[i] + step * dir[i];
            }
            f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * step * slope {
                accepted = true;
                let s: Vec<f64> = (0..d).map(|i| x_new[i] - x[i]).collect();
                let yv: Vec<f64> = (0..d).map(|i| g_new[i] - g[i]).collect();
                if dot(&s, &yv) > 1e-12 {
                    if s_hist.len() == M {
                        s_hist.remove(0);
                        y_hist.remove(0);
                    }
                    s_hist.push(s);
                    y_hist.push(yv);
                }
                let done = (fx - f_new).abs() <= reltol * (fx.abs() + reltol);
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut g, &mut g_new);
                fx = f_new;
                if done {
                    return x;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    x
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn row_major(cols: &[Vec<f64>], n: usize) -> Vec<f64> {
    let p = cols.len();
    let mut rows = vec![0.0; n * p];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            rows[i * p + j] = c[i];
        }
    }
    rows
}

pub(crate) fn fit(task: &TrainingTask, hidden: usize, decay: f64, max_iter: usize, seed: u64) -> Result<NetModel> {
    let std = Standardizer::fit(&task.x, &task.w);
    let n = task.n();
    let cols = std.apply(&task.x);
    let p = cols.len();
    if p == 0 {
        return Err(Error::learner("neural_net", "every feature is constant"));
    }
    let rows = row_major(&cols, n);
    let mean_w = task.w.iter().sum::<f64>() / n as f64;
    let w: Vec<f64> = task.w.iter().map(|v| v / mean_w).collect();
    let sigmoid_out = task.family == Family::QuasiBinomial;
    let (y_center, y_scale, y) = if sigmoid_out {
        (0.0, 1.0, task.y.clone())
    } else {
        let (m, s) = weighted_moments(&task.y, &task.w);
        let s = if s > 0.0 { s } else { 1.0 };
        (m, s, task.y.iter().map(|v| (v - m) / s).collect())
    };
    let net = Net {
        p,
        hidden,
        rows: &rows,
        y: &y,
        w: &w,
        sigmoid_out,
        decay,
    };
    let dim = hidden * (p + 1) + hidden + 1;
    let mut rng = seed::rng(seed, &[0x6e6e]);
    let theta0: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.7..0.7)).collect();
    let theta = lbfgs(|t, g| net.loss_grad(t, g), theta0, max_iter, 1e-8);
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::learner("neural_net", "optimizer produced non-finite weights"));
    }
    Ok(NetModel {
        family: task.family,
        std,
        hidden,
        theta,
        y_center,
        y_scale,
    })
}

impl Model for NetModel {
    fn predict(&self, x: &Matrix) -> Vec<f64> {
        let n = x.nrows();
        let cols = self.std.apply(x);
        let p = cols.len();
        let rows = row_major(&cols, n);
        let net = Net {
            p,
            hidden: self.hidden,
            rows: &rows,
            y: &[],
            w: &[],
            sigmoid_out: self.family == Family::QuasiBinomial,
            decay: 0.0,
        };
        let mut z = vec![0.0; self.hidden];
        rows.chunks_exact(p)
            .map(|r| self.y_center + self.y_scale * net.forward(&self.theta, r, &mut z))
            .collect()
    }
}
