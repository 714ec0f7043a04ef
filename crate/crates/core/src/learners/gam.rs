use super::glm::fit_penalized;
use super::standardize::weighted_moments;
use super::{Family, Model, TrainingTask};
use crate::error::Result;
use crate::matrix::Matrix;
use crate::stats::{expit, quantile_sorted};

const DEGREE: usize = 3;

/// How one predictor enters the additive model.
#[derive(Debug, Clone)]
enum Smooth {
    /// Too few distinct values for a spline: a standardized linear term.
    Linear { center: f64, scale: f64 },
    /// Cubic B-spline basis on a clamped knot vector; the first basis
    /// function is dropped because the basis sums to one.
    Spline { lo: f64, hi: f64, knots: Vec<f64> },
    Constant,
}

impl Smooth {
    fn width(&self) -> usize {
        match self {
            Smooth::Linear { .. } => 1,
            Smooth::Spline { knots, .. } => knots.len() - DEGREE - 2,
            Smooth::Constant => 0,
        }
    }

    fn columns(&self, x: &[f64]) -> Vec<Vec<f64>> {
        match self {
            Smooth::Constant => Vec::new(),
            Smooth::Linear { center, scale } => vec![x.iter().map(|v| (v - center) / scale).collect()],
            Smooth::Spline { lo, hi, knots } => {
                let nb = knots.len() - DEGREE - 1;
                let mut out = vec![vec![0.0; x.len()]; nb - 1];
                let mut vals = [0.0; DEGREE + 1];
                for (i, &v) in x.iter().enumerate() {
                    let v = v.clamp(*lo, *hi);
                    let span = find_span(knots, nb, v);
                    basis_funs(knots, span, v, &mut vals);
                    for (r, &b) in vals.iter().enumerate() {
                        let j = span - DEGREE + r;
                        if j >= 1 {
                            out[j - 1][i] = b;
                        }
                    }
                }
                out
            }
        }
    }
}

fn find_span(knots: &[f64], nb: usize, x: f64) -> usize {
    if x >= knots[nb] {
        return nb - 1;
    }
    let mut s = DEGREE;
    while s + 1 < nb && knots[s + 1] <= x {
        s += 1;
    }
    s
}

/// Nonzero cubic B-spline values at `x` in knot span `span`.
fn basis_funs(knots: &[f64], span: usize, x: f64, n: &mut [f64; DEGREE + 1]) {
    let mut left = [0.0; DEGREE + 1];
    let mut right = [0.0; DEGREE + 1];
    n[0] = 1.0;
    for j in 1..=DEGREE {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let den = right[r + 1] + left[j - r];
            let tmp = if den > 0.0 { n[r] / den } else { 0.0 };
            n[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        n[j] = saved;
    }
}

/// Penalized additive spline model.
#[derive(Debug)]
pub(crate) struct GamModel {
    family: Family,
    smooths: Vec<Smooth>,
    beta: Vec<f64>,
}

impl GamModel {
    fn design(&self, x: &Matrix) -> Vec<Vec<f64>> {
        self.smooths
            .iter()
            .enumerate()
            .flat_map(|(j, s)| s.columns(x.column(j)))
            .collect()
    }
}

pub(crate) fn fit(task: &TrainingTask, n_knots: usize, penalty: f64) -> Result<GamModel> {
    let smooths: Vec<Smooth> = (0..task.p())
        .map(|j| {
            let col = task.x.column(j);
            let mut s = col.to_vec();
            s.sort_by(|a, b| a.total_cmp(b));
            let mut distinct = s.clone();
            distinct.dedup();
            if distinct.len() < 2 {
                return Smooth::Constant;
            }
            if distinct.len() <= n_knots + 1 {
                let (center, scale) = weighted_moments(col, &task.w);
                return Smooth::Linear { center, scale };
            }
            let (lo, hi) = (s[0], s[s.len() - 1]);
            let mut knots = vec![lo; DEGREE + 1];
            for k in 1..=n_knots {
                let q = quantile_sorted(&s, k as f64 / (n_knots + 1) as f64);
                if q > *knots.last().unwrap() && q < hi {
                    knots.push(q);
                }
            }
            knots.extend([hi; DEGREE + 1]);
            Smooth::Spline { lo, hi, knots }
        })
        .collect();
    let mut model = GamModel {
        family: task.family,
        smooths,
        beta: Vec::new(),
    };
    let cols = model.design(&task.x);
    let width: usize = model.smooths.iter().map(Smooth::width).sum();
    debug_assert_eq!(width, cols.len());
    model.beta = fit_penalized(&cols, &task.y, &task.w, task.family, &vec![penalty; cols.len()], "gam_spline")?;
    Ok(model)
}

impl Model for GamModel {
    fn predict(&self, x: &Matrix) -> Vec<f64> {
        let mut eta = vec![self.beta[0]; x.nrows()];
        for (c, b) in self.design(x).iter().zip(&self.beta[1..]) {
            for (e, v) in eta.iter_mut().zip(c) {
                *e += b * v;
            }
        }
        match self.family {
            Family::Gaussian => eta,
            Family::QuasiBinomial => eta.into_iter().map(expit).collect(),
        }
    }
}
