use crate::stats::{expit, logit};

/// Outcome of one weighted-intercept logistic fluctuation.
#[derive(Debug, Clone, PartialEq)]
pub struct Fluctuation {
    pub epsilon: f64,
    pub updated: Vec<f64>,
    /// `false` when every weight was zero and nothing was updated.
    pub targeted: bool,
}

/// Fits `logit(Q*) = logit(Q) + ε` by H-weighted quasi-likelihood.
///
/// The estimating equation `Σ H (target − expit(logit Q + ε)) = 0` is
/// monotone in ε; it is solved by Newton steps safeguarded with bisection.
pub fn fluctuate_step(targets: &[f64], initial: &[f64], h: &[f64]) -> Fluctuation {
    let offset: Vec<f64> = initial.iter().map(|&q| logit(q)).collect();
    let total: f64 = h.iter().sum();
    if !(total > 0.0) {
        return Fluctuation {
            epsilon: 0.0,
            updated: initial.to_vec(),
            targeted: false,
        };
    }
    let score = |eps: f64| -> (f64, f64) {
        let (mut s, mut d) = (0.0, 0.0);
        for i in 0..h.len() {
            if h[i] != 0.0 {
                let p = expit(offset[i] + eps);
                s += h[i] * (targets[i] - p);
                d += h[i] * p * (1.0 - p);
            }
        }
        (s, d)
    };
    let (s0, _) = score(0.0);
    let tol = 1e-14 * total;
    let mut eps = 0.0;
    if s0.abs() > tol {
        // bracket the root: the score decreases in ε
        let dir = s0.signum();
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        let mut step = 1.0;
        loop {
            let probe = dir * step;
            let (s, _) = score(probe);
            if s * dir <= 0.0 || step > 1e3 {
                if dir > 0.0 {
                    hi = probe;
                } else {
                    lo = probe;
                }
                break;
            }
            if dir > 0.0 {
                lo = probe;
            } else {
                hi = probe;
            }
            step *= 2.0;
        }
        eps = 0.5 * (lo + hi);
        for _ in 0..200 {
            let (s, d) = score(eps);
            if s.abs() <= tol {
                break;
            }
            if s > 0.0 {
                lo = eps;
            } else {
                hi = eps;
            }
            let newton = if d > 0.0 { eps + s / d } else { f64::NAN };
            eps = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < 1e-15 * (1.0 + eps.abs()) {
                break;
            }
        }
    }
    let updated = if eps == 0.0 {
        initial.to_vec()
    } else {
        offset.iter().map(|&o| expit(o + eps)).collect()
    };
    Fluctuation {
        epsilon: eps,
        updated,
        targeted: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fit_needs_no_update() {
        let q = [0.2, 0.4, 0.9];
        let f = fluctuate_step(&q, &q, &[1.0, 2.0, 0.5]);
        assert_eq!(f.epsilon, 0.0);
        assert_eq!(f.updated, q.to_vec());
    }

    #[test]
    fn constant_start_moves_to_weighted_mean() {
        let targets = [0.6, 0.8, 0.7, 0.7];
        let f = fluctuate_step(&targets, &[0.5; 4], &[1.0; 4]);
        assert!((f.epsilon - logit(0.7)).abs() < 1e-12);
        assert!(f.updated.iter().all(|v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn weight_scale_does_not_matter() {
        let t = [0.1, 0.5, 0.9, 0.3];
        let q = [0.3, 0.3, 0.6, 0.2];
        let h = [1.0, 0.0, 3.0, 2.0];
        let h2: Vec<f64> = h.iter().map(|v| 2.0 * v).collect();
        let a = fluctuate_step(&t, &q, &h);
        let b = fluctuate_step(&t, &q, &h2);
        assert!((a.epsilon - b.epsilon).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_leave_predictions() {
        let f = fluctuate_step(&[0.1, 0.9], &[0.5, 0.5], &[0.0, 0.0]);
        assert!(!f.targeted);
        assert_eq!(f.updated, vec![0.5, 0.5]);
    }
}
