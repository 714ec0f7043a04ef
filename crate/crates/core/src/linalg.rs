//! Dense symmetric solves used by the regression learners.

use crate::matrix::Matrix;

/// Solution of a symmetric positive semi-definite system.
#[derive(Debug, Clone)]
pub struct SpdSolution {
    pub x: Vec<f64>,
    /// Columns found linearly dependent on earlier ones; their coefficients are zero.
    pub dropped: Vec<usize>,
}

/// Solves `a x = b` for symmetric PSD `a` (column-major, n × n) by Cholesky.
///
/// Columns whose pivot falls below `rel_tol` times their original diagonal
/// are treated as aliased with earlier columns and fixed at zero, the way
/// rank-deficient designs are handled by classic GLM software.
pub fn solve_spd(a: &[f64], b: &[f64], n: usize, rel_tol: f64) -> SpdSolution {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    let mut active = vec![true; n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            if active[k] {
                d -= l[j * n + k] * l[j * n + k];
            }
        }
        let orig = a[j * n + j].abs();
        if !(d > rel_tol * orig.max(f64::MIN_POSITIVE)) || !d.is_finite() {
            active[j] = false;
            continue;
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in (j + 1)..n {
            let mut s = a[j * n + i];
            for k in 0..j {
                if active[k] {
                    s -= l[i * n + k] * l[j * n + k];
                }
            }
            l[i * n + j] = s / djj;
        }
    }
    // l[i * n + k] holds L(i, k) for k ≤ i.
    let mut z = vec![0.0; n];
    for i in 0..n {
        if !active[i] {
            continue;
        }
        let mut s = b[i];
        for k in 0..i {
            if active[k] {
                s -= l[i * n + k] * z[k];
            }
        }
        z[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        if !active[i] {
            continue;
        }
        let mut s = z[i];
        for k in (i + 1)..n {
            if active[k] {
                s -= l[k * n + i] * x[k];
            }
        }
        x[i] = s / l[i * n + i];
    }
    let dropped = (0..n).filter(|&j| !active[j]).collect();
    SpdSolution { x, dropped }
}

/// Normal equations of a weighted regression with optional intercept column.
///
/// Returns the Gram matrix `DᵀWD` and `DᵀWy`, where `D` is `[1, X]` when
/// `intercept` is set.
pub fn weighted_gram(x: &Matrix, y: &[f64], w: &[f64], intercept: bool) -> (Vec<f64>, Vec<f64>, usize) {
    let off = usize::from(intercept);
    let p = x.ncols() + off;
    let n = x.nrows();
    let mut g = vec![0.0; p * p];
    let mut r = vec![0.0; p];
    let mut wx: Vec<f64> = vec![0.0; n];
    if intercept {
        g[0] = w.iter().sum();
        r[0] = w.iter().zip(y).map(|(a, b)| a * b).sum();
    }
    for j in 0..x.ncols() {
        let cj = x.column(j);
        for i in 0..n {
            wx[i] = w[i] * cj[i];
        }
        let jj = j + off;
        r[jj] = wx.iter().zip(y).map(|(a, b)| a * b).sum();
        if intercept {
            let s: f64 = wx.iter().sum();
            g[jj] = s;
            g[jj * p] = s;
        }
        for k in 0..=j {
            let ck = x.column(k);
            let s: f64 = wx.iter().zip(ck).map(|(a, b)| a * b).sum();
            let kk = k + off;
            g[kk * p + jj] = s;
            g[jj * p + kk] = s;
        }
    }
    (g, r, p)
}

/// Solves a general square system (row-major) by Gaussian elimination with
/// partial pivoting; `None` when the matrix is numerically singular.
pub fn solve_dense(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[i * n + c].abs().total_cmp(&m[j * n + c].abs()))?;
        if m[piv * n + c].abs() <= 1e-14 * scale {
            return None;
        }
        if piv != c {
            for k in 0..n {
                m.swap(c * n + k, piv * n + k);
            }
            x.swap(c, piv);
        }
        for r in (c + 1)..n {
            let f = m[r * n + c] / m[c * n + c];
            if f != 0.0 {
                for k in c..n {
                    m[r * n + k] -= f * m[c * n + k];
                }
                x[r] -= f * x[c];
            }
        }
    }
    for c in (0..n).rev() {
        let mut s = x[c];
        for k in (c + 1)..n {
            s -= m[c * n + k] * x[k];
        }
        x[c] = s / m[c * n + c];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_well_conditioned_system() {
        // [[4, 2], [2, 3]] x = [2, 1] -> x = [0.5, 0]
        let sol = solve_spd(&[4.0, 2.0, 2.0, 3.0], &[2.0, 1.0], 2, 1e-10);
        assert!((sol.x[0] - 0.5).abs() < 1e-12);
        assert!(sol.x[1].abs() < 1e-12);
        assert!(sol.dropped.is_empty());
    }

    #[test]
    fn aliased_column_is_dropped() {
        // second column duplicates the first
        let x = Matrix::from_columns(3, &[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]);
        let y = [2.0, 4.0, 6.0];
        let (g, r, p) = weighted_gram(&x, &y, &[1.0; 3], false);
        let sol = solve_spd(&g, &r, p, 1e-9);
        assert_eq!(sol.dropped, vec![1]);
        assert!((sol.x[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn dense_solve_pivots() {
        let x = solve_dense(&[0.0, 1.0, 2.0, 0.0], &[3.0, 4.0], 2).unwrap();
        assert_eq!(x, vec![2.0, 3.0]);
        assert!(solve_dense(&[1.0, 2.0, 2.0, 4.0], &[1.0, 1.0], 2).is_none());
    }
}
