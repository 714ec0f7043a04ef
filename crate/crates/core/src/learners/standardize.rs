use crate::matrix::Matrix;

/// Weighted centering and scaling of the non-constant columns.
#[derive(Debug, Clone)]
pub(crate) struct Standardizer {
    /// Columns kept; constant ones carry no information and are dropped.
    pub cols: Vec<usize>,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

pub(crate) fn weighted_moments(x: &[f64], w: &[f64]) -> (f64, f64) {
    let sw: f64 = w.iter().sum();
    let m = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let v = x.iter().zip(w).map(|(a, b)| b * (a - m) * (a - m)).sum::<f64>() / sw;
    (m, v.max(0.0).sqrt())
}

impl Standardizer {
    pub fn fit(x: &Matrix, w: &[f64]) -> Self {
        let mut s = Standardizer {
            cols: Vec::new(),
            center: Vec::new(),
            scale: Vec::new(),
        };
        for j in 0..x.ncols() {
            let (m, sd) = weighted_moments(x.column(j), w);
            if sd > 1e-10 * m.abs().max(1.0) {
                s.cols.push(j);
                s.center.push(m);
                s.scale.push(sd);
            }
        }
        s
    }

    pub fn apply(&self, x: &Matrix) -> Vec<Vec<f64>> {
        self.cols
            .iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(&j, (&m, &s))| x.column(j).iter().map(|v| (v - m) / s).collect())
            .collect()
    }
}
