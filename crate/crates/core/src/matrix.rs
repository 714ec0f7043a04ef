/// Dense column-major matrix of predictors.
///
/// Learners mostly scan whole columns (sorting for tree splits, coordinate
/// descent, screening), so columns are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Matrix {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    /// Builds a matrix from equally long columns.
    ///
    /// Panics if the columns differ in length.
    pub fn from_columns(nrows: usize, columns: &[Vec<f64>]) -> Self {
        let mut data = Vec::with_capacity(nrows * columns.len());
        for c in columns {
            assert_eq!(c.len(), nrows, "column length mismatch");
            data.extend_from_slice(c);
        }
        Matrix {
            nrows,
            ncols: columns.len(),
            data,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut m = Matrix::zeros(nrows, ncols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), ncols, "row length mismatch");
            for (j, &v) in r.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    #[inline]
    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.nrows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.nrows + i] = v;
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.ncols).map(|j| self.get(i, j)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.ncols);
        for j in 0..self.ncols {
            let col = self.column(j);
            data.extend(rows.iter().map(|&i| col[i]));
        }
        Matrix {
            nrows: rows.len(),
            ncols: self.ncols,
            data,
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.nrows * cols.len());
        for &j in cols {
            data.extend_from_slice(self.column(j));
        }
        Matrix {
            nrows: self.nrows,
            ncols: cols.len(),
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_and_column_views_agree() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        assert_eq!(m.column(1), &[2.0, 4.0, 6.0]);
        assert_eq!(m.row(2), vec![5.0, 6.0]);
        let s = m.select_rows(&[2, 0]).select_columns(&[1]);
        assert_eq!(s.column(0), &[6.0, 2.0]);
    }
}
