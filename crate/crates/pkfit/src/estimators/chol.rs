use ndarray::Array2;

/// Relative pivot floor below which a column is treated as linearly
/// dependent on the columns already in the factor.
const DEPENDENCE_TOL: f64 = 1e-13;

/// Growable Cholesky factor of a symmetric positive-definite matrix, built
/// one column at a time. Used by the active-set solver, where the passive
/// set grows and shrinks incrementally.
#[derive(Debug, Default)]
pub(crate) struct GrowableCholesky {
    rows: Vec<Vec<f64>>,
}

impl GrowableCholesky {
    pub fn new() -> Self {
        Self { rows: Vec::new() }
    }

    #[cfg(test)]
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    /// Appends one row/column given its cross terms against the existing
    /// columns and its diagonal entry. Returns `false` (leaving the factor
    /// unchanged) when the new column is numerically dependent.
    pub fn try_push(&mut self, cross: &[f64], diag: f64) -> bool {
        debug_assert_eq!(cross.len(), self.rows.len());
        let k = self.rows.len();
        let mut v = vec![0.0; k];
        for i in 0..k {
            let mut s = cross[i];
            for j in 0..i {
                s -= self.rows[i][j] * v[j];
            }
            v[i] = s / self.rows[i][i];
        }
        let d2 = diag - v.iter().map(|x| x * x).sum::<f64>();
        if !(d2 > DEPENDENCE_TOL * diag.max(f64::MIN_POSITIVE)) {
            return false;
        }
        v.push(d2.sqrt());
        self.rows.push(v);
        true
    }

    pub fn pop(&mut self) {
        self.rows.pop();
    }

    /// Solves `L Lᵀ x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.rows.len();
        debug_assert_eq!(b.len(), n);
        for i in 0..n {
            let mut s = b[i];
            for j in 0..i {
                s -= self.rows[i][j] * b[j];
            }
            b[i] = s / self.rows[i][i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in (i + 1)..n {
                s -= self.rows[j][i] * b[j];
            }
            b[i] = s / self.rows[i][i];
        }
    }
}

/// In-place lower Cholesky factorization of a dense symmetric matrix.
/// Returns `false` when the matrix is not (numerically) positive definite.
pub(crate) fn cholesky_in_place(a: &mut Array2<f64>) -> bool {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    for k in 0..n {
        for j in 0..k {
            let mut s = a[[k, j]];
            for i in 0..j {
                s -= a[[k, i]] * a[[j, i]];
            }
            a[[k, j]] = s / a[[j, j]];
        }
        let mut d = a[[k, k]];
        for i in 0..k {
            d -= a[[k, i]] * a[[k, i]];
        }
        if !(d > 0.0) {
            return false;
        }
        a[[k, k]] = d.sqrt();
    }
    true
}

/// Solves `L Lᵀ x = b` for a factor produced by [`cholesky_in_place`].
pub(crate) fn cholesky_solve(l: &Array2<f64>, b: &mut [f64]) {
    let n = l.nrows();
    debug_assert_eq!(b.len(), n);
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= l[[i, j]] * b[j];
        }
        b[i] = s / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in (i + 1)..n {
            s -= l[[j, i]] * b[j];
        }
        b[i] = s / l[[i, i]];
    }
}
