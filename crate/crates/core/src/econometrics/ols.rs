//! Least squares through a Householder QR that visits columns in their
//! given order and rejects any column lying (numerically) in the span of
//! the columns already accepted. The set of dropped columns therefore
//! depends only on column order, never on magnitudes elsewhere.

use nalgebra::{DMatrix, DVector};

use super::EstimationError;

/// Relative size below which a column's residual norm counts as collinear.
pub const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct OlsFit {
    /// Indices (into the input columns) that were estimated.
    pub kept: Vec<usize>,
    /// Indices dropped as collinear, in input order.
    pub dropped: Vec<usize>,
    /// One coefficient per kept column.
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
    /// Inverse of X'X over the kept columns.
    pub xtx_inv: DMatrix<f64>,
}

impl OlsFit {
    pub fn rss(&self) -> f64 {
        self.residuals.iter().map(|e| e * e).sum()
    }

    /// Coefficient for input column `j`, `None` if it was dropped.
    pub fn coef(&self, j: usize) -> Option<f64> {
        self.kept.iter().position(|&k| k == j).map(|p| self.coefficients[p])
    }
}

/// Regress `y` on the columns of `x` (include an intercept column yourself).
pub fn ols(y: &[f64], x: &DMatrix<f64>) -> Result<OlsFit, EstimationError> {
    let n = x.nrows();
    let p = x.ncols();
    if n == 0 || y.len() != n {
        return Err(EstimationError::NoUsableRows);
    }

    let mut a = x.clone();
    let mut qty = DVector::from_column_slice(y);
    let col_norms: Vec<f64> = (0..p).map(|j| x.column(j).norm()).collect();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut k = 0; // rows of R filled

    for j in 0..p {
        if k == n {
            dropped.push(j);
            continue;
        }
        let tail_norm = a.view((k, j), (n - k, 1)).norm();
        if col_norms[j] == 0.0 || tail_norm <= RANK_TOL * col_norms[j] {
            dropped.push(j);
            continue;
        }
        // Householder vector v with (I - 2vv'/v'v) tail = -sign(a_kj)·|tail|·e1
        let alpha = if a[(k, j)] >= 0.0 { -tail_norm } else { tail_norm };
        let mut v = a.view((k, j), (n - k, 1)).clone_owned();
        v[0] -= alpha;
        let vtv = v.norm_squared();
        if vtv > 0.0 {
            for jj in j..p {
                let s = 2.0 * (0..n - k).map(|i| v[i] * a[(k + i, jj)]).sum::<f64>() / vtv;
                for i in 0..n - k {
                    a[(k + i, jj)] -= s * v[i];
                }
            }
            let s = 2.0 * (0..n - k).map(|i| v[i] * qty[k + i]).sum::<f64>() / vtv;
            for i in 0..n - k {
                qty[k + i] -= s * v[i];
            }
        }
        kept.push(j);
        k += 1;
    }

    if kept.is_empty() {
        return Err(EstimationError::TooFewRows { rows: n, cols: p });
    }

    let r = DMatrix::from_fn(k, k, |row, c| if row <= c { a[(row, kept[c])] } else { 0.0 });
    let rhs = qty.rows(0, k).clone_owned();
    let beta = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| EstimationError::Invalid("singular triangular factor".into()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| EstimationError::Invalid("singular triangular factor".into()))?;
    let xtx_inv = &r_inv * r_inv.transpose();

    let mut fitted = vec![0.0; n];
    for (c, &j) in kept.iter().enumerate() {
        for (i, f) in fitted.iter_mut().enumerate() {
            *f += x[(i, j)] * beta[c];
        }
    }
    let residuals = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();

    Ok(OlsFit { kept, dropped, coefficients: beta.iter().copied().collect(), residuals, fitted, xtx_inv })
}

/// Columns as a matrix, optionally led by a column of ones.
pub fn design(columns: &[&[f64]], intercept: bool) -> DMatrix<f64> {
    let n = columns.first().map_or(0, |c| c.len());
    let offset = usize::from(intercept);
    DMatrix::from_fn(n, columns.len() + offset, |i, j| {
        if intercept && j == 0 {
            1.0
        } else {
            columns[j - offset][i]
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let fit = ols(&y, &design(&[&xs], true)).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|e| e.abs() < 1e-12));
    }

    #[test]
    fn duplicate_regressor_dropped() {
        let x1 = [1.0, 2.0, 4.0, 3.0, 7.0];
        let x2 = [0.5, -1.0, 2.0, 0.0, 1.0];
        let y = [1.0, 2.0, 3.0, 2.5, 9.0];
        let fit = ols(&y, &design(&[&x1, &x2, &x1], true)).unwrap();
        assert_eq!(fit.kept, vec![0, 1, 2]);
        assert_eq!(fit.dropped, vec![3]);
        assert_eq!(fit.coef(3), None);
    }

    #[test]
    fn matches_normal_equations() {
        // 5-point fixture, independent solve of (X'X) b = X'y via LU
        let x1 = [1.0, 2.0, 3.0, 4.0, 5.0];
        let x2 = [2.0, -1.0, 0.5, 3.0, 1.0];
        let y = [3.1, 2.2, 4.9, 9.7, 8.3];
        let x = design(&[&x1, &x2], true);
        let fit = ols(&y, &x).unwrap();
        let xtx = x.transpose() * &x;
        let xty = x.transpose() * DVector::from_column_slice(&y);
        let oracle = xtx.clone().lu().solve(&xty).unwrap();
        for (a, b) in fit.coefficients.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        let inv = xtx.try_inverse().unwrap();
        assert!((&fit.xtx_inv - inv).abs().max() < 1e-10);
    }

    #[test]
    fn no_rows_is_error() {
        assert_eq!(ols(&[], &DMatrix::zeros(0, 2)).unwrap_err(), EstimationError::NoUsableRows);
    }
}
