//! Within-transformation by alternating projections.
//!
//! Each sweep subtracts group means for every factor in turn; sweeps repeat
//! until no value moves by more than the tolerance. With one factor the
//! first sweep is already exact.

use std::collections::BTreeMap;

use super::EstimationError;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// A categorical variable encoded as dense level codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factor {
    pub name: String,
    pub codes: Vec<usize>,
    pub levels: usize,
}

impl Factor {
    /// Codes are assigned in sorted label order.
    pub fn from_labels<T: Ord + Clone>(name: impl Into<String>, labels: &[T]) -> Self {
        let mut index: BTreeMap<T, usize> = labels.iter().map(|l| (l.clone(), 0)).collect();
        for (i, v) in index.values_mut().enumerate() {
            *v = i;
        }
        let codes = labels.iter().map(|l| index[l]).collect();
        Self { name: name.into(), codes, levels: index.len() }
    }

    /// Observed cells of the cross of several factors.
    pub fn interact(name: impl Into<String>, parts: &[&Factor]) -> Self {
        let n = parts.first().map_or(0, |f| f.codes.len());
        let keys: Vec<Vec<usize>> = (0..n).map(|i| parts.iter().map(|f| f.codes[i]).collect()).collect();
        Self::from_labels(name, &keys)
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        let codes: Vec<usize> = rows.iter().map(|&r| self.codes[r]).collect();
        Self::from_labels(self.name.clone(), &codes)
    }
}

#[derive(Debug, Clone)]
pub struct Absorbed {
    pub columns: Vec<Vec<f64>>,
    /// Largest number of sweeps any column needed.
    pub iterations: usize,
    /// Parameters absorbed: one grand intercept plus levels − 1 per factor.
    pub dof: usize,
}

/// Degrees of freedom consumed by the factors (grand intercept included).
pub fn absorbed_dof(factors: &[Factor]) -> usize {
    if factors.is_empty() {
        return 0;
    }
    1 + factors.iter().map(|f| f.levels.saturating_sub(1)).sum::<usize>()
}

fn sweep(x: &mut [f64], factor: &Factor, sums: &mut [f64], counts: &[f64]) -> f64 {
    sums.iter_mut().for_each(|s| *s = 0.0);
    for (v, &g) in x.iter().zip(&factor.codes) {
        sums[g] += v;
    }
    for (s, c) in sums.iter_mut().zip(counts) {
        *s /= c;
    }
    let mut max_change: f64 = 0.0;
    for (v, &g) in x.iter_mut().zip(&factor.codes) {
        *v -= sums[g];
        max_change = max_change.max(sums[g].abs());
    }
    max_change
}

/// Demean every column with respect to all factors jointly.
pub fn absorb_fixed_effects(
    columns: &[Vec<f64>],
    factors: &[Factor],
    tol: f64,
    max_iter: usize,
) -> Result<Absorbed, EstimationError> {
    let n = columns.first().map_or(0, Vec::len);
    for f in factors {
        if f.len() != n {
            return Err(EstimationError::Invalid(format!("factor {} has {} rows, expected {n}", f.name, f.len())));
        }
        if n > 0 && f.levels == 0 {
            return Err(EstimationError::Invalid(format!("factor {} has no levels", f.name)));
        }
    }
    let counts: Vec<Vec<f64>> = factors
        .iter()
        .map(|f| {
            let mut c = vec![0.0; f.levels];
            for &g in &f.codes {
                c[g] += 1.0;
            }
            c
        })
        .collect();
    let mut scratch: Vec<Vec<f64>> = factors.iter().map(|f| vec![0.0; f.levels]).collect();

    let mut out = Vec::with_capacity(columns.len());
    let mut iterations = 0;
    for col in columns {
        let mut x = col.clone();
        let mut iter = 0;
        if !factors.is_empty() {
            loop {
                iter += 1;
                let mut delta: f64 = 0.0;
                for (k, f) in factors.iter().enumerate() {
                    delta = delta.max(sweep(&mut x, f, &mut scratch[k], &counts[k]));
                }
                if factors.len() == 1 || delta < tol {
                    break;
                }
                if iter >= max_iter {
                    return Err(EstimationError::Convergence { iterations: iter, last_delta: delta });
                }
            }
        }
        iterations = iterations.max(iter);
        out.push(x);
    }
    Ok(Absorbed { columns: out, iterations, dof: absorbed_dof(factors) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_factor_is_group_demeaning() {
        let f = Factor::from_labels("g", &["a", "b", "a", "b", "c"]);
        let x = vec![1.0, 10.0, 3.0, 20.0, 5.0];
        let a = absorb_fixed_effects(&[x], &[f], DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(a.columns[0], vec![-1.0, -5.0, 1.0, 5.0, 0.0]);
        assert_eq!(a.iterations, 1);
        assert_eq!(a.dof, 3);
    }

    #[test]
    fn one_level_factor_is_global_demeaning() {
        let f = Factor::from_labels("all", &[0; 4]);
        let a = absorb_fixed_effects(&[vec![1.0, 2.0, 3.0, 6.0]], &[f], DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(a.columns[0], vec![-2.0, -1.0, 0.0, 3.0]);
        assert_eq!(a.dof, 1);
    }

    #[test]
    fn two_factor_additive_column_vanishes() {
        let t = Factor::from_labels("t", &[0, 1, 2, 0, 1, 2, 0, 1]);
        let s = Factor::from_labels("s", &[0, 0, 0, 1, 1, 1, 2, 2]);
        let x: Vec<f64> = (0..8).map(|i| [1.0, 4.0, -2.0][t.codes[i]] + [10.0, 0.5, 3.0][s.codes[i]]).collect();
        let a = absorb_fixed_effects(&[x], &[t, s], 1e-13, DEFAULT_MAX_ITER).unwrap();
        assert!(a.columns[0].iter().all(|v| v.abs() < 1e-10));
        assert_eq!(a.dof, 1 + 2 + 2);
    }

    #[test]
    fn cap_reports_convergence_error() {
        let t = Factor::from_labels("t", &[0, 1, 2, 0, 1, 2, 0, 1]);
        let s = Factor::from_labels("s", &[0, 0, 0, 1, 1, 1, 2, 2]);
        let x = vec![1.0, 3.0, 2.0, 5.0, 4.0, 8.0, 7.0, 6.0];
        match absorb_fixed_effects(&[x], &[t, s], 0.0, 3) {
            Err(EstimationError::Convergence { iterations: 3, last_delta }) => assert!(last_delta > 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn interaction_codes_observed_cells() {
        let t = Factor::from_labels("t", &[0, 0, 1, 1, 1]);
        let s = Factor::from_labels("s", &["x", "y", "x", "x", "y"]);
        let ts = Factor::interact("t#s", &[&t, &s]);
        assert_eq!(ts.levels, 4);
        assert_eq!(ts.codes[2], ts.codes[3]);
    }
}
