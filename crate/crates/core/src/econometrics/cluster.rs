use nalgebra::DMatrix;

use super::EstimationError;

#[derive(Debug, Clone)]
pub struct ClusterVcov {
    pub vcov: DMatrix<f64>,
    pub se: Vec<f64>,
    pub clusters: usize,
    /// The G/(G−1)·(N−1)/(N−K) factor applied.
    pub correction: f64,
}

/// Cluster-robust (CR1) covariance of least-squares slopes.
///
/// `x` holds the regressors actually estimated (after any absorption),
/// `clusters` dense cluster codes per row, and `dof_absorbed` the number of
/// parameters swept out beforehand. K counts the columns of `x` plus
/// `dof_absorbed`.
pub fn cluster_robust_se(
    x: &DMatrix<f64>,
    residuals: &[f64],
    clusters: &[usize],
    dof_absorbed: usize,
) -> Result<ClusterVcov, EstimationError> {
    let (n, k) = x.shape();
    if residuals.len() != n || clusters.len() != n {
        return Err(EstimationError::Invalid("row count mismatch".into()));
    }
    let g = clusters.iter().max().map_or(0, |m| m + 1);
    let used = {
        let mut seen = vec![false; g];
        clusters.iter().for_each(|&c| seen[c] = true);
        seen.iter().filter(|s| **s).count()
    };
    if used < 2 {
        return Err(EstimationError::Inference(format!("need at least 2 clusters, got {used}")));
    }
    let k_total = k + dof_absorbed;
    if n <= k_total {
        return Err(EstimationError::TooFewRows { rows: n, cols: k_total });
    }

    let bread = (x.transpose() * x)
        .try_inverse()
        .ok_or_else(|| EstimationError::Inference("X'X is singular".into()))?;

    // Per-cluster score sums, one row per cluster.
    let mut scores = DMatrix::<f64>::zeros(g, k);
    for i in 0..n {
        let e = residuals[i];
        for j in 0..k {
            scores[(clusters[i], j)] += x[(i, j)] * e;
        }
    }
    let meat = scores.transpose() * &scores;

    let gf = used as f64;
    let correction = gf / (gf - 1.0) * (n as f64 - 1.0) / (n as f64 - k_total as f64);
    let vcov = &bread * meat * &bread * correction;
    let se = (0..k).map(|j| vcov[(j, j)].max(0.0).sqrt()).collect();
    Ok(ClusterVcov { vcov, se, clusters: used, correction })
}
