#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use riskscope::pipeline::PipelineConfig;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("synthetic")
}

pub fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

/// The bundled fixture config, writing into `out`.
pub fn fixture_config(out: &Path, extra: &[&str]) -> PipelineConfig {
    let mut overrides = vec![format!("output_dir={}", toml_string(&out.display().to_string()))];
    overrides.extend(extra.iter().map(|s| s.to_string()));
    PipelineConfig::load(&fixture_dir().join("config.toml"), &overrides).expect("fixture config loads")
}

/// Every file under `root`, keyed by its relative path.
pub fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

pub fn words(s: &str) -> usize {
    s.split_whitespace().count()
}

/// ceil(4w/3) summed over newline-separated lines.
pub fn line_tokens(text: &str) -> usize {
    text.split('\n').map(|l| (4 * words(l)).div_ceil(3)).sum()
}

/// Least squares by SVD; minimum-norm when rank deficient.
pub fn svd_ols(x: &DMatrix<f64>, y: &[f64]) -> DVector<f64> {
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    svd.solve(&DVector::from_column_slice(y), 1e-10 * smax).expect("svd solve")
}

pub fn lu_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().lu().try_inverse().expect("invertible")
}

/// Sandwich with per-cluster score outer products, assembled cluster by cluster.
pub fn brute_cluster_vcov(x: &DMatrix<f64>, e: &[f64], clusters: &[usize], k_total: usize) -> DMatrix<f64> {
    let (n, k) = x.shape();
    let bread = lu_inverse(&(x.transpose() * x));
    let mut ids: Vec<usize> = clusters.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for &g in &ids {
        let mut s = DVector::<f64>::zeros(k);
        for i in (0..n).filter(|&i| clusters[i] == g) {
            s += x.row(i).transpose() * e[i];
        }
        meat += &s * s.transpose();
    }
    let gf = ids.len() as f64;
    let c = gf / (gf - 1.0) * (n as f64 - 1.0) / (n as f64 - k_total as f64);
    &bread * meat * &bread * c
}

/// Heteroskedasticity-robust sandwich with the n/(n−k) correction.
pub fn hc1_vcov(x: &DMatrix<f64>, e: &[f64], k_total: usize) -> DMatrix<f64> {
    let (n, k) = x.shape();
    let bread = lu_inverse(&(x.transpose() * x));
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for i in 0..n {
        let xi = x.row(i).transpose();
        meat += &xi * xi.transpose() * (e[i] * e[i]);
    }
    &bread * meat * &bread * (n as f64 / (n as f64 - k_total as f64))
}

/// Long-run variance of the mean as a double sum with Bartlett weights,
/// scaled by T/(T−1).
pub fn bartlett_se(series: &[f64], lag: usize) -> f64 {
    let t = series.len();
    let tf = t as f64;
    let mean = series.iter().sum::<f64>() / tf;
    let mut s = 0.0;
    for a in 0..t {
        for b in 0..t {
            let d = a.abs_diff(b);
            if d <= lag {
                let w = 1.0 - d as f64 / (lag as f64 + 1.0);
                s += w * (series[a] - mean) * (series[b] - mean);
            }
        }
    }
    (s / tf / tf * tf / (tf - 1.0)).sqrt()
}
