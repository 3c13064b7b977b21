use std::collections::BTreeSet;

use super::panel::{panel_regression, PanelDataset, RegressionSpec};
use super::EstimationError;

/// One window's estimates; `coef`/`t` are `None` for terms that could not be
/// estimated, and all are `None` when the window failed outright.
#[derive(Debug, Clone, PartialEq)]
pub struct RollingRow {
    pub start: String,
    pub end: String,
    pub n: usize,
    pub terms: Vec<String>,
    pub coef: Vec<Option<f64>>,
    pub t: Vec<Option<f64>>,
    pub error: Option<String>,
}

/// Re-estimate `spec` over every run of `window` consecutive periods.
pub fn rolling_regression(
    panel: &PanelDataset,
    window: usize,
    spec: &RegressionSpec,
) -> Result<Vec<RollingRow>, EstimationError> {
    let periods: Vec<&String> = panel.periods().iter().collect::<BTreeSet<_>>().into_iter().collect();
    if window == 0 || periods.len() < window {
        return Err(EstimationError::InsufficientData(format!(
            "{} distinct periods, window needs {window}",
            periods.len()
        )));
    }
    let terms = spec.regressors.clone();
    let spans: Vec<&[&String]> = periods.windows(window).collect();
    let fit = |span: &[&String]| {
        let rows: Vec<usize> = (0..panel.len())
            .filter(|&r| span.contains(&&panel.periods()[r]))
            .collect();
        let result = panel_regression(&panel.subset(&rows), spec);
        let (start, end) = (span[0].clone(), span[window - 1].clone());
        match result {
            Ok(res) => RollingRow {
                start,
                end,
                n: res.n,
                coef: terms.iter().map(|t| res.coef(t)).collect(),
                t: terms.iter().map(|t| res.t_of(t)).collect(),
                terms: terms.clone(),
                error: None,
            },
            Err(e) => RollingRow {
                start,
                end,
                n: 0,
                coef: vec![None; terms.len()],
                t: vec![None; terms.len()],
                terms: terms.clone(),
                error: Some(e.to_string()),
            },
        }
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(spans.len());
    let mut out: Vec<Option<RollingRow>> = vec![None; spans.len()];
    std::thread::scope(|s| {
        let chunks: Vec<_> = out.chunks_mut(spans.len().div_ceil(workers)).enumerate().collect();
        let size = spans.len().div_ceil(workers);
        for (c, slot) in chunks {
            let spans = &spans;
            let fit = &fit;
            s.spawn(move || {
                for (k, row) in slot.iter_mut().enumerate() {
                    *row = Some(fit(spans[c * size + k]));
                }
            });
        }
    });
    Ok(out.into_iter().map(|r| r.expect("filled")).collect())
}
