//! Plain-text and CSV renderings of estimation output.

use super::fama_macbeth::FmbResult;
use super::panel::RegressionResult;
use super::portfolio::AlphaResult;
use super::rolling::RollingRow;
use super::vardecomp::VarianceDecomposition;

/// Significance marks for a two-sided normal test at 10/5/1%.
pub fn stars(t: f64) -> &'static str {
    let a = t.abs();
    if a >= 2.576 {
        "***"
    } else if a >= 1.960 {
        "**"
    } else if a >= 1.645 {
        "*"
    } else {
        ""
    }
}

fn num(v: f64, places: usize) -> String {
    if v.is_finite() {
        format!("{v:.places$}")
    } else {
        String::new()
    }
}

fn opt(v: Option<f64>, places: usize) -> String {
    v.map_or_else(String::new, |v| num(v, places))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TextTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl TextTable {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: TextTable) {
        self.rows.extend(other.rows);
    }

    /// Left-aligned first column, right-aligned numbers.
    pub fn render_text(&self) -> String {
        let cols = self.header.len();
        let mut width = vec![0; cols];
        for row in std::iter::once(&self.header).chain(&self.rows) {
            for (j, cell) in row.iter().enumerate().take(cols) {
                width[j] = width[j].max(cell.chars().count());
            }
        }
        let line = |row: &[String]| {
            let cells: Vec<String> = (0..cols)
                .map(|j| {
                    let c = row.get(j).map_or("", String::as_str);
                    if j == 0 {
                        format!("{c:<w$}", w = width[j])
                    } else {
                        format!("{c:>w$}", w = width[j])
                    }
                })
                .collect();
            cells.join("  ").trim_end().to_string()
        };
        let mut out = line(&self.header);
        out.push('\n');
        out.push_str(&"-".repeat(width.iter().sum::<usize>() + 2 * cols.saturating_sub(1)));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }
}

/// One row per (model, term) with fit statistics repeated on each row.
pub fn regression_table(models: &[(String, RegressionResult)]) -> TextTable {
    let mut t = TextTable::new(&["model", "outcome", "term", "coef", "se", "t", "sig", "n", "r2", "adj_r2", "fe", "dropped"]);
    for (label, r) in models {
        for (j, term) in r.terms.iter().enumerate() {
            t.push(vec![
                label.clone(),
                r.outcome.clone(),
                term.clone(),
                num(r.coefficients[j], 6),
                num(r.se[j], 6),
                num(r.t[j], 3),
                stars(r.t[j]).to_string(),
                r.n.to_string(),
                num(r.r2, 4),
                num(r.adj_r2, 4),
                r.fixed_effects.clone(),
                r.dropped.join(";"),
            ]);
        }
    }
    t
}

/// Failed specifications listed alongside the estimated ones.
pub fn failure_row(t: &mut TextTable, label: &str, outcome: &str, message: &str) {
    let mut row = vec![label.to_string(), outcome.to_string(), format!("error: {message}")];
    row.resize(t.header.len(), String::new());
    t.push(row);
}

/// Incremental R² rows then the firm-level split, one column per measure.
pub fn decomposition_table(decomps: &[VarianceDecomposition]) -> TextTable {
    let mut header = vec!["component"];
    header.extend(decomps.iter().map(|d| d.measure.as_str()));
    let mut t = TextTable::new(&header);
    let rows: [(&str, fn(&VarianceDecomposition) -> f64); 9] = [
        ("Time FE", |d| d.time),
        ("Industry FE", |d| d.industry),
        ("Time x Industry FE", |d| d.time_x_industry),
        ("Implied Firm Level Variation", |d| d.firm_level),
        ("Sum", |d| d.stage1_sum()),
        ("Firm FE R2", |d| d.firm_fe),
        ("Remaining Variation", |d| d.remaining),
        ("Sum (firm level)", |d| d.stage2_sum()),
        ("N", |d| d.n as f64),
    ];
    for (label, f) in rows {
        let mut row = vec![label.to_string()];
        for d in decomps {
            row.push(if label == "N" { d.n.to_string() } else { format!("{:.2}%", f(d)) });
        }
        t.push(row);
    }
    t
}

pub fn rolling_table(label: &str, rows: &[RollingRow]) -> TextTable {
    let mut t = TextTable::new(&["panel", "start", "end", "term", "coef", "t", "sig", "n", "note"]);
    for r in rows {
        for (j, term) in r.terms.iter().enumerate() {
            t.push(vec![
                label.to_string(),
                r.start.clone(),
                r.end.clone(),
                term.clone(),
                opt(r.coef[j], 6),
                opt(r.t[j], 3),
                r.t[j].map_or("", stars).to_string(),
                r.n.to_string(),
                r.error.clone().unwrap_or_default(),
            ]);
        }
    }
    t
}

pub fn fmb_table(label: &str, res: &FmbResult) -> TextTable {
    let mut t = TextTable::new(&["model", "term", "coef", "nw_se", "t", "sig", "months", "avg_n", "avg_adj_r2"]);
    for (j, term) in res.terms.iter().enumerate() {
        t.push(vec![
            label.to_string(),
            term.clone(),
            num(res.mean[j], 6),
            num(res.se[j], 6),
            num(res.t[j], 3),
            stars(res.t[j]).to_string(),
            res.periods.len().to_string(),
            num(res.avg_n, 1),
            num(res.avg_adj_r2, 4),
        ]);
    }
    t
}

pub fn alpha_table(rows: &[(String, String, AlphaResult)]) -> TextTable {
    let mut t = TextTable::new(&["measure", "portfolio", "alpha", "t", "sig", "annualized", "months", "r2"]);
    for (measure, port, a) in rows {
        t.push(vec![
            measure.clone(),
            port.clone(),
            num(a.alpha, 4),
            num(a.t, 3),
            stars(a.t).to_string(),
            num(a.annualized, 4),
            a.months.to_string(),
            num(a.r2, 4),
        ]);
    }
    t
}
