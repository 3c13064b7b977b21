//! Word-ratio exposure measures and the descriptive text statistics built
//! on them.
//!
//! A call's exposure to a risk is the number of words the model wrote about
//! that risk, pooled over the call's chunks, divided by the number of words
//! in the chunks it was shown.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io;

use serde::{Deserialize, Serialize};

use crate::econometrics::quantile::quantile_sorted;
use crate::llm::{is_na, measure_name, Mode, RiskDocument, RiskType};
use crate::quarter::Quarter;
use crate::transcript::Chunk;

#[derive(Debug, thiserror::Error)]
pub enum ExposureError {
    #[error("empty transcript: denominator has zero words for call {0}")]
    EmptyTranscript(String),
    #[error("empty document")]
    EmptyDocument,
    #[error("need at least 2 records, got {0}")]
    TooFewRecords(usize),
    #[error("column {0} is missing or has missing values")]
    MissingColumn(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("row {row}: {reason}")]
    BadRow { row: usize, reason: String },
}

/// Maximal whitespace-delimited substrings.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptLength {
    pub call_id: String,
    pub denominator_words: usize,
}

impl TranscriptLength {
    /// Words over the chunks that were actually sent to the model.
    pub fn from_chunks(call_id: impl Into<String>, chunks: &[Chunk]) -> Self {
        Self { call_id: call_id.into(), denominator_words: chunks.iter().map(|c| word_count(&c.text)).sum() }
    }
}

pub fn compute_exposure(doc: &RiskDocument, len: &TranscriptLength) -> Result<f64, ExposureError> {
    if len.denominator_words == 0 {
        return Err(ExposureError::EmptyTranscript(len.call_id.clone()));
    }
    let words: usize = doc.chunk_outputs.iter().filter(|o| !is_na(o)).map(|o| word_count(o)).sum();
    Ok(words as f64 / len.denominator_words as f64)
}

pub const GPT_MEASURES: [&str; 6] =
    ["PRiskSum", "PRiskAssess", "CRiskSum", "CRiskAssess", "AIRiskSum", "AIRiskAssess"];
pub const BIGRAM_MEASURES: [&str; 2] = ["PRiskBigram", "CRiskBigram"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureRecord {
    pub firm_id: String,
    pub fiscal_quarter: Quarter,
    #[serde(rename = "PRiskSum")]
    pub p_risk_sum: f64,
    #[serde(rename = "PRiskAssess")]
    pub p_risk_assess: f64,
    #[serde(rename = "CRiskSum")]
    pub c_risk_sum: f64,
    #[serde(rename = "CRiskAssess")]
    pub c_risk_assess: f64,
    #[serde(rename = "AIRiskSum")]
    pub ai_risk_sum: f64,
    #[serde(rename = "AIRiskAssess")]
    pub ai_risk_assess: f64,
    #[serde(rename = "PRiskBigram", default, skip_serializing_if = "Option::is_none")]
    pub p_risk_bigram: Option<f64>,
    #[serde(rename = "CRiskBigram", default, skip_serializing_if = "Option::is_none")]
    pub c_risk_bigram: Option<f64>,
}

impl ExposureRecord {
    pub fn zero(firm_id: impl Into<String>, fiscal_quarter: Quarter) -> Self {
        Self {
            firm_id: firm_id.into(),
            fiscal_quarter,
            p_risk_sum: 0.0,
            p_risk_assess: 0.0,
            c_risk_sum: 0.0,
            c_risk_assess: 0.0,
            ai_risk_sum: 0.0,
            ai_risk_assess: 0.0,
            p_risk_bigram: None,
            c_risk_bigram: None,
        }
    }

    /// Build a record from one call's six documents. Each measure comes from
    /// its own document; a missing document leaves that measure at zero.
    pub fn from_documents(
        firm_id: impl Into<String>,
        fiscal_quarter: Quarter,
        len: &TranscriptLength,
        docs: &[RiskDocument],
    ) -> Result<Self, ExposureError> {
        let mut rec = Self::zero(firm_id, fiscal_quarter);
        for doc in docs {
            *rec.measure_mut(doc.risk_type, doc.mode) = compute_exposure(doc, len)?;
        }
        Ok(rec)
    }

    pub fn measure(&self, risk: RiskType, mode: Mode) -> f64 {
        match (risk, mode) {
            (RiskType::Political, Mode::Summary) => self.p_risk_sum,
            (RiskType::Political, Mode::Assessment) => self.p_risk_assess,
            (RiskType::Climate, Mode::Summary) => self.c_risk_sum,
            (RiskType::Climate, Mode::Assessment) => self.c_risk_assess,
            (RiskType::Ai, Mode::Summary) => self.ai_risk_sum,
            (RiskType::Ai, Mode::Assessment) => self.ai_risk_assess,
        }
    }

    pub fn measure_mut(&mut self, risk: RiskType, mode: Mode) -> &mut f64 {
        match (risk, mode) {
            (RiskType::Political, Mode::Summary) => &mut self.p_risk_sum,
            (RiskType::Political, Mode::Assessment) => &mut self.p_risk_assess,
            (RiskType::Climate, Mode::Summary) => &mut self.c_risk_sum,
            (RiskType::Climate, Mode::Assessment) => &mut self.c_risk_assess,
            (RiskType::Ai, Mode::Summary) => &mut self.ai_risk_sum,
            (RiskType::Ai, Mode::Assessment) => &mut self.ai_risk_assess,
        }
    }

    /// Value of a named column; `Ok(None)` for an absent benchmark.
    pub fn get(&self, column: &str) -> Result<Option<f64>, ExposureError> {
        for r in RiskType::ALL {
            for m in Mode::ALL {
                if measure_name(r, m) == column {
                    return Ok(Some(self.measure(r, m)));
                }
            }
        }
        match column {
            "PRiskBigram" => Ok(self.p_risk_bigram),
            "CRiskBigram" => Ok(self.c_risk_bigram),
            _ => Err(ExposureError::UnknownColumn(column.to_string())),
        }
    }
}

/// Pull a complete column out of the records, failing on any gap.
pub fn column(records: &[ExposureRecord], name: &str) -> Result<Vec<f64>, ExposureError> {
    records
        .iter()
        .map(|r| r.get(name)?.filter(|v| !v.is_nan()).ok_or_else(|| ExposureError::MissingColumn(name.to_string())))
        .collect()
}

/// Format with six significant digits.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    if (-5..=9).contains(&magnitude) {
        let decimals = (5 - magnitude).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.5e}")
    }
}

/// Write the exposure CSV. Benchmark columns are included when any record
/// carries them.
pub fn write_exposures_csv<W: io::Write>(w: W, records: &[ExposureRecord]) -> Result<(), ExposureError> {
    let with_bigrams = records.iter().any(|r| r.p_risk_bigram.is_some() || r.c_risk_bigram.is_some());
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["firm_id", "fiscal_quarter"];
    header.extend(GPT_MEASURES);
    if with_bigrams {
        header.extend(BIGRAM_MEASURES);
    }
    out.write_record(&header)?;
    for r in records {
        let mut row = vec![r.firm_id.clone(), r.fiscal_quarter.to_string()];
        for m in GPT_MEASURES {
            row.push(fmt_sig6(r.get(m)?.unwrap_or(f64::NAN)));
        }
        if with_bigrams {
            for b in [r.p_risk_bigram, r.c_risk_bigram] {
                row.push(b.map(fmt_sig6).unwrap_or_default());
            }
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_exposures_csv<R: io::Read>(r: R) -> Result<Vec<ExposureRecord>, ExposureError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<ExposureRecord>().enumerate() {
        out.push(row.map_err(|e| ExposureError::BadRow { row: i + 2, reason: e.to_string() })?);
    }
    Ok(out)
}

/// Pearson correlations; `None` marks an undefined entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub columns: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.columns.iter().position(|c| c == a)?;
        let j = self.columns.iter().position(|c| c == b)?;
        self.values[i][j]
    }
}

/// Pearson correlation of two equal-length series; `None` when either has
/// zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn pearson_columns(columns: &[(String, Vec<f64>)]) -> Result<CorrelationMatrix, ExposureError> {
    let n = columns.first().map_or(0, |c| c.1.len());
    if n < 2 {
        return Err(ExposureError::TooFewRecords(n));
    }
    let k = columns.len();
    let mut values = vec![vec![None; k]; k];
    for i in 0..k {
        values[i][i] = Some(1.0);
        for j in 0..i {
            let r = pearson(&columns[i].1, &columns[j].1);
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix { columns: columns.iter().map(|c| c.0.clone()).collect(), values })
}

pub fn pearson_matrix(records: &[ExposureRecord], columns: &[&str]) -> Result<CorrelationMatrix, ExposureError> {
    let cols = columns.iter().map(|&c| Ok::<_, ExposureError>((c.to_string(), column(records, c)?))).collect::<Result<Vec<_>, _>>()?;
    if records.len() < 2 {
        return Err(ExposureError::TooFewRecords(records.len()));
    }
    pearson_columns(&cols)
}

/// Subtract each group's mean from its members.
pub fn demean_by<K: Ord + Clone>(values: &[f64], groups: &[K]) -> Vec<f64> {
    let mut sums: BTreeMap<K, (f64, usize)> = BTreeMap::new();
    for (v, g) in values.iter().zip(groups) {
        let e = sums.entry(g.clone()).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    values.iter().zip(groups).map(|(v, g)| {
        let (s, n) = sums[g];
        v - s / n as f64
    }).collect()
}

pub fn within_quarter_demean(records: &[ExposureRecord], column_name: &str) -> Result<Vec<f64>, ExposureError> {
    let values = column(records, column_name)?;
    let quarters: Vec<Quarter> = records.iter().map(|r| r.fiscal_quarter).collect();
    Ok(demean_by(&values, &quarters))
}

/// Lowercased runs of alphanumeric characters (apostrophes kept inside words).
pub fn terms(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|t| t.trim_matches('\''))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

fn term_counts(text: &str) -> HashMap<String, f64> {
    let mut m = HashMap::new();
    for t in terms(text) {
        *m.entry(t).or_insert(0.0) += 1.0;
    }
    m
}

pub fn cosine_similarity(a: &str, b: &str) -> Result<f64, ExposureError> {
    let ta = term_counts(a);
    let tb = term_counts(b);
    if ta.is_empty() || tb.is_empty() {
        return Err(ExposureError::EmptyDocument);
    }
    let dot: f64 = ta.iter().filter_map(|(k, v)| tb.get(k).map(|w| v * w)).sum();
    let na: f64 = ta.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = tb.values().map(|v| v * v).sum::<f64>().sqrt();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Common English function words, for word-cloud extraction.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any", "are", "as", "at",
    "be", "because", "been", "before", "being", "below", "between", "both", "but", "by", "can", "could", "did", "do",
    "does", "doing", "down", "during", "each", "few", "for", "from", "further", "had", "has", "have", "having", "he",
    "her", "here", "hers", "him", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just", "may",
    "me", "might", "more", "most", "must", "my", "no", "nor", "not", "now", "of", "off", "on", "once", "only", "or",
    "other", "our", "ours", "out", "over", "own", "same", "she", "should", "so", "some", "such", "than", "that",
    "the", "their", "theirs", "them", "then", "there", "these", "they", "this", "those", "through", "to", "too",
    "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which", "while", "who", "whom",
    "why", "will", "with", "would", "you", "your", "yours",
];

pub fn default_stopwords() -> BTreeSet<String> {
    DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect()
}

/// Term counts across documents, most frequent first, ties in lexicographic
/// order.
pub fn term_frequencies(docs: &[RiskDocument], stopwords: &BTreeSet<String>) -> Vec<(String, usize)> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for d in docs {
        for t in terms(&d.text) {
            if !stopwords.contains(&t) {
                *counts.entry(t).or_insert(0) += 1;
            }
        }
    }
    let mut out: Vec<(String, usize)> = counts.into_iter().collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// Distribution summary for one variable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub max: f64,
}

/// Summary of the non-missing values, `None` if there are none.
pub fn describe(values: &[f64]) -> Option<Summary> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
    Some(Summary {
        n,
        mean,
        sd,
        min: v[0],
        p25: quantile_sorted(&v, 0.25)?,
        median: quantile_sorted(&v, 0.5)?,
        p75: quantile_sorted(&v, 0.75)?,
        max: v[n - 1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(outputs: &[&str]) -> RiskDocument {
        let outs: Vec<String> = outputs.iter().map(|s| s.to_string()).collect();
        RiskDocument {
            call_id: "c".into(),
            risk_type: RiskType::Political,
            mode: Mode::Summary,
            text: crate::llm::purge_na(&outs),
            chunk_outputs: outs,
        }
    }

    fn len(n: usize) -> TranscriptLength {
        TranscriptLength { call_id: "c".into(), denominator_words: n }
    }

    fn n_words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn word_counts() {
        assert_eq!(word_count(""), 0);
        assert_eq!(word_count("a  b\tc\n"), 3);
        assert_eq!(word_count(&n_words(1000)), 1000);
    }

    #[test]
    fn exposure_examples() {
        assert_eq!(compute_exposure(&doc(&[&n_words(10)]), &len(1000)).unwrap(), 0.01);
        assert_eq!(compute_exposure(&doc(&["NA", "na."]), &len(1000)).unwrap(), 0.0);
        assert_eq!(compute_exposure(&doc(&[&n_words(7), "NA", &n_words(13)]), &len(400)).unwrap(), 0.05);
        assert!(matches!(compute_exposure(&doc(&["x"]), &len(0)), Err(ExposureError::EmptyTranscript(_))));
    }

    #[test]
    fn pearson_examples() {
        let cols = |y: Vec<f64>| vec![("x".to_string(), vec![1.0, 2.0, 3.0]), ("y".to_string(), y)];
        let m = pearson_columns(&cols(vec![2.0, 4.0, 6.0])).unwrap();
        assert!((m.get("x", "y").unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(m.get("x", "x"), Some(1.0));
        let m = pearson_columns(&cols(vec![3.0, 2.0, 1.0])).unwrap();
        assert!((m.get("x", "y").unwrap() + 1.0).abs() < 1e-15);
        // x=(1,2,3,4), y=(1,3,2,4): sxy = 4, sxx = syy = 5 -> 0.8
        let m = pearson_columns(&[
            ("x".into(), vec![1.0, 2.0, 3.0, 4.0]),
            ("y".into(), vec![1.0, 3.0, 2.0, 4.0]),
        ])
        .unwrap();
        assert!((m.get("x", "y").unwrap() - 0.8).abs() < 1e-15);
        let m = pearson_columns(&cols(vec![5.0, 5.0, 5.0])).unwrap();
        assert_eq!(m.get("x", "y"), None);
        assert_eq!(m.get("y", "y"), Some(1.0));
    }

    #[test]
    fn pearson_matrix_needs_bigrams_present() {
        let q: Quarter = "2020Q1".parse().unwrap();
        let mut a = ExposureRecord::zero("f1", q);
        a.p_risk_sum = 0.1;
        let b = ExposureRecord::zero("f2", q);
        let err = pearson_matrix(&[a.clone(), b.clone()], &["PRiskSum", "PRiskBigram"]).unwrap_err();
        assert!(matches!(err, ExposureError::MissingColumn(ref c) if c == "PRiskBigram"));
        assert!(matches!(pearson_matrix(&[a], &["PRiskSum"]), Err(ExposureError::TooFewRecords(1))));
    }

    #[test]
    fn demean_examples() {
        let q1: Quarter = "2020Q1".parse().unwrap();
        let q2 = q1.next();
        let d = demean_by(&[1.0, 2.0, 3.0], &[q1, q1, q1]);
        assert_eq!(d, vec![-1.0, 0.0, 1.0]);
        assert_eq!(demean_by(&[5.0, 5.0, 2.0, 2.0], &[q1, q1, q2, q2]), vec![0.0; 4]);
        let d = demean_by(&[0.4, 0.6, 0.1, 0.3], &[q1, q1, q2, q2]);
        for (a, b) in d.iter().zip([-0.1, 0.1, -0.1, 0.1]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity("risk tariff", "Tariff, risk!").unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity("a b", "c d").unwrap(), 0.0);
        assert!((cosine_similarity("a b", "a c").unwrap() - 0.5).abs() < 1e-15);
        assert!(cosine_similarity("", "a").is_err());
        assert!(cosine_similarity("...", "a").is_err());
    }

    #[test]
    fn term_frequency_examples() {
        let none = BTreeSet::new();
        let d = |t: &str| RiskDocument {
            call_id: "c".into(),
            risk_type: RiskType::Climate,
            mode: Mode::Assessment,
            text: t.into(),
            chunk_outputs: vec![t.into()],
        };
        assert_eq!(term_frequencies(&[d("risk risk tariff")], &none), vec![("risk".into(), 2), ("tariff".into(), 1)]);
        assert!(term_frequencies(&[d("the and of")], &default_stopwords()).is_empty());
        assert_eq!(term_frequencies(&[d("b a")], &none), vec![("a".into(), 1), ("b".into(), 1)]);
    }

    #[test]
    fn sig6_format() {
        assert_eq!(fmt_sig6(0.0), "0");
        assert_eq!(fmt_sig6(0.01), "0.0100000");
        assert_eq!(fmt_sig6(0.0123456789), "0.0123457");
        assert_eq!(fmt_sig6(123.456789), "123.457");
        assert_eq!(fmt_sig6(1.5e-7), "1.50000e-7");
    }

    #[test]
    fn csv_roundtrip_with_and_without_bigrams() {
        let q: Quarter = "2021Q2".parse().unwrap();
        let mut r = ExposureRecord::zero("f1", q);
        r.c_risk_assess = 0.0123456;
        let mut buf = Vec::new();
        write_exposures_csv(&mut buf, std::slice::from_ref(&r)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("firm_id,fiscal_quarter,PRiskSum,PRiskAssess,CRiskSum,CRiskAssess,AIRiskSum,AIRiskAssess\n"));
        assert_eq!(read_exposures_csv(buf.as_slice()).unwrap(), vec![r.clone()]);

        r.p_risk_bigram = Some(0.5);
        let mut buf = Vec::new();
        write_exposures_csv(&mut buf, std::slice::from_ref(&r)).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().lines().next().unwrap().ends_with(",PRiskBigram,CRiskBigram"));
        let back = read_exposures_csv(buf.as_slice()).unwrap();
        assert_eq!(back[0].p_risk_bigram, Some(0.5));
        assert_eq!(back[0].c_risk_bigram, None);
    }

    proptest! {
        #[test]
        fn exposure_scale_and_monotone(a in 0usize..50, b in 0usize..50, extra in 1usize..20, denom in 100usize..2000) {
            let d = doc(&[&n_words(a), &n_words(b)]);
            let base = compute_exposure(&d, &len(denom)).unwrap();
            let doubled = doc(&[&n_words(a), &n_words(b), &n_words(a), &n_words(b)]);
            prop_assert_eq!(compute_exposure(&doubled, &len(2 * denom)).unwrap(), base);
            let longer = doc(&[&n_words(a), &n_words(b), &n_words(extra)]);
            prop_assert!(compute_exposure(&longer, &len(denom)).unwrap() > base);
        }

        #[test]
        fn pearson_symmetric_affine_invariant(
            x in proptest::collection::vec(-100.0f64..100.0, 3..40),
            slope in 0.1f64..10.0, shift in -50.0f64..50.0,
        ) {
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v * 0.3 + (i as f64).sin()).collect();
            let m = pearson_columns(&[("x".into(), x.clone()), ("y".into(), y.clone())]).unwrap();
            prop_assert_eq!(m.get("x", "y"), m.get("y", "x"));
            let xs: Vec<f64> = x.iter().map(|v| v * slope + shift).collect();
            let m2 = pearson_columns(&[("x".into(), xs), ("y".into(), y)]).unwrap();
            if let (Some(a), Some(b)) = (m.get("x", "y"), m2.get("x", "y")) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn demeaning_keeps_rank_and_zero_mean(v in proptest::collection::vec(-10.0f64..10.0, 1..60)) {
            let groups: Vec<u8> = (0..v.len()).map(|i| (i % 3) as u8).collect();
            let d = demean_by(&v, &groups);
            for g in 0..3u8 {
                let idx: Vec<usize> = (0..v.len()).filter(|&i| groups[i] == g).collect();
                if idx.is_empty() { continue; }
                let mean: f64 = idx.iter().map(|&i| d[i]).sum::<f64>() / idx.len() as f64;
                prop_assert!(mean.abs() < 1e-12);
                for &i in &idx { for &j in &idx {
                    if v[i] < v[j] { prop_assert!(d[i] <= d[j]); }
                }}
            }
        }
    }
}
