use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{PipelineConfig, ProviderKind};
use super::manifest::{fingerprint, hash_outputs, sha256_file, write_atomic, RunManifest, StageRecord};
use super::{PipelineError, Stage, StageOutcome};
use crate::econometrics::table::{alpha_table, decomposition_table, failure_row, fmb_table, regression_table, rolling_table};
use crate::econometrics::{
    annualize_exposure, fama_macbeth, five_factor_alpha, panel_regression, quintile_portfolios, read_factors_csv,
    rolling_regression, trim_regressors, variance_decomposition, CrossSection, FeSpec, FmbResult, PanelDataset,
    RegressionSpec,
    TextTable,
};
use crate::exposure::{
    describe, fmt_sig6, pearson_columns, write_exposures_csv, ExposureRecord, TranscriptLength, BIGRAM_MEASURES,
    GPT_MEASURES,
};
use crate::llm::cache::CompletionCache;
use crate::llm::prompts::PromptSpec;
use crate::llm::provider::{LiveProvider, Provider, StubProvider};
use crate::llm::{measure_name, Gateway, Mode, RiskDocument, RiskType};
use crate::outcomes::{
    build_outcomes, monthly_returns, quarterly_inflation, read_activity_csv, read_fundamentals_csv, read_market_csv,
    read_ppi_csv, read_returns_csv, CallKey, DailySeries, OutcomeInputs, OutcomeRecord,
};
use crate::quarter::{Month, Quarter};
use crate::transcript::{chunk_transcript, parse_corpus, Chunk, ChunkOrigin, ChunkParams, Transcript};

const TRANSCRIPTS: &str = "ingest/transcripts.jsonl";
const INGEST_REPORT: &str = "ingest/report.json";
const CHUNKS: &str = "chunks/chunks.jsonl";
const LENGTHS: &str = "chunks/lengths.csv";
const CHUNK_REPORT: &str = "chunks/report.json";
const DOCUMENTS: &str = "generate/documents.jsonl";
const EXPOSURES_CSV: &str = "measure/exposures.csv";
const EXPOSURES: &str = "measure/exposures.jsonl";
const MEASURE_REPORT: &str = "measure/report.json";
const SUMMARY: &str = "measure/summary.csv";
const CORRELATIONS: &str = "measure/correlations.csv";
const TIMESERIES: &str = "measure/timeseries.csv";
const OUTCOMES: &str = "panel/outcomes.csv";
const PANEL: &str = "panel/panel.csv";
const PANEL_REPORT: &str = "panel/report.json";
const PORTFOLIO_RETURNS: &str = "portfolio/monthly_returns.csv";

/// Firm-quarter outcome columns of the panel, in file order.
pub const OUTCOME_COLUMNS: [&str; 7] =
    ["implied_vol", "abnormal_vol", "realized_vol", "investment", "lobby_any", "green_patent_any", "ai_patent_any"];

const INDUSTRY: &str = "industry";
const LOG_ASSETS: &str = "log_assets";

/// Name of an outcome column shifted `lead` quarters ahead.
pub fn lead_name(outcome: &str, lead: usize) -> String {
    if lead == 0 {
        outcome.to_string()
    } else {
        format!("{outcome}_f{lead}")
    }
}

/// One line of `exposures.jsonl`: the record at full precision plus its call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureRow {
    pub call_id: String,
    pub call_date: NaiveDate,
    pub denominator_words: usize,
    #[serde(flatten)]
    pub record: ExposureRecord,
}

enum Input {
    /// An input file named by its config key.
    External(&'static str),
    /// An artifact of an earlier stage.
    Artifact(&'static str, Stage),
}

fn plan(stage: Stage, cfg: &PipelineConfig) -> (Vec<Input>, serde_json::Value) {
    use Input::*;
    let optional = |key: &'static str| cfg.require(key).ok().map(|_| External(key));
    match stage {
        Stage::Ingest => (vec![External("paths.corpus")], cfg.section_json("ingest")),
        Stage::Chunk => (vec![Artifact(TRANSCRIPTS, Stage::Ingest)], cfg.section_json("chunking")),
        Stage::Generate => {
            let mut inputs = vec![Artifact(CHUNKS, Stage::Chunk)];
            if cfg.provider.kind == ProviderKind::Stub {
                inputs.extend(optional("provider.stub_rules"));
            }
            let p = &cfg.provider;
            (inputs, json!({"kind": p.kind, "model_id": p.model_id, "prompts": cfg.section_json("prompts")}))
        }
        Stage::Measure => {
            let mut inputs = vec![
                Artifact(TRANSCRIPTS, Stage::Ingest),
                Artifact(LENGTHS, Stage::Chunk),
                Artifact(DOCUMENTS, Stage::Generate),
            ];
            inputs.extend(optional("paths.benchmarks"));
            (inputs, serde_json::Value::Null)
        }
        Stage::Panel => {
            let mut inputs = vec![
                Artifact(EXPOSURES, Stage::Measure),
                External("paths.returns"),
                External("paths.market"),
                External("paths.fundamentals"),
            ];
            inputs.extend(optional("paths.activity"));
            inputs.extend(optional("paths.ppi"));
            (inputs, json!({"lead": cfg.estimation.lead}))
        }
        Stage::Regress | Stage::Vardecomp => (vec![Artifact(PANEL, Stage::Panel)], cfg.section_json("estimation")),
        Stage::Rolling => (
            vec![Artifact(PANEL, Stage::Panel)],
            {
                // The estimation FE list does not apply to rolling windows.
                let mut est = cfg.section_json("estimation");
                if let Some(o) = est.as_object_mut() {
                    o.remove("fe");
                }
                json!({"rolling": cfg.section_json("rolling"), "estimation": est})
            },
        ),
        Stage::Fmb => {
            let mut inputs = vec![Artifact(EXPOSURES, Stage::Measure), External("paths.returns")];
            inputs.extend(optional("paths.characteristics"));
            (inputs, json!({"fmb": cfg.section_json("fmb"), "measures": cfg.estimation.measures}))
        }
        Stage::Portfolio => (
            vec![Artifact(EXPOSURES, Stage::Measure), External("paths.returns"), External("paths.factors")],
            json!({"portfolio": cfg.section_json("portfolio"), "measures": cfg.estimation.measures}),
        ),
    }
}

struct Written {
    files: Vec<PathBuf>,
    provider_calls: usize,
    /// Set when the stage wrote its artifacts but every estimate failed.
    failure: Option<PipelineError>,
}

pub(super) fn run_stage(stage: Stage, cfg: &PipelineConfig, manifest: &mut RunManifest) -> Result<StageOutcome, PipelineError> {
    let out = cfg.output();
    let (inputs, section) = plan(stage, cfg);
    let mut hashes = BTreeMap::new();
    for input in &inputs {
        match input {
            Input::External(key) => {
                let path = cfg.require(key)?;
                hashes.insert(key.to_string(), sha256_file(&path).map_err(|e| PipelineError::Data(format!("{key}: {e}")))?);
            }
            Input::Artifact(rel, producer) => {
                let path = out.join(rel);
                let hash = sha256_file(&path).map_err(|_| PipelineError::Prerequisite {
                    stage,
                    producer: *producer,
                    artifact: rel.to_string(),
                })?;
                hashes.insert(rel.to_string(), hash);
            }
        }
    }
    let fp = fingerprint(stage.name(), &section, &hashes);
    if manifest.is_current(stage.name(), &fp, &out) {
        let artifacts = manifest.stages[stage.name()].outputs.keys().cloned().collect();
        return Ok(StageOutcome { stage, skipped: true, provider_calls: 0, artifacts });
    }
    let w = Writer { out: out.clone(), files: Vec::new() };
    let written = match stage {
        Stage::Ingest => ingest(cfg, w),
        Stage::Chunk => chunk(cfg, w),
        Stage::Generate => generate(cfg, w),
        Stage::Measure => measure(cfg, w),
        Stage::Panel => panel(cfg, w),
        Stage::Regress => regress(cfg, w),
        Stage::Vardecomp => vardecomp(cfg, w),
        Stage::Rolling => rolling(cfg, w),
        Stage::Fmb => fmb(cfg, w),
        Stage::Portfolio => portfolio(cfg, w),
    }?;
    if let Some(e) = written.failure {
        manifest.stages.remove(stage.name());
        manifest.save(&out)?;
        return Err(e);
    }
    let outputs = hash_outputs(&out, &written.files)?;
    let artifacts = outputs.keys().cloned().collect();
    manifest.record(stage.name(), StageRecord { fingerprint: fp, inputs: hashes, outputs });
    manifest.save(&out)?;
    Ok(StageOutcome { stage, skipped: false, provider_calls: written.provider_calls, artifacts })
}

struct Writer {
    out: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn put(&mut self, rel: &str, body: impl AsRef<[u8]>) -> Result<(), PipelineError> {
        let path = self.out.join(rel);
        write_atomic(&path, body.as_ref())?;
        self.files.push(path);
        Ok(())
    }

    fn table(&mut self, stem: &str, title: &str, t: &TextTable) -> Result<(), PipelineError> {
        self.put(&format!("tables/{stem}.csv"), t.render_csv())?;
        self.put(&format!("tables/{stem}.txt"), format!("{title}\n\n{}", t.render_text()))
    }

    fn done(self, provider_calls: usize) -> Result<Written, PipelineError> {
        Ok(Written { files: self.files, provider_calls, failure: None })
    }
}

fn jsonl<T: Serialize>(items: &[T]) -> Result<String, PipelineError> {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it)?);
        s.push('\n');
    }
    Ok(s)
}

fn pretty<T: Serialize>(v: &T) -> Result<String, PipelineError> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| PipelineError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

fn open_input(cfg: &PipelineConfig, key: &str) -> Result<BufReader<File>, PipelineError> {
    let path = cfg.require(key)?;
    File::open(&path).map(BufReader::new).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

fn data_err(key: &str) -> impl Fn(crate::outcomes::OutcomeError) -> PipelineError + '_ {
    move |e| PipelineError::Data(format!("{key}: {e}"))
}

/// Shortest round-trip text; missing values are empty.
fn cell(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

fn csv_string(header: &[String], rows: &[Vec<String>]) -> Result<String, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| PipelineError::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn ingest(cfg: &PipelineConfig, mut w: Writer) -> Result<Written, PipelineError> {
    let corpus = parse_corpus(open_input(cfg, "paths.corpus")?)?;
    if cfg.ingest.strict && !corpus.errors.is_empty() {
        return Err(PipelineError::Data(format!(
            "{} malformed corpus record(s); first at {}",
            corpus.errors.len(),
            corpus.errors[0]
        )));
    }
    for e in &corpus.errors {
        log::warn!("corpus {e}");
    }
    if corpus.transcripts.is_empty() {
        return Err(PipelineError::Data("corpus holds no usable transcripts".into()));
    }
    w.put(TRANSCRIPTS, jsonl(&corpus.transcripts)?)?;
    let report = json!({
        "transcripts": corpus.transcripts.len(),
        "errors": corpus.errors.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
        "skipped_language": corpus.skipped_language,
        "duplicate_ids": corpus.duplicate_ids,
    });
    w.put(INGEST_REPORT, pretty(&report)?)?;
    w.done(0)
}

fn chunk(cfg: &PipelineConfig, mut w: Writer) -> Result<Written, PipelineError> {
    let transcripts: Vec<Transcript> = read_jsonl(&w.out.join(TRANSCRIPTS))?;
    let params = ChunkParams { input_budget: cfg.chunking.input_budget, min_tokens: cfg.chunking.min_tokens };
    let mut all = Vec::new();
    let mut lengths = Vec::new();
    for t in &transcripts {
        let chunks = chunk_transcript(t, params);
        let len = TranscriptLength::from_chunks(&t.call_id, &chunks);
        lengths.push(vec![len.call_id, len.denominator_words.to_string()]);
        all.extend(chunks);
    }
    let mut by_origin: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &all {
        let name = match c.origin {
            ChunkOrigin::Presentation => "presentation",
            ChunkOrigin::Qa => "qa",
            ChunkOrigin::QaGroup => "qa_group",
            ChunkOrigin::OverflowSplit => "overflow_split",
        };
        *by_origin.entry(name).or_default() += 1;
    }
    w.put(CHUNKS, jsonl(&all)?)?;
    w.put(LENGTHS, csv_string(&["call_id".into(), "denominator_words".into()], &lengths)?)?;
    w.put(CHUNK_REPORT, pretty(&json!({"chunks": all.len(), "by_origin": by_origin}))?)?;
    w.done(0)
}

fn prompt_specs(cfg: &PipelineConfig) -> Vec<PromptSpec> {
    let mut specs = Vec::new();
    for r in RiskType::ALL {
        for m in Mode::ALL {
            let mut spec = PromptSpec::default_for(r, m);
            if let Some(o) = cfg.prompts.get(&measure_name(r, m)) {
                if let Some(p) = &o.preamble {
                    spec.preamble = p.clone();
                }
                if let Some(e) = &o.risk_explanation {
                    spec.risk_explanation = e.clone();
                }
                if let Some(q) = &o.sample_questions {
                    spec.sample_questions = q.clone();
                }
            }
            specs.push(spec);
        }
    }
    specs
}

fn generate(cfg: &PipelineConfig, mut w: Writer) -> Result<Written, PipelineError> {
    let chunks: Vec<Chunk> = read_jsonl(&w.out.join(CHUNKS))?;
    let mut calls: Vec<(String, Vec<Chunk>)> = Vec::new();
    for c in chunks {
        match calls.last_mut() {
            Some((id, v)) if *id == c.source_call_id => v.push(c),
            _ => calls.push((c.source_call_id.clone(), vec![c])),
        }
    }
    let provider: Box<dyn Provider> = match cfg.provider.kind {
        ProviderKind::Stub => match cfg.require("provider.stub_rules") {
            Ok(path) => Box::new(StubProvider::from_json(&std::fs::read_to_string(path)?)?),
            Err(_) => Box::new(StubProvider::new(Vec::new())),
        },
        ProviderKind::Live => Box::new(LiveProvider::from_env(&cfg.provider.endpoint, cfg.provider.retry)?),
    };
    let cache = CompletionCache::open(cfg.cache_dir())?;
    let gateway = Gateway::new(provider.as_ref(), &cache, &cfg.provider.model_id).with_parallelism(cfg.provider.parallelism);
    let specs = prompt_specs(cfg);
    let mut docs: Vec<RiskDocument> = Vec::with_capacity(calls.len() * specs.len());
    for (call_id, chunks) in &calls {
        for spec in &specs {
            let doc = gateway
                .generate_risk_document(chunks, spec)
                .map_err(|e| PipelineError::Provider(format!("call {call_id}, {}: {e}", measure_name(spec.risk_type, spec.mode))))?;
            docs.push(doc);
        }
    }
    log::info!("generate: {} documents, {} cache hits", docs.len(), gateway.cache_hits());
    w.put(DOCUMENTS, jsonl(&docs)?)?;
    w.done(provider.calls())
}

#[derive(Deserialize)]
struct BenchmarkRow {
    firm_id: String,
    fiscal_quarter: Quarter,
    #[serde(rename = "PRiskBigram", default)]
    p: Option<f64>,
    #[serde(rename = "CRiskBigram", default)]
    c: Option<f64>,
}

fn read_lengths(path: &Path) -> Result<BTreeMap<String, usize>, PipelineError> {
    #[derive(Deserialize)]
    struct Row {
        call_id: String,
        denominator_words: usize,
    }
    let mut out = BTreeMap::new();
    for r in csv::Reader::from_path(path)?.deserialize::<Row>() {
        let r = r?;
        out.insert(r.call_id, r.denominator_words);
    }
    Ok(out)
}

/// Measures with a value on every row, in canonical order.
fn complete_measures(rows: &[ExposureRow]) -> Vec<&'static str> {
    GPT_MEASURES
        .iter()
        .chain(&BIGRAM_MEASURES)
        .copied()
        .filter(|m| rows.iter().all(|r| r.record.get(m).ok().flatten().is_some_and(f64::is_finite)))
        .collect()
}

fn measure(cfg: &PipelineConfig, mut w: Writer) -> Result<Written, PipelineError> {
    let transcripts: Vec<Transcript> = read_jsonl(&w.out.join(TRANSCRIPTS))?;
    let lengths = read_lengths(&w.out.join(LENGTHS))?;
    let mut docs: BTreeMap<String, Vec<RiskDocument>> = BTreeMap::new();
    for d in read_jsonl::<RiskDocument>(&w.out.join(DOCUMENTS))? {
        docs.entry(d.call_id.clone()).or_default().push(d);
    }
    let mut bench: BTreeMap<(String, Quarter), (Option<f64>, Option<f64>)> = BTreeMap::new();
    if cfg.paths.benchmarks.is_some() {
        for r in csv::Reader::from_reader(open_input(cfg, "paths.benchmarks")?).deserialize::<BenchmarkRow>() {
            let r = r?;
            bench.insert((r.firm_id, r.fiscal_quarter), (r.p, r.c));
        }
    }
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for t in &transcripts {
        let words = lengths.get(&t.call_id).copied().unwrap_or(0);
        if words == 0 {
            log::warn!("call {} has no chunked text; no exposure computed", t.call_id);
            skipped.push(t.call_id.clone());
            continue;
        }
        let len = TranscriptLength { call_id: t.call_id.clone(), denominator_words: words };
        let call_docs = docs.get(&t.call_id).map(Vec::as_slice).unwrap_or_default();
        let mut record = ExposureRecord::from_documents(&t.firm_id, t.fiscal_quarter, &len, call_docs)?;
        if let Some((p, c)) = bench.get(&(t.firm_id.clone(), t.fiscal_quarter)) {
            record.p_risk_bigram = *p;
            record.c_risk_bigram = *c;
        }
        rows.push(ExposureRow { call_id: t.call_id.clone(), call_date: t.call_date, denominator_words: words, record });
    }
    if rows.is_empty() {
        return Err(PipelineError::Data("no call produced an exposure record".into()));
    }
    let records: Vec<ExposureRecord> = rows.iter().map(|r| r.record.clone()).collect();
    let mut csv_bytes = Vec::new();
    write_exposures_csv(&mut csv_bytes, &records)?;
    w.put(EXPOSURES_CSV, csv_bytes)?;
    w.put(EXPOSURES, jsonl(&rows)?)?;
    w.put(MEASURE_REPORT, pretty(&json!({"records": rows.len(), "skipped_calls": skipped}))?)?;

    let measures = complete_measures(&rows);
    let columns: Vec<(String, Vec<f64>)> = measures
        .iter()
        .map(|m| (m.to_string(), rows.iter().map(|r| r.record.get(m).ok().flatten().unwrap_or(f64::NAN)).collect()))
        .collect();

    let summary_header: Vec<String> =
        ["variable", "n", "mean", "sd", "min", "p25", "median", "p75", "max"].map(String::from).to_vec();
    let summary_rows: Vec<Vec<String>> = columns
        .iter()
        .filter_map(|(name, v)| {
            let s = describe(v)?;
            Some(
                [name.clone(), s.n.to_string()]
                    .into_iter()
                    .chain([s.mean, s.sd, s.min, s.p25, s.median, s.p75, s.max].map(fmt_sig6))
                    .collect(),
            )
        })
        .collect();
    w.put(SUMMARY, csv_string(&summary_header, &summary_rows)?)?;

    let mut corr_header = vec!["variable".to_string()];
    let mut corr_rows = Vec::new();
    if let Ok(m) = pearson_columns(&columns) {
        corr_header.extend(m.columns.iter().cloned());
        for (name, vals) in m.columns.iter().zip(&m.values) {
            let mut row = vec![name.clone()];
            row.extend(vals.iter().map(|v| v.map(fmt_sig6).unwrap_or_default()));
            corr_rows.push(row);
        }
    }
    w.put(CORRELATIONS, csv_string(&corr_header, &corr_rows)?)?;

    let mut by_q: BTreeMap<Quarter, Vec<&ExposureRow>> = BTreeMap::new();
    for r in &rows {
        by_q.entry(r.record.fiscal_quarter).or_default().push(r);
    }
    let mut ts_header = vec!["quarter".to_string(), "n".to_string()];
    ts_header.extend(measures.iter().map(|m| m.to_string()));
    let ts_rows: Vec<Vec<String>> = by_q
        .iter()
        .map(|(q, rs)| {
            let mut row = vec![q.to_string(), rs.len().to_string()];
            for m in &measures {
                let sum: f64 = rs.iter().map(|r| r.record.get(m).ok().flatten().unwrap_or(0.0)).sum();
                row.push(fmt_sig6(sum / rs.len() as f64));
            }
            row
        })
        .collect();
    w.put(TIMESERIES, csv_string(&ts_header, &ts_rows)?)?;
    w.done(0)
}

fn outcome_values(r: &OutcomeRecord, has_activity: bool) -> [f64; 7] {
    let opt = |v: Option<f64>| v.unwrap_or(f64::NAN);
    let ind = |v: u8| if has_activity { f64::from(v) } else { f64::NAN };
    [
        opt(r.implied_vol),
        opt(r.abnormal_vol),
        opt(r.realized_vol),
        opt(r.investment),
        ind(r.lobby_any),
        ind(r.green_patent_any),
        ind(r.ai_patent_any),
    ]
}

fn panel(cfg: &PipelineConfig, mut w: Writer) -> Result<Written, PipelineError> {
    let mut rows: Vec<ExposureRow> = read_jsonl(&w.out.join(EXPOSURES))?;
    rows.sort_by(|a, b| {
        (&a.record.firm_id, a.record.fiscal_quarter, a.call_date).cmp(&(&b.record.firm_id, b.record.fiscal_quarter, b.call_date))
    });
    // One call per firm-quarter: the latest one.
    let mut dedup: Vec<ExposureRow> = Vec::with_capacity(rows.len());
    let mut duplicates = 0usize;
    for r in rows {
        match dedup.last_mut() {
            Some(prev) if prev.record.firm_id == r.record.firm_id && prev.record.fiscal_quarter == r.record.fiscal_quarter => {
                duplicates += 1;
                *prev = r;
            }
            _ => dedup.push(r),
        }
    }
    if duplicates > 0 {
        log::warn!("{duplicates} firm-quarter(s) had more than one call; kept the latest");
    }
    let rows = dedup;

    let returns = read_returns_csv(open_input(cfg, "paths.returns")?).map_err(data_err("paths.returns"))?;
    let market = read_market_csv(open_input(cfg, "paths.market")?).map_err(data_err("paths.market"))?;
    let fundamentals =
        read_fundamentals_csv(open_input(cfg, "paths.fundamentals")?).map_err(data_err("paths.fundamentals"))?;
    let has_activity = cfg.paths.activity.is_some();
    let activity = if has_activity {
        read_activity_csv(open_input(cfg, "paths.activity")?).map_err(data_err("paths.activity"))?
    } else {
        Vec::new()
    };
    let inflation = match cfg.paths.ppi {
        Some(_) => quarterly_inflation(&read_ppi_csv(open_input(cfg, "paths.ppi")?).map_err(data_err("paths.ppi"))?),
        None => BTreeMap::new(),
    };

    let mut keys: BTreeMap<(String, Quarter), Option<NaiveDate>> = BTreeMap::new();
    for f in &fundamentals {
        keys.insert((f.firm_id.clone(), f.quarter), None);
    }
    for r in &rows {
        keys.insert((r.record.firm_id.clone(), r.record.fiscal_quarter), Some(r.call_date));
    }
    let calls: Vec<CallKey> =
        keys.into_iter().map(|((firm_id, quarter), call_date)| CallKey { firm_id, quarter, call_date }).collect();
    let inputs = OutcomeInputs {
        returns: &returns,
        market: &market,
        fundamentals: &fundamentals,
        activity: &activity,
        inflation: &inflation,
    };
    let (outcomes, diagnostics) = build_outcomes(&calls, &inputs)?;

    let mut header: Vec<String> = ["firm_id", "quarter"].map(String::from).to_vec();
    header.extend(OUTCOME_COLUMNS.map(String::from));
    let out_rows: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| {
            let mut row = vec![o.firm_id.clone(), o.quarter.to_string()];
            row.extend(outcome_values(o, has_activity).map(cell));
            row
        })
        .collect();
    w.put(OUTCOMES, csv_string(&header, &out_rows)?)?;

    let by_key: BTreeMap<(&str, Quarter), [f64; 7]> =
        outcomes.iter().map(|o| ((o.firm_id.as_str(), o.quarter), outcome_values(o, has_activity))).collect();
    let fund: BTreeMap<(&str, Quarter), &crate::outcomes::FundamentalRow> =
        fundamentals.iter().map(|f| ((f.firm_id.as_str(), f.quarter), f)).collect();
    let mut firm_industry: BTreeMap<&str, &str> = BTreeMap::new();
    let mut sorted_fund: Vec<_> = fundamentals.iter().collect();
    sorted_fund.sort_by_key(|f| (f.firm_id.clone(), f.quarter));
    for f in sorted_fund {
        if let Some(ind) = &f.industry {
            firm_industry.insert(&f.firm_id, ind);
        }
    }

    let measures: Vec<&str> = GPT_MEASURES
        .iter()
        .chain(&BIGRAM_MEASURES)
        .copied()
        .filter(|m| rows.iter().any(|r| r.record.get(m).ok().flatten().is_some()))
        .collect();
    let lead = cfg.estimation.lead;
    let mut header: Vec<String> = ["firm_id", "quarter", INDUSTRY].map(String::from).to_vec();
    header.extend(measures.iter().map(|m| m.to_string()));
    header.push(LOG_ASSETS.into());
    header.extend(OUTCOME_COLUMNS.map(String::from));
    if lead > 0 {
        header.extend(OUTCOME_COLUMNS.map(|o| lead_name(o, lead)));
    }
    let mut panel_rows = Vec::with_capacity(rows.len());
    for r in &rows {
        let firm = r.record.firm_id.as_str();
        let q = r.record.fiscal_quarter;
        let f = fund.get(&(firm, q));
        let industry = f.and_then(|f| f.industry.as_deref()).or_else(|| firm_industry.get(firm).copied());
        let mut row = vec![firm.to_string(), q.to_string(), industry.unwrap_or_default().to_string()];
        for m in &measures {
            row.push(cell(r.record.get(m).ok().flatten().unwrap_or(f64::NAN)));
        }
        let assets = f.and_then(|f| f.total_assets).filter(|a| *a > 0.0).map_or(f64::NAN, f64::ln);
        row.push(cell(assets));
        let nan = [f64::NAN; 7];
        row.extend(by_key.get(&(firm, q)).unwrap_or(&nan).map(cell));
        if lead > 0 {
            let mut ahead = q;
            for _ in 0..lead {
                ahead = ahead.next();
            }
            row.extend(by_key.get(&(firm, ahead)).unwrap_or(&nan).map(cell));
        }
        panel_rows.push(row);
    }
    w.put(PANEL, csv_string(&header, &panel_rows)?)?;
    w.put(
        PANEL_REPORT,
        pretty(&json!({"rows": panel_rows.len(), "duplicate_calls": duplicates, "skipped_outcomes": diagnostics.skipped}))?,
    )?;
    w.done(0)
}

/// Read `panel.csv`: `industry` is categorical, every other column after
/// the keys numeric with empty cells missing.
pub fn read_panel_csv(path: &Path) -> Result<PanelDataset, PipelineError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let (Some(fi), Some(qi)) = (header.iter().position(|h| h == "firm_id"), header.iter().position(|h| h == "quarter"))
    else {
        return Err(PipelineError::Data(format!("{}: needs firm_id and quarter columns", path.display())));
    };
    let mut firms = Vec::new();
    let mut periods = Vec::new();
    let mut cols: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for rec in rdr.records() {
        let rec = rec?;
        firms.push(rec[fi].to_string());
        periods.push(rec[qi].to_string());
        for (j, v) in rec.iter().enumerate() {
            cols[j].push(v.to_string());
        }
    }
    let mut panel = PanelDataset::new(firms, periods).map_err(|e| PipelineError::Data(e.to_string()))?;
    for (j, name) in header.iter().enumerate() {
        if j == fi || j == qi {
            continue;
        }
        if name == INDUSTRY {
            let labels = cols[j].iter().map(|v| (!v.is_empty()).then(|| v.clone())).collect();
            panel.add_categorical(name.clone(), labels).map_err(|e| PipelineError::Data(e.to_string()))?;
        } else {
            let values = cols[j]
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    if v.is_empty() {
                        Ok(f64::NAN)
                    } else {
                        v.parse::<f64>()
                            .map_err(|_| PipelineError::Data(format!("{} row {}: {name}={v:?} is not a number", path.display(), i + 2)))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            panel.add_numeric(name.clone(), values).map_err(|e| PipelineError::Data(e.to_string()))?;
        }
    }
    Ok(panel)
}

fn panel_measures<'a>(cfg: &'a PipelineConfig, panel: &PanelDataset) -> Vec<&'a str> {
    let present: BTreeSet<&str> = panel.numeric_names().collect();
    cfg.estimation.measures.iter().map(String::as_str).filter(|m| present.contains(m)).collect()
}

fn base_spec(cfg: &PipelineConfig, outcome: &str, regressors: &[&str], fe: FeSpec) -> RegressionSpec {
    let controls: Vec<&str> = cfg.estimation.controls.iter().map(String::as_str).collect();
    RegressionSpec::new(outcome, regressors)
        .controls(&controls)
        .fe(fe)
        .cluster(cfg.estimation.cluster.as_deref())
        .winsor(cfg.estimation.winsor.map(|[a, b]| (a, b)))
}

fn fe_specs(cfg: &PipelineConfig) -> Result<Vec<FeSpec>, PipelineError> {
    cfg.estimation
        .fe
        .iter()
        .map(|s| s.parse::<FeSpec>().map_err(|e| super::ConfigError::new("estimation.fe", e.to_string()).into()))
        .collect()
}

/// Tallies fits so a stage can fail when none succeeded.
#[derive(Default)]
struct FitCount {
    ok: usize,
    failed: usize,
    first_error: Option<String>,
}

impl FitCount {
    fn failed(&mut self, e: &str) {
        self.failed += 1;
        self.first_error.get_or_insert_with(|| e.to_string());
    }

    fn into_result(self, stage: Stage, w: Writer) -> Result<Written, PipelineError> {
        let mut written = w.done(0)?;
        if self.ok == 0 && self.failed > 0 {
            written.failure = Some(PipelineError::Estimation(format!(
                "every {stage} specification failed; first: {}",
                self.first_error.unwrap_or_default()
            )));
        }
        Ok(written)
    }
}

fn regress(cfg: &PipelineConfig, mut w: Writer) -> Result<Written, PipelineError> {
    let panel = read_panel_csv(&w.out.join(PANEL))?;
    let measures = panel_measures(cfg, &panel);
    let fes = fe_specs(cfg)?;
    let lead = cfg.estimation.lead;
    let family = |prefix: &str| -> Vec<&str> { measures.iter().copied().filter(|m| m.starts_with(prefix)).collect() };
    let tables: [(&str, &str, Vec<(&str, Vec<&str>)>); 3] = [
        (
            "volatility",
            "Risk exposure and future volatility",
            ["implied_vol", "abnormal_vol", "realized_vol"].map(|o| (o, measures.clone())).to_vec(),
        ),
        (
            "activity",
            "Risk exposure and risk-specific activity",
            vec![("lobby_any", family("PRisk")), ("green_patent_any", family("CRisk")), ("ai_patent_any", family("AIRisk"))],
        ),
        ("investment", "Risk exposure and investment", vec![("investment", measures.clone())]),
    ];
    let mut count = FitCount::default();
    for (stem, title, blocks) in tables {
        let mut t = regression_table(&[]);
        for fe in &fes {
            for (outcome, regs) in &blocks {
                let y = lead_name(outcome, lead);
                for m in regs {
                    match panel_regression(&panel, &base_spec(cfg, &y, &[m], fe.clone())) {
                        Ok(res) => {
                            count.ok += 1;
                            t.extend(regression_table(&[(m.to_string(), res)]));
                        }
                        Err(e) => {
                            let msg = format!("fe={fe}: {e}");
                            count.failed(&msg);
                            failure_row(&mut t, m, &y, &msg);
                        }
                    }
                }
            }
        }
        w.table(stem, title, &t)?;
    }
    count.into_result(Stage::Regress, w)
}

fn vardecomp(cfg: &PipelineConfig, mut w: Writer) -> Result<Written, PipelineError> {
    let panel = read_panel_csv(&w.out.join(PANEL))?;
    let mut count = FitCount::default();
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for m in panel_measures(cfg, &panel) {
        match variance_decomposition(&panel, m, INDUSTRY) {
            Ok(d) => {
                count.ok += 1;
                ok.push(d);
            }
            Err(e) => {
                count.failed(&e.to_string());
                failures.push((m, e.to_string()));
            }
        }
    }
    let mut t = decomposition_table(&ok);
    for (m, e) in failures {
        let mut row = vec![format!("error: {m}: {e}")];
        row.resize(t.header.len(), String::new());
        t.push(row);
    }
    w.table("variance_decomposition", "Variance decomposition of risk exposures", &t)?;
    count.into_result(Stage::Vardecomp, w)
}

fn rolling(cfg: &PipelineConfig, mut w: Writer) -> Result<Written, PipelineError> {
    let panel = read_panel_csv(&w.out.join(PANEL))?;
    let measures = panel_measures(cfg, &panel);
    let fe: FeSpec = cfg.rolling.fe.parse().map_err(|e: crate::econometrics::EstimationError| {
        super::ConfigError::new("rolling.fe", e.to_string())
    })?;
    let y = lead_name(&cfg.rolling.outcome, cfg.estimation.lead);
    let mut models: Vec<(String, Vec<&str>)> = measures.iter().map(|m| (format!("A:{m}"), vec![*m])).collect();
    for mode in Mode::ALL {
        let joint: Vec<&str> = RiskType::ALL
            .into_iter()
            .map(|r| measure_name(r, mode))
            .filter_map(|n| measures.iter().copied().find(|m| *m == n))
            .collect();
        if joint.len() > 1 {
            models.push((format!("B:{}", mode.suffix()), joint));
        }
    }
    let mut t = rolling_table("", &[]);
    let mut count = FitCount::default();
    for (label, regs) in &models {
        match rolling_regression(&panel, cfg.rolling.window, &base_spec(cfg, &y, regs, fe.clone())) {
            Ok(rows) => {
                for r in &rows {
                    match &r.error {
                        None => count.ok += 1,
                        Some(e) => count.failed(e),
                    }
                }
                t.extend(rolling_table(label, &rows));
            }
            Err(e) => {
                count.failed(&e.to_string());
                failure_row(&mut t, label, "", &e.to_string());
            }
        }
    }
    w.table("rolling", "Rolling-window regressions", &t)?;
    count.into_result(Stage::Rolling, w)
}

/// Annual exposure per (firm, year) for one measure; zero means excluded.
fn annual_exposures(rows: &[ExposureRow], measure: &str) -> Vec<(String, i32, f64)> {
    let mut by: BTreeMap<(String, i32), Vec<f64>> = BTreeMap::new();
    for r in rows {
        if let Ok(Some(v)) = r.record.get(measure) {
            by.entry((r.record.firm_id.clone(), r.record.fiscal_quarter.year)).or_default().push(v);
        }
    }
    by.into_iter()
        .filter_map(|((f, y), vals)| annualize_exposure(&vals).value().map(|v| (f, y, v)))
        .collect()
}

/// Monthly returns in percent per firm.
fn monthly_percent(returns: &BTreeMap<String, DailySeries>) -> BTreeMap<String, BTreeMap<Month, f64>> {
    returns
        .iter()
        .map(|(f, s)| (f.clone(), monthly_returns(s).into_iter().map(|(m, r)| (m, 100.0 * r)).collect()))
        .collect()
}

/// Monthly characteristics: `firm_id,month,<columns...>`.
fn read_characteristics(cfg: &PipelineConfig) -> Result<BTreeMap<String, BTreeMap<(String, Month), f64>>, PipelineError> {
    let mut out: BTreeMap<String, BTreeMap<(String, Month), f64>> = BTreeMap::new();
    if cfg.paths.characteristics.is_none() {
        return Ok(out);
    }
    let mut rdr = csv::Reader::from_reader(open_input(cfg, "paths.characteristics")?);
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if header.len() < 2 || header[0] != "firm_id" || header[1] != "month" {
        return Err(PipelineError::Data("paths.characteristics: header must start with firm_id,month".into()));
    }
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let month: Month = rec[1]
            .parse()
            .map_err(|e| PipelineError::Data(format!("paths.characteristics row {}: {e}", i + 2)))?;
        for (j, name) in header.iter().enumerate().skip(2) {
            if let Ok(v) = rec[j].trim().parse::<f64>() {
                out.entry(name.clone()).or_default().insert((rec[0].to_string(), month), v);
            }
        }
    }
    Ok(out)
}

fn control_value(
    name: &str,
    firm: &str,
    month: Month,
    rets: Option<&BTreeMap<Month, f64>>,
    chars: &BTreeMap<String, BTreeMap<(String, Month), f64>>,
) -> f64 {
    match name {
        "r01" => rets.and_then(|r| r.get(&month.add(-1))).copied().unwrap_or(f64::NAN),
        "r212" => {
            let Some(r) = rets else { return f64::NAN };
            let mut g = 1.0;
            for k in 2..=12 {
                match r.get(&month.add(-k)) {
                    Some(v) => g *= 1.0 + v / 100.0,
                    None => return f64::NAN,
                }
            }
            100.0 * (g - 1.0)
        }
        other => chars.get(other).and_then(|c| c.get(&(firm.to_string(), month))).copied().unwrap_or(f64::NAN),
    }
}

fn fmb(cfg: &PipelineConfig, mut w: Writer) -> Result<Written, PipelineError> {
    let rows: Vec<ExposureRow> = read_jsonl(&w.out.join(EXPOSURES))?;
    let returns = read_returns_csv(open_input(cfg, "paths.returns")?).map_err(data_err("paths.returns"))?;
    let monthly = monthly_percent(&returns);
    let chars = read_characteristics(cfg)?;
    for c in &cfg.fmb.controls {
        if c != "r01" && c != "r212" && !chars.contains_key(c) {
            return Err(super::ConfigError::new("fmb.controls", format!("no data for control {c}")).into());
        }
    }
    let present = complete_or_partial(&rows, cfg);
    let mut t = fmb_table("", &FmbResult::default());
    let mut count = FitCount::default();
    for m in present {
        let log_name = format!("log_{m}");
        let mut names: Vec<&str> = vec![&log_name];
        names.extend(cfg.fmb.controls.iter().map(String::as_str));
        let mut by_month: BTreeMap<Month, CrossSection> = BTreeMap::new();
        for (firm, year, v) in annual_exposures(&rows, m) {
            let start = Month { year: year + 1, month: 4 };
            let rets = monthly.get(&firm);
            for k in 0..12 {
                let month = start.add(k);
                let s = by_month.entry(month).or_insert_with(|| CrossSection {
                    period: month.to_string(),
                    y: Vec::new(),
                    x: vec![Vec::new(); names.len()],
                });
                s.y.push(rets.and_then(|r| r.get(&month)).copied().unwrap_or(f64::NAN));
                s.x[0].push(v.ln());
                for (j, c) in cfg.fmb.controls.iter().enumerate() {
                    s.x[j + 1].push(control_value(c, &firm, month, rets, &chars));
                }
            }
        }
        let mut sections: Vec<CrossSection> = by_month.into_values().collect();
        if let Some([lo, hi]) = cfg.fmb.trim {
            trim_regressors(&mut sections, lo, hi);
        }
        match fama_macbeth(&sections, &names, cfg.fmb.nw_lag) {
            Ok(res) => {
                count.ok += 1;
                t.extend(fmb_table(m, &res));
            }
            Err(e) => {
                count.failed(&e.to_string());
                failure_row(&mut t, m, "", &e.to_string());
            }
        }
    }
    w.table("fama_macbeth", "Fama-MacBeth regressions of monthly returns on log risk exposure", &t)?;
    count.into_result(Stage::Fmb, w)
}

/// Configured measures that appear on at least one exposure row.
fn complete_or_partial<'a>(rows: &[ExposureRow], cfg: &'a PipelineConfig) -> Vec<&'a str> {
    cfg.estimation
        .measures
        .iter()
        .map(String::as_str)
        .filter(|m| rows.iter().any(|r| r.record.get(m).ok().flatten().is_some()))
        .collect()
}

fn portfolio(cfg: &PipelineConfig, mut w: Writer) -> Result<Written, PipelineError> {
    let rows: Vec<ExposureRow> = read_jsonl(&w.out.join(EXPOSURES))?;
    let returns = read_returns_csv(open_input(cfg, "paths.returns")?).map_err(data_err("paths.returns"))?;
    let factors = read_factors_csv(open_input(cfg, "paths.factors")?)
        .map_err(|e| PipelineError::Data(format!("paths.factors: {e}")))?;
    let flat: Vec<(String, Month, f64)> = monthly_percent(&returns)
        .into_iter()
        .flat_map(|(f, ms)| ms.into_iter().map(move |(m, r)| (f.clone(), m, r)))
        .collect();
    let mut t = alpha_table(&[]);
    let mut count = FitCount::default();
    let ret_header: Vec<String> = ["measure", "month", "Q1", "Q2", "Q3", "Q4", "Q5", "HML"].map(String::from).to_vec();
    let mut ret_rows = Vec::new();
    for m in complete_or_partial(&rows, cfg) {
        let annual = annual_exposures(&rows, m);
        let res = match quintile_portfolios(&annual, &flat, cfg.portfolio.hold_months) {
            Ok(r) => r,
            Err(e) => {
                count.failed(&e.to_string());
                failure_row(&mut t, m, "", &e.to_string());
                continue;
            }
        };
        for (year, e) in &res.formation_errors {
            log::warn!("{m}: exposure year {year} not sorted: {e}");
        }
        for pm in &res.months {
            let mut row = vec![m.to_string(), pm.month.to_string()];
            row.extend(pm.quintiles.iter().map(|q| q.map_or_else(String::new, cell)));
            row.push(pm.high_minus_low().map_or_else(String::new, cell));
            ret_rows.push(row);
        }
        let mut series: Vec<(String, Vec<(Month, f64)>, bool)> =
            (1..=5).map(|q| (format!("Q{q}"), res.series(q), true)).collect();
        series.push(("HML".into(), res.hml_series(), false));
        for (name, s, excess) in series {
            match five_factor_alpha(&s, &factors, excess, cfg.portfolio.nw_lag) {
                Ok(a) => {
                    count.ok += 1;
                    t.extend(alpha_table(&[(m.to_string(), name, a)]));
                }
                Err(e) => {
                    count.failed(&e.to_string());
                    failure_row(&mut t, m, &name, &e.to_string());
                }
            }
        }
    }
    w.put(PORTFOLIO_RETURNS, csv_string(&ret_header, &ret_rows)?)?;
    w.table("portfolio_alphas", "Five-factor alphas of exposure-sorted quintile portfolios", &t)?;
    count.into_result(Stage::Portfolio, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lead_names() {
        assert_eq!(lead_name("implied_vol", 0), "implied_vol");
        assert_eq!(lead_name("implied_vol", 1), "implied_vol_f1");
    }

    #[test]
    fn momentum_controls() {
        let rets: BTreeMap<Month, f64> = (0..14).map(|k| (Month { year: 2020, month: 1 }.add(k), 1.0)).collect();
        let chars = BTreeMap::new();
        let m = Month { year: 2021, month: 2 };
        assert_eq!(control_value("r01", "F", m, Some(&rets), &chars), 1.0);
        let expect = 100.0 * (1.01f64.powi(11) - 1.0);
        assert!((control_value("r212", "F", m, Some(&rets), &chars) - expect).abs() < 1e-12);
        assert!(control_value("r212", "F", Month { year: 2020, month: 6 }, Some(&rets), &chars).is_nan());
    }

    #[test]
    fn annual_exposure_drops_zero_years() {
        let mk = |firm: &str, q: Quarter, v: f64| {
            let mut record = ExposureRecord::zero(firm, q);
            record.p_risk_sum = v;
            ExposureRow { call_id: format!("{firm}{q}"), call_date: q.end_date(), denominator_words: 10, record }
        };
        let rows = vec![
            mk("A", Quarter { year: 2020, quarter: 1 }, 0.01),
            mk("A", Quarter { year: 2020, quarter: 2 }, 0.03),
            mk("B", Quarter { year: 2020, quarter: 1 }, 0.0),
        ];
        assert_eq!(annual_exposures(&rows, "PRiskSum"), vec![("A".to_string(), 2020, 0.02)]);
    }
}
