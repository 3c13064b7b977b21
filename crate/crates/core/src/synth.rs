//! Seeded synthetic data: earnings-call transcripts with a realistic length
//! profile, daily return panels, factor files, and the small bundled
//! fixture the pipeline runs on.

use std::fs;
use std::io;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use crate::llm::provider::StubRule;
use crate::llm::{Mode, RiskType};
use crate::quarter::{Month, Quarter};
use crate::transcript::{Section, SpeakerRole, Transcript, Utterance};

const FILLER: &[&str] = &[
    "revenue", "growth", "quarter", "margin", "customers", "demand", "pricing", "segment", "guidance", "pipeline",
    "operating", "expenses", "inventory", "capacity", "investment", "cash", "flow", "strong", "solid", "we",
    "our", "the", "and", "in", "to", "of", "with", "expect", "continue", "improve", "product", "launch", "market",
    "share", "volume", "orders", "backlog", "supply", "chain", "team", "execution", "year", "over", "momentum",
    "international", "services", "software", "platform", "retail", "industrial", "consumer", "portfolio",
];

const OPENERS: &[&str] = &[
    "Turning", "Looking", "Overall", "Importantly", "Meanwhile", "Additionally", "Next", "Again", "Finally", "So",
    "Now", "Also", "Regarding", "Second", "Third", "First",
];

/// Sentences that carry a risk topic; stub rules key on the quoted phrase.
pub const TOPIC_SENTENCES: &[(RiskType, &str, &str)] = &[
    (RiskType::Political, "tariff", "We expect the new tariff on imported components to raise our input costs next year."),
    (RiskType::Political, "regulation", "The proposed regulation from the agency could delay approvals for our products."),
    (RiskType::Political, "election", "Customers are holding orders until the election outcome becomes clear."),
    (RiskType::Climate, "emissions", "Stricter emissions standards will require upgrades at several of our plants."),
    (RiskType::Climate, "extreme weather", "Extreme weather in the Gulf region disrupted shipments for three weeks."),
    (RiskType::Climate, "carbon", "A carbon price in Europe would add materially to our energy bill."),
    (RiskType::Ai, "artificial intelligence", "Competitors using artificial intelligence are automating parts of our core service."),
    (RiskType::Ai, "machine learning", "We are rebuilding our forecasting tools around machine learning models."),
];

/// Length profile of generated calls, in words.
#[derive(Debug, Clone, PartialEq)]
pub struct CallShape {
    pub executives: (usize, usize),
    pub speech_words: (usize, usize),
    pub qa_units: (usize, usize),
    pub question_words: (usize, usize),
    pub answer_words: (usize, usize),
    pub answers_per_question: (usize, usize),
    /// Chance that an answer is long enough to need splitting.
    pub long_answer_prob: f64,
    pub long_answer_words: (usize, usize),
    /// Chance that a call mentions each risk topic family.
    pub topic_prob: f64,
}

impl Default for CallShape {
    fn default() -> Self {
        Self {
            executives: (2, 4),
            speech_words: (150, 900),
            qa_units: (6, 14),
            question_words: (20, 120),
            answer_words: (50, 350),
            answers_per_question: (1, 3),
            long_answer_prob: 0.005,
            long_answer_words: (1600, 2600),
            topic_prob: 0.5,
        }
    }
}

fn between<R: Rng>(rng: &mut R, range: (usize, usize)) -> usize {
    rng.random_range(range.0..=range.1)
}

fn sentence<R: Rng>(rng: &mut R, words: usize) -> String {
    let mut out = vec![OPENERS.choose(rng).expect("nonempty").to_string()];
    for _ in 1..words.max(2) {
        out.push(FILLER.choose(rng).expect("nonempty").to_string());
    }
    format!("{}.", out.join(" "))
}

/// Roughly `words` words of prose, with topic sentences mixed in.
fn prose<R: Rng>(rng: &mut R, words: usize, topics: &[&str]) -> String {
    let mut parts = Vec::new();
    let mut left = words;
    while left > 0 {
        let k = rng.random_range(8..=22).min(left.max(2));
        parts.push(sentence(rng, k));
        left = left.saturating_sub(k);
    }
    for t in topics {
        let at = rng.random_range(0..=parts.len());
        parts.insert(at, t.to_string());
    }
    parts.join(" ")
}

fn pick_topics<R: Rng>(rng: &mut R, prob: f64) -> Vec<&'static str> {
    let mut out = Vec::new();
    for risk in RiskType::ALL {
        if rng.random_bool(prob) {
            let options: Vec<&str> = TOPIC_SENTENCES.iter().filter(|t| t.0 == risk).map(|t| t.2).collect();
            out.push(*options.choose(rng).expect("nonempty"));
        }
    }
    out
}

/// One synthetic call. With `quiet` no topic sentence appears anywhere.
pub fn synthetic_transcript<R: Rng>(
    rng: &mut R,
    shape: &CallShape,
    call_id: &str,
    firm_id: &str,
    quarter: Quarter,
    call_date: NaiveDate,
    quiet: bool,
) -> Transcript {
    let topics = if quiet { Vec::new() } else { pick_topics(rng, shape.topic_prob) };
    let mut utts = vec![Utterance::new(
        "op",
        SpeakerRole::Operator,
        Section::Presentation,
        "Good day and welcome to the conference call. All lines are in listen-only mode.",
    )];
    let n_exec = between(rng, shape.executives);
    let execs: Vec<String> = (0..n_exec).map(|i| format!("{firm_id}-exec{i}")).collect();
    for (i, e) in execs.iter().enumerate() {
        let own: Vec<&str> = topics.iter().copied().filter(|_| i == 0 || rng.random_bool(0.3)).collect();
        let words = between(rng, shape.speech_words);
        utts.push(Utterance::new(e, SpeakerRole::Executive, Section::Presentation, prose(rng, words, &own)));
    }
    utts.push(Utterance::new("op", SpeakerRole::Operator, Section::Qa, "We will now begin the question-and-answer session."));
    for q in 0..between(rng, shape.qa_units) {
        utts.push(Utterance::new("op", SpeakerRole::Operator, Section::Qa, "Our next question comes from the line of an analyst."));
        let topic: Vec<&str> = topics.iter().copied().filter(|_| rng.random_bool(0.15)).collect();
        let words = between(rng, shape.question_words);
        utts.push(Utterance::new(format!("analyst{q}"), SpeakerRole::Analyst, Section::Qa, prose(rng, words, &topic)));
        for _ in 0..between(rng, shape.answers_per_question) {
            let words = if rng.random_bool(shape.long_answer_prob) {
                between(rng, shape.long_answer_words)
            } else {
                between(rng, shape.answer_words)
            };
            let speaker = execs.choose(rng).expect("at least one executive");
            utts.push(Utterance::new(speaker, SpeakerRole::Executive, Section::Qa, prose(rng, words, &topic)));
        }
    }
    utts.push(Utterance::new("op", SpeakerRole::Operator, Section::Qa, "This concludes today's call. You may now disconnect."));
    Transcript {
        call_id: call_id.to_string(),
        firm_id: firm_id.to_string(),
        fiscal_quarter: quarter,
        call_date,
        language: None,
        utterances: utts,
    }
}

/// `n` calls spread over firms and quarters starting at 2019Q1.
pub fn synthetic_corpus(seed: u64, n: usize, shape: &CallShape) -> Vec<Transcript> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = Quarter { year: 2019, quarter: 1 };
    (0..n)
        .map(|i| {
            if i > 0 && i % 25 == 0 {
                q = q.next();
            }
            let date = q.end_date() + chrono::Duration::days(30 + (i % 15) as i64);
            synthetic_transcript(&mut rng, shape, &format!("call{i:04}"), &format!("F{:03}", i % 25), q, date, false)
        })
        .collect()
}

/// The JSONL input record for a transcript.
pub fn transcript_record(t: &Transcript) -> serde_json::Value {
    let turns: Vec<serde_json::Value> = t
        .utterances
        .iter()
        .map(|u| json!({"speaker_id": u.speaker_id, "role": u.speaker_role, "section": u.section, "text": u.text}))
        .collect();
    let mut rec = json!({
        "call_id": t.call_id,
        "firm_id": t.firm_id,
        "fiscal_quarter": t.fiscal_quarter.to_string(),
        "call_date": t.call_date.format("%Y-%m-%d").to_string(),
        "turns": turns,
    });
    if let Some(lang) = &t.language {
        rec["language"] = json!(lang);
    }
    rec
}

/// Weekdays from `start` through `end`.
pub fn business_days(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    start
        .iter_days()
        .take_while(|d| *d <= end)
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .collect()
}

/// Stub answers used by the fixture: one summary and one assessment
/// sentence per topic phrase.
pub fn fixture_stub_rules() -> Vec<StubRule> {
    let mut rules = Vec::new();
    for (risk, phrase, _) in TOPIC_SENTENCES {
        for mode in Mode::ALL {
            let respond = match mode {
                Mode::Summary => format!("Management mentions {phrase} as a source of {risk} risk for the business."),
                Mode::Assessment => format!(
                    "The discussion of {phrase} suggests a moderate {risk} risk exposure that could affect costs and demand over the next year."
                ),
            };
            rules.push(StubRule { contains: phrase.to_string(), respond, risk_type: Some(*risk), mode: Some(mode) });
        }
    }
    rules
}

pub const FIXTURE_SEED: u64 = 20240611;
pub const FIXTURE_FIRMS: usize = 5;

fn fixture_quarters() -> Vec<Quarter> {
    let first = Quarter { year: 2020, quarter: 3 };
    (0..4).scan(first, |q, _| {
        let cur = *q;
        *q = q.next();
        Some(cur)
    }).collect()
}

fn write(dir: &Path, name: &str, body: &str) -> io::Result<()> {
    fs::write(dir.join(name), body)
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

/// Write the 20-call fixture (5 firms × 4 quarters, 2 industries) and its
/// market, fundamentals, activity, factor and benchmark files into `dir`.
pub fn write_fixture(dir: &Path, seed: u64) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = CallShape { qa_units: (3, 6), executives: (2, 3), long_answer_prob: 0.03, topic_prob: 0.85, ..CallShape::default() };
    let firms: Vec<String> = (1..=FIXTURE_FIRMS).map(|i| format!("F{i:02}")).collect();
    let quarters = fixture_quarters();

    let mut corpus = String::new();
    let mut call_dates = Vec::new();
    for (fi, firm) in firms.iter().enumerate() {
        for (qi, q) in quarters.iter().enumerate() {
            let date = q.end_date() + chrono::Duration::days(28 + ((fi * 3 + qi * 5) % 14) as i64);
            // Two calls carry no risk content at all.
            let quiet = (fi, qi) == (1, 2) || (fi, qi) == (4, 0);
            let t = synthetic_transcript(&mut rng, &shape, &format!("{firm}-{q}"), firm, *q, date, quiet);
            corpus.push_str(&serde_json::to_string(&transcript_record(&t)).expect("json value"));
            corpus.push('\n');
            call_dates.push((firm.clone(), *q, date));
        }
    }
    write(dir, "corpus.jsonl", &corpus)?;
    write(dir, "stub_rules.json", &(serde_json::to_string_pretty(&fixture_stub_rules()).expect("rules") + "\n"))?;

    let days = business_days(NaiveDate::from_ymd_opt(2019, 6, 3).unwrap(), NaiveDate::from_ymd_opt(2023, 3, 31).unwrap());
    let mkt_dist = Normal::new(0.0004, 0.011).expect("valid normal");
    let noise = Normal::new(0.0, 1.0).expect("valid normal");
    let market: Vec<f64> = days.iter().map(|_| mkt_dist.sample(&mut rng)).collect();
    let mut mcsv = String::from("date,mkt_ret\n");
    for (d, m) in days.iter().zip(&market) {
        mcsv.push_str(&format!("{d},{}\n", f6(*m)));
    }
    write(dir, "market.csv", &mcsv)?;

    let mut rcsv = String::from("firm_id,date,ret\n");
    for (fi, firm) in firms.iter().enumerate() {
        let beta = 0.7 + 0.15 * fi as f64;
        let sigma = 0.012 + 0.002 * fi as f64;
        let calls: Vec<NaiveDate> = call_dates.iter().filter(|c| &c.0 == firm).map(|c| c.2).collect();
        for (d, m) in days.iter().zip(&market) {
            let bump = if calls.iter().any(|c| (*d - *c).num_days() >= 0 && (*d - *c).num_days() <= 45) { 1.4 } else { 1.0 };
            let r = 0.0002 + beta * m + sigma * bump * noise.sample(&mut rng);
            rcsv.push_str(&format!("{firm},{d},{}\n", f6(r)));
        }
    }
    write(dir, "returns.csv", &rcsv)?;

    let mut fund = String::from("firm_id,quarter,capex,ppe_initial,iv_90d_atm,industry,total_assets\n");
    let mut activity = String::from("firm_id,quarter,lobby_amount,green_patents,ai_patents\n");
    let mut bench = String::from("firm_id,fiscal_quarter,PRiskBigram,CRiskBigram\n");
    let fund_quarters: Vec<Quarter> = quarters.iter().copied().chain([quarters[3].next()]).collect();
    for (fi, firm) in firms.iter().enumerate() {
        let industry = if fi < 3 { "28" } else { "73" };
        let ppe = 500.0 + 150.0 * fi as f64;
        let assets = 2000.0 * (1.0 + fi as f64);
        for (qi, q) in fund_quarters.iter().enumerate() {
            let capex = ppe * rng.random_range(0.06..0.14);
            let iv = 0.25 + 0.03 * fi as f64 + 0.02 * rng.random_range(-1.0..1.0);
            let ppe_cell = if qi == 0 { f6(ppe) } else { String::new() };
            let ta = assets * (1.0 + 0.02 * qi as f64) * rng.random_range(0.97..1.03);
            fund.push_str(&format!("{firm},{q},{},{ppe_cell},{},{industry},{}\n", f6(capex), f6(iv), f6(ta)));
            // Firm F05 has no activity rows; unmatched quarters count as zero.
            if fi < 4 && qi < 4 {
                let lobby = if rng.random_bool(0.5) { rng.random_range(10_000.0..250_000.0) } else { 0.0 };
                activity.push_str(&format!(
                    "{firm},{q},{},{},{}\n",
                    f6(lobby),
                    rng.random_range(0..3),
                    rng.random_range(0..2)
                ));
            }
            if qi < 4 {
                bench.push_str(&format!("{firm},{q},{},{}\n", f6(rng.random_range(0.0..3.0)), f6(rng.random_range(0.0..2.0))));
            }
        }
    }
    write(dir, "fundamentals.csv", &fund)?;
    write(dir, "activity.csv", &activity)?;
    write(dir, "benchmarks.csv", &bench)?;

    let mut ppi = String::from("month,ppi_change\n");
    let mut m = Month { year: 2020, month: 7 };
    while m <= (Month { year: 2021, month: 9 }) {
        ppi.push_str(&format!("{m},{}\n", f6(rng.random_range(-0.002..0.006))));
        m = m.next();
    }
    write(dir, "ppi.csv", &ppi)?;

    let mut factors = String::from("date,MKT_RF,SMB,HML,RMW,CMA,RF\n");
    let mut m = Month { year: 2019, month: 6 };
    while m <= (Month { year: 2023, month: 3 }) {
        let mut d = |s: f64| f6(s * noise.sample(&mut rng));
        let row = format!("{},{},{},{},{},{}", d(4.5), d(2.5), d(3.0), d(2.0), d(1.8), f6(0.01 + 0.05 * (m.year - 2019) as f64));
        factors.push_str(&format!("{:04}{:02},{row}\n", m.year, m.month));
        m = m.next();
    }
    write(dir, "factors.csv", &factors)?;

    write(dir, "config.toml", FIXTURE_CONFIG)?;
    Ok(())
}

/// Pipeline configuration shipped with the fixture.
pub const FIXTURE_CONFIG: &str = r#"# Pipeline configuration for the bundled synthetic fixture.
seed = 20240611
output_dir = "out"

[paths]
corpus = "corpus.jsonl"
returns = "returns.csv"
market = "market.csv"
fundamentals = "fundamentals.csv"
activity = "activity.csv"
factors = "factors.csv"
ppi = "ppi.csv"
benchmarks = "benchmarks.csv"

[provider]
kind = "stub"
stub_rules = "stub_rules.json"
model_id = "gpt-3.5-turbo-0125"
parallelism = 4

[chunking]
input_budget = 2000
min_tokens = 50

[estimation]
winsor = [0.01, 0.99]
fe = ["time", "time_industry", "time_x_industry"]
controls = ["log_assets"]
cluster = "firm"

[rolling]
window = 2
fe = "time"
outcome = "implied_vol"

[fmb]
controls = []
trim = [0.01, 0.99]
nw_lag = 3

[portfolio]
hold_months = 12
nw_lag = 3
"#;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::{chunk_transcript, ChunkOrigin, ChunkParams};

    #[test]
    fn corpus_is_seeded() {
        let a = synthetic_corpus(3, 5, &CallShape::default());
        let b = synthetic_corpus(3, 5, &CallShape::default());
        assert_eq!(a, b);
        assert_ne!(a, synthetic_corpus(4, 5, &CallShape::default()));
    }

    #[test]
    fn overflow_is_rare() {
        let corpus = synthetic_corpus(1, 100, &CallShape::default());
        let chunks: Vec<_> = corpus.iter().flat_map(|t| chunk_transcript(t, ChunkParams::default())).collect();
        let overflow = chunks.iter().filter(|c| c.origin == ChunkOrigin::OverflowSplit).count();
        assert!((overflow as f64) < 0.03 * chunks.len() as f64, "{overflow}/{}", chunks.len());
        assert!(chunks.iter().any(|c| c.origin == ChunkOrigin::QaGroup));
    }

    #[test]
    fn records_round_trip() {
        let t = &synthetic_corpus(9, 1, &CallShape::default())[0];
        let line = serde_json::to_string(&transcript_record(t)).unwrap();
        assert_eq!(&crate::transcript::parse_transcript(&line, 1).unwrap(), t);
    }

    #[test]
    fn weekdays_only() {
        let d = business_days(NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(), NaiveDate::from_ymd_opt(2021, 1, 10).unwrap());
        assert_eq!(d.len(), 6);
    }
}
