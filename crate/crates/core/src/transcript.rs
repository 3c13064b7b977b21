//! Transcript ingestion and token-budgeted chunking.
//!
//! A call is parsed from one JSONL record into speaker-attributed
//! [`Utterance`]s, then split into [`Chunk`]s that fit the model's input
//! budget. Packing respects speech boundaries: a single executive's
//! contiguous presentation speech is never split across chunks, and each
//! analyst question travels with all of its answers. Only units that exceed
//! the budget on their own are broken up, at sentence boundaries.

use std::fmt;
use std::io::BufRead;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::quarter::Quarter;

pub const DEFAULT_INPUT_BUDGET: usize = 2000;
pub const DEFAULT_MIN_TOKENS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeakerRole {
    Executive,
    Analyst,
    Operator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Presentation,
    Qa,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker_id: String,
    pub speaker_role: SpeakerRole,
    pub section: Section,
    pub text: String,
    pub token_count: usize,
}

impl Utterance {
    pub fn new(speaker_id: impl Into<String>, role: SpeakerRole, section: Section, text: impl Into<String>) -> Self {
        let text = text.into();
        let token_count = count_tokens(&text);
        Self { speaker_id: speaker_id.into(), speaker_role: role, section, text, token_count }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub call_id: String,
    pub firm_id: String,
    pub fiscal_quarter: Quarter,
    pub call_date: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    pub utterances: Vec<Utterance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkOrigin {
    Presentation,
    Qa,
    QaGroup,
    OverflowSplit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub source_call_id: String,
    pub chunk_index: usize,
    pub origin: ChunkOrigin,
    pub token_count: usize,
    pub text: String,
    /// Indices into the source transcript's utterances that contributed text.
    #[serde(skip)]
    pub utterances: Vec<usize>,
}

/// Where a record failed to parse, and why.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    /// 1-based line number within the corpus file.
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    InvalidJson(String),
    MissingField(String),
    InvalidField { field: String, reason: String },
    UnknownLabel { field: String, value: String },
    EmptyText { turn: usize },
    SectionOrder { turn: usize },
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidJson(e) => write!(f, "invalid JSON: {e}"),
            Self::MissingField(name) => write!(f, "missing field {name}"),
            Self::InvalidField { field, reason } => write!(f, "invalid field {field}: {reason}"),
            Self::UnknownLabel { field, value } => write!(f, "unknown {field} label {value:?}"),
            Self::EmptyText { turn } => write!(f, "turn {turn} has empty text"),
            Self::SectionOrder { turn } => write!(f, "turn {turn} is a presentation turn after the Q&A began"),
        }
    }
}

/// Words × 4/3, rounded up.
pub fn count_tokens(text: &str) -> usize {
    tokens_for_words(text.split_whitespace().count())
}

fn tokens_for_words(words: usize) -> usize {
    (4 * words).div_ceil(3)
}

/// Largest word count whose token estimate fits in `budget`.
fn max_words_for_budget(budget: usize) -> usize {
    3 * budget / 4
}

fn str_field<'a>(obj: &'a serde_json::Map<String, Value>, name: &str, line: usize) -> Result<&'a str, ParseError> {
    match obj.get(name) {
        None | Some(Value::Null) => Err(ParseError { line, kind: ParseErrorKind::MissingField(name.to_string()) }),
        Some(Value::String(s)) => Ok(s),
        Some(other) => Err(ParseError {
            line,
            kind: ParseErrorKind::InvalidField { field: name.to_string(), reason: format!("expected string, got {other}") },
        }),
    }
}

/// Parse one JSONL record. `line` is only used for error reporting.
pub fn parse_transcript(record: &str, line: usize) -> Result<Transcript, ParseError> {
    let value: Value = serde_json::from_str(record)
        .map_err(|e| ParseError { line, kind: ParseErrorKind::InvalidJson(e.to_string()) })?;
    let obj = value.as_object().ok_or(ParseError {
        line,
        kind: ParseErrorKind::InvalidJson("record is not an object".into()),
    })?;

    let call_id = str_field(obj, "call_id", line)?.to_string();
    let firm_id = str_field(obj, "firm_id", line)?.to_string();
    let fq = str_field(obj, "fiscal_quarter", line)?;
    let fiscal_quarter: Quarter = fq.parse().map_err(|e: crate::quarter::QuarterParseError| ParseError {
        line,
        kind: ParseErrorKind::InvalidField { field: "fiscal_quarter".into(), reason: e.to_string() },
    })?;
    let cd = str_field(obj, "call_date", line)?;
    let call_date = NaiveDate::parse_from_str(cd, "%Y-%m-%d").map_err(|e| ParseError {
        line,
        kind: ParseErrorKind::InvalidField { field: "call_date".into(), reason: format!("{cd:?}: {e}") },
    })?;
    let language = match obj.get("language") {
        None | Some(Value::Null) => None,
        Some(_) => Some(str_field(obj, "language", line)?.to_string()),
    };

    let turns = match obj.get("turns") {
        None | Some(Value::Null) => {
            return Err(ParseError { line, kind: ParseErrorKind::MissingField("turns".into()) });
        }
        Some(Value::Array(turns)) => turns,
        Some(_) => {
            return Err(ParseError {
                line,
                kind: ParseErrorKind::InvalidField { field: "turns".into(), reason: "expected array".into() },
            });
        }
    };

    let mut utterances = Vec::with_capacity(turns.len());
    let mut seen_qa = false;
    for (i, turn) in turns.iter().enumerate() {
        let t = turn.as_object().ok_or(ParseError {
            line,
            kind: ParseErrorKind::InvalidField { field: format!("turns[{i}]"), reason: "expected object".into() },
        })?;
        let speaker_id = str_field(t, "speaker_id", line)?;
        let role = str_field(t, "role", line)?;
        let section = str_field(t, "section", line)?;
        let text = str_field(t, "text", line)?;

        let speaker_role = match role {
            "executive" => SpeakerRole::Executive,
            "analyst" => SpeakerRole::Analyst,
            "operator" => SpeakerRole::Operator,
            other => {
                return Err(ParseError {
                    line,
                    kind: ParseErrorKind::UnknownLabel { field: "role".into(), value: other.into() },
                })
            }
        };
        let section = match section {
            "presentation" => Section::Presentation,
            "qa" => Section::Qa,
            other => {
                return Err(ParseError {
                    line,
                    kind: ParseErrorKind::UnknownLabel { field: "section".into(), value: other.into() },
                })
            }
        };
        if text.trim().is_empty() {
            return Err(ParseError { line, kind: ParseErrorKind::EmptyText { turn: i } });
        }
        match section {
            Section::Qa => seen_qa = true,
            Section::Presentation if seen_qa => {
                return Err(ParseError { line, kind: ParseErrorKind::SectionOrder { turn: i } });
            }
            Section::Presentation => {}
        }
        utterances.push(Utterance::new(speaker_id, speaker_role, section, text));
    }

    Ok(Transcript { call_id, firm_id, fiscal_quarter, call_date, language, utterances })
}

/// Result of reading a whole JSONL corpus.
#[derive(Debug, Default)]
pub struct Corpus {
    pub transcripts: Vec<Transcript>,
    pub errors: Vec<ParseError>,
    /// Records skipped because their `language` was present and not `en`.
    pub skipped_language: usize,
    /// Records whose call_id repeated an earlier one.
    pub duplicate_ids: Vec<String>,
}

/// Parse every line of a JSONL corpus. Bad records are collected, not fatal.
pub fn parse_corpus<R: BufRead>(reader: R) -> std::io::Result<Corpus> {
    let mut corpus = Corpus::default();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_transcript(&line, i + 1) {
            Ok(t) => {
                if t.language.as_deref().is_some_and(|l| !l.eq_ignore_ascii_case("en")) {
                    corpus.skipped_language += 1;
                    continue;
                }
                if !seen.insert(t.call_id.clone()) {
                    corpus.duplicate_ids.push(t.call_id);
                    continue;
                }
                corpus.transcripts.push(t);
            }
            Err(e) => corpus.errors.push(e),
        }
    }
    if corpus.skipped_language > 0 {
        log::info!("skipped {} non-English calls", corpus.skipped_language);
    }
    Ok(corpus)
}

/// Split text into sentences: a `.`, `?` or `!` followed by whitespace and
/// an uppercase letter (or the end of text) closes a sentence. Returned
/// slices are trimmed and non-empty.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if matches!(c, '.' | '?' | '!') {
            let mut j = i + 1;
            while j < chars.len() && chars[j].1.is_whitespace() {
                j += 1;
            }
            let end = pos + c.len_utf8();
            let had_space = j > i + 1;
            if j == chars.len() || (had_space && chars[j].1.is_uppercase()) {
                let s = text[start..end].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = end;
                i = j;
                continue;
            }
        }
        i += 1;
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct ChunkParams {
    pub input_budget: usize,
    pub min_tokens: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        Self { input_budget: DEFAULT_INPUT_BUDGET, min_tokens: DEFAULT_MIN_TOKENS }
    }
}

struct Unit {
    utterances: Vec<usize>,
    origin: ChunkOrigin,
}

struct Draft {
    utterances: Vec<usize>,
    origin: ChunkOrigin,
    text: String,
    token_count: usize,
}

/// Group contiguous presentation speech by the same speaker.
fn presentation_speeches(t: &Transcript, kept: &[usize]) -> Vec<Vec<usize>> {
    let mut speeches: Vec<Vec<usize>> = Vec::new();
    for &i in kept.iter().filter(|&&i| t.utterances[i].section == Section::Presentation) {
        match speeches.last_mut() {
            Some(last) if t.utterances[*last.last().unwrap()].speaker_id == t.utterances[i].speaker_id => {
                last.push(i)
            }
            _ => speeches.push(vec![i]),
        }
    }
    speeches
}

/// One analyst question plus every consecutive answer to it.
fn qa_units(t: &Transcript, kept: &[usize]) -> Vec<Unit> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut has_answer = false;
    for &i in kept.iter().filter(|&&i| t.utterances[i].section == Section::Qa) {
        let is_question = t.utterances[i].speaker_role == SpeakerRole::Analyst;
        if groups.is_empty() || (is_question && has_answer) {
            groups.push(Vec::new());
            has_answer = false;
        }
        if !is_question {
            has_answer = true;
        }
        groups.last_mut().unwrap().push(i);
    }
    groups
        .into_iter()
        .map(|utterances| {
            let mut answerers: Vec<&str> = utterances
                .iter()
                .map(|&i| &t.utterances[i])
                .filter(|u| u.speaker_role == SpeakerRole::Executive)
                .map(|u| u.speaker_id.as_str())
                .collect();
            answerers.sort_unstable();
            answerers.dedup();
            let origin = if answerers.len() > 1 { ChunkOrigin::QaGroup } else { ChunkOrigin::Qa };
            Unit { utterances, origin }
        })
        .collect()
}

fn unit_tokens(t: &Transcript, utterances: &[usize]) -> usize {
    utterances.iter().map(|&i| t.utterances[i].token_count).sum()
}

fn whole_draft(t: &Transcript, utterances: Vec<usize>, origin: ChunkOrigin) -> Draft {
    let text = utterances.iter().map(|&i| t.utterances[i].text.trim()).collect::<Vec<_>>().join("\n");
    let token_count = unit_tokens(t, &utterances);
    Draft { utterances, origin, text, token_count }
}

/// Break an oversized unit into budget-sized pieces, filling greedily by
/// sentence. A sentence that alone exceeds the budget is cut at word
/// boundaries.
fn split_overflow(t: &Transcript, utterances: &[usize], budget: usize) -> Vec<Draft> {
    let max_words = max_words_for_budget(budget).max(1);

    // (utterance index, text piece, words)
    let mut items: Vec<(usize, String, usize)> = Vec::new();
    for &ui in utterances {
        for sentence in split_sentences(&t.utterances[ui].text) {
            let words: Vec<&str> = sentence.split_whitespace().collect();
            if words.len() <= max_words {
                items.push((ui, sentence.to_string(), words.len()));
            } else {
                for run in words.chunks(max_words) {
                    items.push((ui, run.join(" "), run.len()));
                }
            }
        }
    }

    struct Piece {
        fragments: Vec<(usize, Vec<String>, usize)>,
        closed_tokens: usize,
    }
    impl Piece {
        fn tokens_with(&self, ui: usize, words: usize) -> usize {
            match self.fragments.last() {
                Some((last, _, w)) if *last == ui => self.closed_tokens + tokens_for_words(w + words),
                Some((_, _, w)) => self.closed_tokens + tokens_for_words(*w) + tokens_for_words(words),
                None => tokens_for_words(words),
            }
        }
        fn push(&mut self, ui: usize, text: String, words: usize) {
            match self.fragments.last_mut() {
                Some((last, texts, w)) if *last == ui => {
                    texts.push(text);
                    *w += words;
                }
                Some((_, _, w)) => {
                    self.closed_tokens += tokens_for_words(*w);
                    self.fragments.push((ui, vec![text], words));
                }
                None => self.fragments.push((ui, vec![text], words)),
            }
        }
        fn finish(self) -> Draft {
            let token_count = self.fragments.iter().map(|(_, _, w)| tokens_for_words(*w)).sum();
            let mut us: Vec<usize> = self.fragments.iter().map(|(ui, _, _)| *ui).collect();
            us.dedup();
            let text = self.fragments.iter().map(|(_, texts, _)| texts.join(" ")).collect::<Vec<_>>().join("\n");
            Draft { utterances: us, origin: ChunkOrigin::OverflowSplit, text, token_count }
        }
    }

    let mut pieces = Vec::new();
    let mut current = Piece { fragments: Vec::new(), closed_tokens: 0 };
    for (ui, text, words) in items {
        if !current.fragments.is_empty() && current.tokens_with(ui, words) > budget {
            pieces.push(std::mem::replace(&mut current, Piece { fragments: Vec::new(), closed_tokens: 0 }).finish());
        }
        current.push(ui, text, words);
    }
    if !current.fragments.is_empty() {
        pieces.push(current.finish());
    }
    pieces
}

/// Split a transcript into input chunks.
///
/// Operator turns are excluded. Presentation speeches are packed greedily
/// into chunks, starting a new chunk whenever the next whole speech would
/// overflow. Each Q&A unit becomes one chunk. Units larger than the budget
/// are split into `OverflowSplit` pieces. Chunks under `min_tokens` are
/// dropped and the survivors indexed from zero.
pub fn chunk_transcript(t: &Transcript, params: ChunkParams) -> Vec<Chunk> {
    let budget = params.input_budget;
    let kept: Vec<usize> = (0..t.utterances.len())
        .filter(|&i| t.utterances[i].speaker_role != SpeakerRole::Operator)
        .collect();

    let mut drafts: Vec<Draft> = Vec::new();

    let mut current: Vec<usize> = Vec::new();
    let mut current_tokens = 0;
    for speech in presentation_speeches(t, &kept) {
        let tokens = unit_tokens(t, &speech);
        if tokens > budget {
            if !current.is_empty() {
                drafts.push(whole_draft(t, std::mem::take(&mut current), ChunkOrigin::Presentation));
                current_tokens = 0;
            }
            drafts.extend(split_overflow(t, &speech, budget));
        } else if current_tokens + tokens > budget {
            drafts.push(whole_draft(t, std::mem::replace(&mut current, speech), ChunkOrigin::Presentation));
            current_tokens = tokens;
        } else {
            current.extend(speech);
            current_tokens += tokens;
        }
    }
    if !current.is_empty() {
        drafts.push(whole_draft(t, current, ChunkOrigin::Presentation));
    }

    for unit in qa_units(t, &kept) {
        if unit_tokens(t, &unit.utterances) > budget {
            drafts.extend(split_overflow(t, &unit.utterances, budget));
        } else {
            drafts.push(whole_draft(t, unit.utterances, unit.origin));
        }
    }

    drafts
        .into_iter()
        .filter(|d| d.token_count >= params.min_tokens)
        .enumerate()
        .map(|(chunk_index, d)| Chunk {
            source_call_id: t.call_id.clone(),
            chunk_index,
            origin: d.origin,
            token_count: d.token_count,
            text: d.text,
            utterances: d.utterances,
        })
        .collect()
}
