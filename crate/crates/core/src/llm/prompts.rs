use serde::{Deserialize, Serialize};

use super::{Mode, RiskType};
use crate::transcript::Chunk;

/// Marker that precedes the transcript text inside every prompt.
pub const EXCERPT_MARKER: &str = "Excerpt:\n";

/// Summary prompts restrict the model to the excerpt.
pub const NO_EXTERNAL_KNOWLEDGE: &str =
    "Use only the information contained in the excerpt. Ignore any external information sources, \
     including anything you may know about the company from elsewhere.";

const CONTEXT: &str = "The following text is excerpted from an earnings call transcript.";

const ASSESSMENT_INSTRUCTION: &str =
    "Assess the company's exposure to this risk. Combine what the excerpt says with your own \
     judgment about the business, and explain your reasoning in narrative form.";

const SUMMARY_INSTRUCTION: &str = "Summarize what the excerpt says about the company's exposure to this risk.";

const NA_INSTRUCTION: &str =
    "If the excerpt contains no information relevant to this risk, respond with exactly \"NA\" and nothing else.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub risk_type: RiskType,
    pub mode: Mode,
    pub preamble: String,
    pub risk_explanation: String,
    pub sample_questions: Vec<String>,
}

impl PromptSpec {
    /// Built-in template for a (risk, mode) pair.
    pub fn default_for(risk_type: RiskType, mode: Mode) -> Self {
        let preamble = match mode {
            Mode::Summary => format!("{CONTEXT} {SUMMARY_INSTRUCTION} {NO_EXTERNAL_KNOWLEDGE}"),
            Mode::Assessment => format!("{CONTEXT} {ASSESSMENT_INSTRUCTION}"),
        };
        let (explanation, questions): (&str, &[&str]) = match risk_type {
            RiskType::Political => (
                "Political risk is uncertainty about government policy, regulation, elections, trade \
                 policy, taxation and geopolitical events that could change the company's costs, \
                 revenues or operating conditions.",
                &[
                    "Is the company likely to be affected by a new regulation or a change in existing rules?",
                    "Does management discuss tariffs, trade disputes, sanctions or changes in tax policy?",
                    "Are elections, government spending decisions or political instability mentioned as sources of uncertainty?",
                    "Does the company lobby or otherwise respond to pending legislation?",
                ],
            ),
            RiskType::Climate => (
                "Climate risk covers physical risks such as extreme weather, floods, droughts and rising \
                 temperatures, and transition risks such as environmental policy changes, carbon pricing, \
                 emissions rules and shifts in demand toward low-carbon products.",
                &[
                    "Could the company's operations or supply chain be disrupted by extreme weather?",
                    "Is the company exposed to carbon taxes, emissions limits or other environmental policy changes?",
                    "Does management discuss renewable energy, electrification or green technology investments?",
                    "Are customers or investors pressuring the company on sustainability?",
                ],
            ),
            RiskType::Ai => (
                "AI risk is the exposure of the company's business to artificial intelligence: whether its \
                 primary operations could be replaced or assisted by AI, whether competitors using AI \
                 threaten its position, and whether the business depends on AI technologies.",
                &[
                    "Could the company's core products or services be replaced or assisted by AI?",
                    "Does the business depend on AI technologies, data or machine learning capabilities?",
                    "Does management discuss automation, generative AI or AI-driven competition?",
                    "Is the company investing in AI talent, infrastructure or partnerships?",
                ],
            ),
        };
        Self {
            risk_type,
            mode,
            preamble,
            risk_explanation: explanation.split_whitespace().collect::<Vec<_>>().join(" "),
            sample_questions: questions.iter().map(|q| q.to_string()).collect(),
        }
    }
}

/// First line of every prompt; lets stub rules and logs identify the task.
pub fn task_header(risk_type: RiskType, mode: Mode) -> String {
    format!("Task: {risk_type} risk {mode}")
}

/// Assemble the prompt. Chunk text is appended verbatim after
/// [`EXCERPT_MARKER`]; nothing in it is interpreted.
pub fn build_prompt(chunk: &Chunk, spec: &PromptSpec) -> String {
    let mut p = String::with_capacity(chunk.text.len() + 1024);
    p.push_str(&task_header(spec.risk_type, spec.mode));
    p.push_str("\n\n");
    p.push_str(&spec.preamble);
    p.push_str("\n\nRisk definition: ");
    p.push_str(&spec.risk_explanation);
    p.push_str("\n\nQuestions to consider:\n");
    for q in &spec.sample_questions {
        p.push_str("- ");
        p.push_str(q);
        p.push('\n');
    }
    p.push('\n');
    p.push_str(NA_INSTRUCTION);
    p.push_str("\n\n");
    p.push_str(EXCERPT_MARKER);
    p.push_str(&chunk.text);
    p
}

/// The transcript text of a prompt built by [`build_prompt`], or the whole
/// prompt when it carries no excerpt marker.
pub fn excerpt_of(prompt: &str) -> &str {
    prompt.rsplit_once(EXCERPT_MARKER).map_or(prompt, |(_, e)| e)
}

/// Risk type and mode named by the prompt's task header, if any.
pub fn task_of(prompt: &str) -> Option<(RiskType, Mode)> {
    let header = prompt.lines().next()?.strip_prefix("Task: ")?;
    let (risk, mode) = header.split_once(" risk ")?;
    Some((risk.parse().ok()?, mode.parse().ok()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::ChunkOrigin;

    fn chunk(text: &str) -> Chunk {
        Chunk {
            source_call_id: "c".into(),
            chunk_index: 0,
            origin: ChunkOrigin::Qa,
            token_count: 60,
            text: text.into(),
            utterances: vec![],
        }
    }

    #[test]
    fn deterministic() {
        let spec = PromptSpec::default_for(RiskType::Climate, Mode::Assessment);
        let c = chunk("Storms closed two plants.");
        assert_eq!(build_prompt(&c, &spec), build_prompt(&c, &spec));
    }

    #[test]
    fn summary_forbids_outside_knowledge_assessment_does_not() {
        let c = chunk("Text.");
        let s = build_prompt(&c, &PromptSpec::default_for(RiskType::Political, Mode::Summary));
        let a = build_prompt(&c, &PromptSpec::default_for(RiskType::Political, Mode::Assessment));
        assert!(s.contains(NO_EXTERNAL_KNOWLEDGE));
        assert!(!a.contains(NO_EXTERNAL_KNOWLEDGE));
        assert!(a.contains("narrative"));
        for p in [&s, &a] {
            assert!(p.contains("excerpted from an earnings call transcript"));
            assert!(p.contains("\"NA\""));
        }
    }

    #[test]
    fn braces_pass_through() {
        let text = "Guidance is {low} to {high} and {{escaped}} {0} %s $x";
        let p = build_prompt(&chunk(text), &PromptSpec::default_for(RiskType::Ai, Mode::Summary));
        assert!(p.ends_with(text));
        assert_eq!(excerpt_of(&p), text);
    }

    #[test]
    fn header_roundtrip() {
        for r in RiskType::ALL {
            for m in Mode::ALL {
                let p = build_prompt(&chunk("x"), &PromptSpec::default_for(r, m));
                assert_eq!(task_of(&p), Some((r, m)));
            }
        }
        assert_eq!(task_of("no header"), None);
    }
}
