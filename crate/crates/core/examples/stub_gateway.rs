//! Generate risk documents through the cached gateway with a scripted provider.

use riskscope::llm::cache::CompletionCache;
use riskscope::llm::prompts::PromptSpec;
use riskscope::llm::provider::{Provider, StubProvider, StubRule};
use riskscope::llm::{Gateway, Mode, RiskType};
use riskscope::transcript::{chunk_transcript, ChunkParams, Section, SpeakerRole, Transcript, Utterance};

fn main() {
    let call = Transcript {
        call_id: "DEMO-2021Q1".into(),
        firm_id: "DEMO".into(),
        fiscal_quarter: "2021Q1".parse().unwrap(),
        call_date: "2021-04-28".parse().unwrap(),
        language: None,
        utterances: vec![
            Utterance::new("ceo", SpeakerRole::Executive, Section::Presentation, "Revenue grew in every region this quarter. ".repeat(20)),
            Utterance::new("cfo", SpeakerRole::Executive, Section::Presentation, format!(
                "{}The new tariff on imported components will raise our costs next year.",
                "Margins held up well despite higher freight costs. ".repeat(15)
            )),
        ],
    };
    let chunks = chunk_transcript(&call, ChunkParams::default());

    let provider = StubProvider::new(vec![StubRule {
        risk_type: Some(RiskType::Political),
        ..StubRule::new("tariff", "Management expects a new import tariff to raise component costs next year.")
    }]);
    let cache = CompletionCache::in_memory();
    let gateway = Gateway::new(&provider, &cache, "gpt-3.5-turbo-0125");

    for risk in RiskType::ALL {
        let doc = gateway.generate_risk_document(&chunks, &PromptSpec::default_for(risk, Mode::Summary)).unwrap();
        println!("{risk:>9}: {:?}", if doc.text.is_empty() { "(no content)" } else { doc.text.as_str() });
    }
    // The same prompts again are served from the cache.
    let before = provider.calls();
    gateway.generate_risk_document(&chunks, &PromptSpec::default_for(RiskType::Political, Mode::Summary)).unwrap();
    println!("provider calls: {before} then {} after a repeat, cache hits {}", provider.calls(), gateway.cache_hits());
}
