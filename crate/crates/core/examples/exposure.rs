//! Exposure ratios from risk documents, then summary statistics.

use riskscope::exposure::{describe, fmt_sig6, ExposureRecord, TranscriptLength};
use riskscope::llm::{Mode, RiskDocument, RiskType};

fn doc(call: &str, risk: RiskType, mode: Mode, outputs: &[&str]) -> RiskDocument {
    let chunk_outputs: Vec<String> = outputs.iter().map(|s| s.to_string()).collect();
    RiskDocument { call_id: call.into(), risk_type: risk, mode, text: riskscope::llm::purge_na(&chunk_outputs), chunk_outputs }
}

fn main() {
    let len = TranscriptLength { call_id: "A-2021Q1".into(), denominator_words: 4000 };
    let docs = vec![
        doc("A-2021Q1", RiskType::Political, Mode::Summary, &["Tariffs raise input costs.", "NA", "Election uncertainty delays orders."]),
        doc("A-2021Q1", RiskType::Climate, Mode::Summary, &["NA", "NA", "NA"]),
    ];
    let rec = ExposureRecord::from_documents("A", "2021Q1".parse().unwrap(), &len, &docs).unwrap();
    for m in riskscope::exposure::GPT_MEASURES {
        println!("{m:<13} {}", fmt_sig6(rec.get(m).unwrap().unwrap()));
    }
    let s = describe(&[0.0, 0.001, 0.002, 0.0015, 0.0]).unwrap();
    println!("\nn={} mean={} median={} max={}", s.n, fmt_sig6(s.mean), fmt_sig6(s.median), fmt_sig6(s.max));
}
