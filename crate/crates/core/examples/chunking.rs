//! Parse a synthetic call and split it into model-sized chunks.

use riskscope::synth::{synthetic_corpus, transcript_record, CallShape};
use riskscope::transcript::{chunk_transcript, count_tokens, parse_transcript, ChunkParams};

fn main() {
    let call = synthetic_corpus(7, 1, &CallShape::default()).remove(0);
    // Round-trip through the JSONL record format the corpus reader expects.
    let line = transcript_record(&call).to_string();
    let parsed = parse_transcript(&line, 1).expect("valid record");
    println!("{} ({} utterances)", parsed.call_id, parsed.utterances.len());

    for params in [ChunkParams::default(), ChunkParams { input_budget: 600, min_tokens: 50 }] {
        let chunks = chunk_transcript(&parsed, params);
        println!("\nbudget {}: {} chunks", params.input_budget, chunks.len());
        for c in &chunks {
            println!("  #{:<2} {:<15} {:>5} tokens", c.chunk_index, format!("{:?}", c.origin), count_tokens(&c.text));
        }
    }
}
