pub mod quarter;
pub mod transcript;
pub mod llm;
pub mod exposure;
pub mod econometrics;
pub mod outcomes;
pub mod pipeline;
pub mod synth;
