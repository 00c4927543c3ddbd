pub mod evaluate;
pub mod infer;
pub mod ingest;
pub mod preprocess;
pub mod report;
pub mod synth;
