//! Benchmarks of the bound pipeline; see `benches/pipeline.rs`.
