//! Criterion benchmarks for the metric and retrieval hot paths; see `benches/`.
