//! Criterion benchmarks for the signal pipeline live in `benches/`.
