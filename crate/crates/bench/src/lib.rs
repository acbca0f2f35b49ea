//! Criterion benchmarks for the PSCA pipeline live in `benches/`.
