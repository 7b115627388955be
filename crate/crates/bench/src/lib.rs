//! Criterion benchmarks for driftkit; see `benches/`.
