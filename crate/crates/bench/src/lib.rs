//! Criterion benchmarks for the solver hot paths live under `benches/`.
