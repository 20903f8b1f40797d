//! Criterion benchmarks for the friable-core pipeline live under `benches/`.
