//! Criterion benchmarks for the gravcomp pipeline live in `benches/`.
