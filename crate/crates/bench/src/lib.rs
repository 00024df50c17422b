//! Criterion benchmarks for cfforge live in `benches/`.
