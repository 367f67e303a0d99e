//! Criterion benchmarks for the link chain and the refining network live in `benches/`.
