//! Criterion benchmarks for `skelrep-core` live in `benches/`.
