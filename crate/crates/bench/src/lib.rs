//! Criterion benchmarks for the estimators and their building blocks; see `benches/`.
