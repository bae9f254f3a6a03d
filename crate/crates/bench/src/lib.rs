//! Criterion benchmarks for the optimizer kernels live in `benches/`.
