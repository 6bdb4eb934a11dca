//! Criterion benchmarks of the numerical kernels live in `benches/kernels.rs`.
