//! Benchmarks for the numeric kernels live in `benches/`.
