//! Criterion benchmarks for the coupled HMC kernels; see `benches/`.
