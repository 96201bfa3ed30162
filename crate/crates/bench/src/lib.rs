//! Benchmarks for the sampling and quadrature kernels; see `benches/`.
