//! Criterion benchmarks for the krflow kernels; see `benches/`.
