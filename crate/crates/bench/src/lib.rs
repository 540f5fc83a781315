//! Criterion benchmarks for `asm4vi`; see `benches/`.
