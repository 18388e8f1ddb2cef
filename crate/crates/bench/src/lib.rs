//! This crate exists for its criterion benches; see `benches/core_ops.rs`.
