//! Library surface of the `cascade-forge` binary: the run configuration
//! and the output record types, shared with the integration tests so that
//! emitted files can be parsed back into their originating types.

pub mod config;
pub mod emit;
