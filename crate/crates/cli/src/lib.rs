//! Library surface for the operator tools: the benchmark harness is
//! exposed so test suites can drive the same sweeps the `bench`
//! subcommand runs.

pub mod bench;
