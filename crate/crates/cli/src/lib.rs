//! Library side of the `friable` binary: argument parsing, verification
//! suites and grid studies.
pub mod parse;
pub mod study;
pub mod verify;
