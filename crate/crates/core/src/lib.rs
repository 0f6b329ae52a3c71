//! Symbolic interpreter for MiniMuli, a small Java-like language with free
//! (logic) variables and free objects.
//!
//! A program is parsed and checked by [`frontend`], its class hierarchy is
//! captured by [`classes`], values and the heap live in [`sym`], and
//! [`constraints`] holds the store that [`engine`] grows and shrinks while
//! it explores every branch of the execution tree depth first.

pub mod classes;
pub mod constraints;
pub mod engine;
pub mod frontend;
pub mod sym;

pub use engine::{run, run_source, LabelMode, Outcome, RunOptions, RunResult, SearchMode, Solution};
pub use frontend::{compile, CheckedProgram, FrontendError};
