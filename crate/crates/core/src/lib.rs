//! Desk-scale laboratory for studying how a small code model acquires a new
//! programming language after training on a dominant one.
//!
//! * [`toylang`]: synthetic languages, corpora and the task suite.
//! * [`model`]: a tiny decoder-only transformer with manual backprop.
//! * [`probes`]: logit-lens working language, LAPE neurons, knowledge transfer.
//! * [`estimator`]: loss-based system proportion and mixture planning.
//! * [`harness`]: experiment orchestration, manifests and reports.

pub mod estimator;
pub mod harness;
pub mod model;
pub mod probes;
pub mod toylang;
pub mod util;
