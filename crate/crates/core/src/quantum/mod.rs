//! Quantum algorithms: `Q_{h,m}`, solitude verification, leader election
//! and symmetric functions.

pub mod qhm;
pub mod qsv;
pub mod qsym;
pub mod w;
pub mod zqle;

pub use qhm::{round_budget, Qhm, QhmError, QhmOut, SENTINEL};
pub use w::{build_w, WError, WUnitary};
