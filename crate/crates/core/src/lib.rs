//! Anonymous port-numbered networks with a sparse quantum state engine.
//!
//! Everything here needs only `alloc`. File formats, the CLI and the
//! verification campaigns live in the `anonq` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod graph;
pub mod qsim;
pub mod dist;
pub mod runtime;
pub mod classical;
pub mod compose;
pub mod quantum;
