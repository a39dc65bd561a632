//! File formats, verification campaigns and the command-line front end
//! for [`anonq_core`].

pub mod format;
pub mod harness;

pub use anonq_core as core;
