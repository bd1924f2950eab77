//! Exact non-Markovian dynamics of `N` identical, mutually coupled harmonic
//! oscillators sharing one harmonic bath.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod environment;
pub mod error;
pub mod gaussian;
pub mod hpz;
pub mod oracle;
pub mod output;
pub mod pipeline;
pub mod quad;
pub mod transform;

pub use error::{Error, Result};
