//! Loop-measure toolkit: potential-kernel models, exact moment formulas,
//! Poisson-subordinated chains, loop samplers and additive-functional
//! (Revuz) calculus, with a CLI front end.

pub mod cli;
pub mod config;
pub mod error;
pub mod exec;
pub mod model;
pub mod moments;
pub mod numeric;
pub mod report;
pub mod revuz;
pub mod simulate;
pub mod subordination;

pub use error::{Error, Result};
