//! Motion planning for affine control systems with drift by evolving a
//! geometric heat flow on curves until it reaches a steady state.

pub mod cli;
pub mod dual;
pub mod dynamics;
pub mod error;
pub mod exprlang;
pub mod extraction;
pub mod flow;
pub mod ftt;
mod linalg;

pub use dual::Dual;
pub use error::{Error, Result};
