//! Numerical lab for the damped continuity equation `∂ₜu + ∇·(b u) = c u`.

pub mod bmo;
pub mod config;
pub mod csvio;
pub mod driver;
pub mod error;
pub mod eulerian;
pub mod expr;
pub mod fields;
pub mod fit;
pub mod gronwall;
pub mod flow;
pub mod lagrangian;
pub mod par;
pub mod renorm;
pub mod scenarios;

pub use error::{Error, Result};
