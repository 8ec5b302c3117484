//! Convex risk measures on finite probability spaces and g-conditional risk
//! measures on a binomial lattice.

pub mod error;
pub mod kernel;
pub mod market;
pub mod optim;
pub mod risk;
pub mod transfer;
pub mod dynamics;
pub mod scenario;

pub use error::{ErrorClass, Result, RiskError};
