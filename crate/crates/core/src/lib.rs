//! Robust super-replication pricing on multinomial scenario trees with
//! nonlinear transaction costs, with duality diagnostics, strategy lifting
//! from binomial sub-models, and scaling-limit experiments.

pub mod cli;
pub mod costs;
pub mod dual;
pub mod error;
pub mod extreal;
pub mod lattice;
pub mod lifting;
pub mod payoff;
pub mod primal;
pub mod scaling;
pub mod simplex;

pub use error::{EngineError, Result};
pub use extreal::ExtReal;
