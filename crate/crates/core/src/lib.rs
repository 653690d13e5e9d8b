//! Trading at market indifference prices.
//!
//! A large investor trades with a panel of market makers whose expected
//! utilities are kept unchanged by every trade. This crate evaluates the
//! representative maker and Pareto allocations, the primal field `F` and its
//! conjugate `G` on Brownian scenario trees, and runs trading strategies
//! through two engines: forward induction for simple strategies and an
//! Euler scheme for the indirect-utility SDE. A closed-form Bachelier model
//! with price impact serves as the reference.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bachelier;
pub mod conjugacy;
pub mod engine;
pub mod error;
pub mod expr;
pub mod field;
pub mod parallel;
pub mod representative;
pub mod strategy;
pub mod tree;
pub mod utility;
pub mod verify;

pub use error::{Error, Result};
pub use representative::{Allocation, PrimalPoint, WeightVector};
pub use tree::{NodeId, Payoff, ScenarioTree, TreeSpec};
pub use utility::{MakerPanel, UtilitySpec};
