//! Linear supply-and-demand-function equilibria for oligopolistic firms
//! trading on an input-output network.
//!
//! Firms post linear schedules whose slopes are chosen strategically; the
//! market clears goods by goods, and each firm's price impact depends on which
//! goods it treats as responsive. See the crate README for a tour.

// `!(x > 0.0)` guards deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod chain;
pub mod clearing;
pub mod economy;
pub mod error;
pub mod linalg;
pub mod regimes;
pub mod scenarios;
pub mod solver;
pub mod substitutes;

pub use chain::{solve_chain, ChainRegime, ChainSolution, ChainSpec};
pub use clearing::{clear, PriceQuantityState};
pub use economy::{validate, Consumer, Economy, Firm, ValidationReport};
pub use error::{Result, SdfeError};
pub use regimes::{Regime, RegimeKind};
pub use solver::{solution, solve, EquilibriumSolution, SolveOptions, Solved};
pub use substitutes::{solve_substitutes, SubstitutesOptions, SubstitutesTech};
