//! Market clearing and pricing for parimutuel proportional betting on
//! permutations.
//!
//! The crate is organised around the path an order book takes:
//!
//! * [`market`] holds bids, outcomes, the order-book loader and the payout
//!   algebra.
//! * [`clearing`] solves the organizer's compact problem (plain LP and the
//!   starting-order barrier program), certifies the resulting price matrix and
//!   follows the starting orders to zero.
//! * [`combinatorics`] provides matchings, permanents, permutation enumeration
//!   and Birkhoff–von Neumann peeling.
//! * [`maxent`] lifts a marginal price matrix to a maximum-entropy
//!   distribution over all `n!` outcomes, exactly or with the ellipsoid method.
//! * [`reforacle`] contains brute-force reference solvers over the full
//!   outcome space.
//! * [`pipeline`] chains everything into one reproducible report.

pub mod clearing;
pub mod combinatorics;
pub mod error;
pub mod linalg;
pub mod market;
pub mod maxent;
pub mod parallel;
pub mod pipeline;
pub mod reforacle;
pub mod simplex;

pub use error::{Error, Result};
pub use market::{BidOrder, MarketInstance, PermutationOutcome, PriceMatrix, Tolerances};

/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;

/// Current version of every JSON artifact the crate emits.
pub const SCHEMA_VERSION: u32 = 1;
