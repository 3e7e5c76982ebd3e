//! Domain types and forward pricing operators.
//!
//! Everything here is immutable after construction and freely shareable
//! across threads; all operations are pure functions.

mod grid;
mod kernel;
mod payoff;
mod pricing;
mod quotes;

pub use grid::Grid;
pub use kernel::CumulativeKernel;
pub use payoff::{validate_payoff_family, FamilyReport, Payoff};
pub use pricing::{
    l2_distance, l2_distance_within, price_payoff, price_put, sup_distance, sup_distance_within,
};
pub use quotes::QuoteSet;
