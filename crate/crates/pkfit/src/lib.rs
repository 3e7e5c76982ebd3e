//! Estimation of cumulative pricing kernels from discrete, noisy put quotes.
//!
//! The price of a European put with strike `K` under a one-factor pricing
//! kernel `p` is `S(K) = ∫₀ᴷ P(x) dx`, where `P` is the cumulative kernel
//! (the antiderivative of `p`). Absence of arbitrage makes `P` non-decreasing
//! and bounded, and on that restricted domain the inverse problem
//! "prices → kernel" is stable enough to estimate `P` directly.
//!
//! The crate provides:
//!
//! - [`core`]: grids, cumulative kernels, payoffs, quotes, and the forward
//!   pricing operators together with the sup/L² metrics used everywhere else.
//! - [`synth`]: seeded generators for ground-truth kernels, strike samples
//!   with a positive density, and noisy quote sets.
//! - [`estimators`]: the constrained least squares fit over the monotone
//!   cone ([`estimators::fit_cls`]), the relaxed maximum relative entropy fit
//!   ([`estimators::fit_rme`]), the exact maximum-entropy baseline
//!   ([`estimators::fit_me_exact`]), and the λ schedule.
//! - [`analysis`]: executable diagnostics — the ill-posedness demo, empirical
//!   δ-entropy, inequality checkers, and the Monte Carlo consistency study.

pub mod analysis;
pub mod core;
pub mod estimators;
pub mod synth;

mod error;

pub use error::{Error, Result};

pub use crate::core::{CumulativeKernel, Grid, Payoff, QuoteSet};
