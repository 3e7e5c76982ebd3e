//! Kernel estimators: constrained least squares over the monotone cone,
//! relaxed maximum relative entropy, and the exact maximum-entropy baseline.

mod chol;
mod cls;
mod design;
mod maxent;
mod nnls;
mod rme;

pub use cls::fit_cls;
pub use maxent::fit_me_exact;
pub use rme::fit_rme;

use serde::{Deserialize, Serialize};

use crate::core::CumulativeKernel;
use crate::{Error, Result};

/// Which relative-entropy integrand to use.
///
/// The plain form `Σ w ln(w/w0)` can be driven below zero by shrinking total
/// mass; the generalized form adds `−w + w0` per cell, making the divergence
/// non-negative with its minimum exactly at the prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyForm {
    Paper,
    Generalized,
}

/// Solver options shared by all fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Tolerance on the worst violated optimality residual, relative to the
    /// problem scale.
    pub kkt_tol: f64,
    pub objective_rel_tol: f64,
    pub entropy_form: EntropyForm,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100_000,
            kkt_tol: 1e-8,
            objective_rel_tol: 1e-10,
            entropy_form: EntropyForm::Generalized,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Spec("max_iterations must be at least 1".into()));
        }
        for (name, v) in [
            ("kkt_tol", self.kkt_tol),
            ("objective_rel_tol", self.objective_rel_tol),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Spec(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// A fitted kernel with its diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    /// The fitted cumulative kernel `P̂`.
    pub kernel: CumulativeKernel,
    /// Model prices at the quote strikes.
    pub fitted_prices: Vec<f64>,
    /// Final objective value (`Σ r²` for CLS, `mse + λ·D` for RME, `D` for
    /// exact maximum entropy).
    pub objective: f64,
    /// Mean squared pricing error over the quotes.
    pub mse_term: f64,
    /// Divergence from the prior (0 for CLS, which has none).
    pub entropy_term: f64,
    pub iterations: usize,
    /// Worst violated optimality residual at the returned iterate. For the
    /// exact maximum-entropy fit this is the worst constraint violation.
    pub kkt_residual: f64,
    /// Largest observed strike; node values above it are extrapolated and
    /// excluded from error metrics.
    pub identifiable_upper: f64,
    /// Cells whose increment is zero with a vanishing multiplier: the data do
    /// not pin them down, so the solution there is one of many.
    pub nonunique_cells: Vec<usize>,
}

impl Estimate {
    /// Per-node flags: `true` where the node lies above the identifiable
    /// region `[0, max strike]`.
    pub fn extrapolated_nodes(&self) -> Vec<bool> {
        let grid = self.kernel.grid();
        (0..grid.node_count())
            .map(|j| grid.node(j) > self.identifiable_upper)
            .collect()
    }
}

/// Relative-entropy divergence `D(w ‖ w0)` between increment vectors.
///
/// Cells with `w = 0` contribute their limit value (`w0` in the generalized
/// form, 0 in the plain form); positive mass against a zero-prior cell makes
/// the divergence infinite.
pub fn divergence(w: &[f64], w0: &[f64], form: EntropyForm) -> f64 {
    assert_eq!(w.len(), w0.len(), "increment vectors must have equal length");
    w.iter()
        .zip(w0)
        .map(|(&wi, &w0i)| match form {
            EntropyForm::Generalized => {
                if wi == 0.0 {
                    w0i
                } else if w0i == 0.0 {
                    f64::INFINITY
                } else {
                    wi * (wi / w0i).ln() - wi + w0i
                }
            }
            EntropyForm::Paper => {
                if wi == 0.0 {
                    0.0
                } else if w0i == 0.0 {
                    f64::INFINITY
                } else {
                    wi * (wi / w0i).ln()
                }
            }
        })
        .sum()
}

pub const DEFAULT_LAMBDA0: f64 = 0.1;
pub const DEFAULT_GAMMA: f64 = 0.5;

/// Penalty weight `λ_N = λ₀·N^(−γ)`.
///
/// Consistency only requires some vanishing sequence; the power-law form and
/// the defaults `λ₀ = 0.1`, `γ = 1/2` are validated by the consistency study.
pub fn lambda_schedule(n: usize, lambda0: f64, gamma: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Input("sample size must be at least 1".into()));
    }
    if !lambda0.is_finite() || lambda0 <= 0.0 {
        return Err(Error::Spec(format!("lambda0 must be positive, got {lambda0}")));
    }
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(Error::Spec(format!("gamma must be positive, got {gamma}")));
    }
    Ok(lambda0 * (n as f64).powf(-gamma))
}

/// `lambda_schedule` with the default `λ₀` and `γ`.
pub fn default_lambda(n: usize) -> Result<f64> {
    lambda_schedule(n, DEFAULT_LAMBDA0, DEFAULT_GAMMA)
}
