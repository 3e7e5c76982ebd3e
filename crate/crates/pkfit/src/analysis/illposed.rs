use serde::Serialize;

use crate::core::Grid;
use crate::{Error, Result};

/// Result of the unrestricted-inverse instability demonstration.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IllposedReport {
    pub alpha: f64,
    pub beta: f64,
    /// `sup |α·cos(βx)|` over the grid nodes in `[0, B]`.
    pub input_sup: f64,
    /// `sup |(α/β)·sin(βK)|` over the grid nodes in `[0, K̄]`.
    pub output_sup: f64,
    /// `input_sup / output_sup`, approximately `β`.
    pub amplification: f64,
}

/// Evaluates the perturbation `α·cos(βx)` and its image under put pricing,
/// `(α/β)·sin(βK)`, on the grid. The input keeps norm `α` while the output
/// shrinks like `α/β`, so inverting prices back to kernels amplifies
/// perturbations by `≈ β` — without the monotone-cone restriction the
/// inverse is unbounded.
///
/// Requires `β·K̄ ≥ π/2` so the sine reaches full magnitude inside the
/// observed strike range.
pub fn illposed_demo(alpha: f64, beta: f64, k_bar: f64, grid: &Grid) -> Result<IllposedReport> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::Domain(format!(
            "alpha must be finite and non-negative, got {alpha}"
        )));
    }
    if !beta.is_finite() || beta <= 0.0 {
        return Err(Error::Domain(format!(
            "beta must be finite and positive, got {beta}"
        )));
    }
    if !k_bar.is_finite() || k_bar <= 0.0 || k_bar > grid.upper_bound() {
        return Err(Error::Domain(format!(
            "strike bound {k_bar} outside (0, {}]",
            grid.upper_bound()
        )));
    }
    if beta * k_bar < std::f64::consts::FRAC_PI_2 {
        return Err(Error::Domain(format!(
            "beta·k_bar = {} is below pi/2; the image never reaches full magnitude",
            beta * k_bar
        )));
    }

    let mut input_sup = 0.0_f64;
    let mut output_sup = 0.0_f64;
    for j in 0..grid.node_count() {
        let x = grid.node(j);
        input_sup = input_sup.max((alpha * (beta * x).cos()).abs());
        if x <= k_bar {
            output_sup = output_sup.max((alpha / beta * (beta * x).sin()).abs());
        }
    }
    let amplification = if output_sup > 0.0 {
        input_sup / output_sup
    } else {
        0.0
    };
    Ok(IllposedReport {
        alpha,
        beta,
        input_sup,
        output_sup,
        amplification,
    })
}
