use super::{CumulativeKernel, Payoff};
use crate::{Error, Result};

/// Put price `S(K) = ∫₀ᴷ P(x) dx`, evaluated exactly for the piecewise-linear
/// kernel: trapezoid terms on whole cells plus the exact partial-cell term.
///
/// Linear in the kernel parameters `(base, w)`, and non-decreasing and convex
/// as a function of `K`.
pub fn price_put(kernel: &CumulativeKernel, strike: f64) -> Result<f64> {
    let grid = kernel.grid();
    if !strike.is_finite() || !(0.0..=grid.upper_bound()).contains(&strike) {
        return Err(Error::Domain(format!(
            "strike {strike} outside [0, {}]",
            grid.upper_bound()
        )));
    }
    let dx = grid.dx();
    let p = kernel.node_values();
    let c = grid.cell_of(strike);
    let mut total = 0.0;
    for j in 0..c {
        total += 0.5 * (p[j] + p[j + 1]) * dx;
    }
    let t = strike - grid.node(c);
    if t > 0.0 {
        let slope = (p[c + 1] - p[c]) / dx;
        total += p[c] * t + 0.5 * slope * t * t;
    }
    Ok(total)
}

/// General payoff price `S(θ) = −∫₀ᴮ P(x) dF(x, θ)`, as the discrete
/// Riemann–Stieltjes sum `−Σ_j P(mid_j)·(F(x_{j+1}) − F(x_j))` with the
/// kernel evaluated at cell midpoints.
///
/// For a put payoff this agrees with [`price_put`] to `O(Δx²)` (exactly, when
/// the strike sits on a node, since the midpoint value of a linear function
/// is its cell average).
pub fn price_payoff(kernel: &CumulativeKernel, payoff: &Payoff) -> Result<f64> {
    if !kernel.grid().same_as(payoff.grid()) {
        return Err(Error::GridMismatch(
            "kernel and payoff live on different grids".into(),
        ));
    }
    let p = kernel.node_values();
    let f = payoff.values();
    let mut total = 0.0;
    for j in 0..kernel.grid().cells() {
        let p_mid = 0.5 * (p[j] + p[j + 1]);
        total -= p_mid * (f[j + 1] - f[j]);
    }
    Ok(total)
}

/// `max_j |P1_j − P2_j|` over the grid nodes.
pub fn sup_distance(p1: &CumulativeKernel, p2: &CumulativeKernel) -> Result<f64> {
    if !p1.grid().same_as(p2.grid()) {
        return Err(Error::GridMismatch("sup distance needs a shared grid".into()));
    }
    Ok(sup_over(p1, p2, p1.grid().node_count()))
}

/// `L²` distance `sqrt(∫₀ᴮ (P1 − P2)² dx)` by trapezoid quadrature of the
/// squared node differences.
pub fn l2_distance(p1: &CumulativeKernel, p2: &CumulativeKernel) -> Result<f64> {
    if !p1.grid().same_as(p2.grid()) {
        return Err(Error::GridMismatch("L2 distance needs a shared grid".into()));
    }
    Ok(l2_over(p1, p2, p1.grid().node_count()))
}

/// Sup distance restricted to nodes `x_j ≤ x_upper`. Used to measure errors
/// on the identifiable region `[0, max strike]` only.
pub fn sup_distance_within(
    p1: &CumulativeKernel,
    p2: &CumulativeKernel,
    x_upper: f64,
) -> Result<f64> {
    if !p1.grid().same_as(p2.grid()) {
        return Err(Error::GridMismatch("sup distance needs a shared grid".into()));
    }
    Ok(sup_over(p1, p2, nodes_within(p1, x_upper)?))
}

/// `L²` distance restricted to `[0, x_J]`, where `x_J` is the largest node
/// not exceeding `x_upper`.
pub fn l2_distance_within(
    p1: &CumulativeKernel,
    p2: &CumulativeKernel,
    x_upper: f64,
) -> Result<f64> {
    if !p1.grid().same_as(p2.grid()) {
        return Err(Error::GridMismatch("L2 distance needs a shared grid".into()));
    }
    Ok(l2_over(p1, p2, nodes_within(p1, x_upper)?))
}

fn nodes_within(p: &CumulativeKernel, x_upper: f64) -> Result<usize> {
    let grid = p.grid();
    if !x_upper.is_finite() || x_upper < 0.0 {
        return Err(Error::Domain(format!(
            "region bound {x_upper} must be finite and non-negative"
        )));
    }
    let count = (0..grid.node_count())
        .take_while(|&j| grid.node(j) <= x_upper)
        .count();
    Ok(count.max(1))
}

fn sup_over(p1: &CumulativeKernel, p2: &CumulativeKernel, n_nodes: usize) -> f64 {
    let (a, b) = (p1.node_values(), p2.node_values());
    (0..n_nodes)
        .map(|j| (a[j] - b[j]).abs())
        .fold(0.0, f64::max)
}

fn l2_over(p1: &CumulativeKernel, p2: &CumulativeKernel, n_nodes: usize) -> f64 {
    let (a, b) = (p1.node_values(), p2.node_values());
    let dx = p1.grid().dx();
    let mut sum = 0.0;
    for j in 0..n_nodes {
        let d2 = (a[j] - b[j]) * (a[j] - b[j]);
        let weight = if j == 0 || j == n_nodes - 1 { 0.5 } else { 1.0 };
        sum += weight * d2 * dx;
    }
    sum.sqrt()
}
