use ndarray::Array2;

use super::chol::{cholesky_in_place, cholesky_solve};
use super::design::PutDesign;
use super::nnls::nnls;
use super::{divergence, Estimate, EntropyForm, FitOptions};
use crate::core::{price_put, CumulativeKernel, Grid, QuoteSet};
use crate::{Error, Result};

/// Exact maximum-entropy fit: minimizes `D(w ‖ w0)` subject to the price
/// constraints `price_put(P, K_i) = S_i` holding exactly. Intended for a
/// scarce set of exactly-known prices (`N` small relative to the grid).
///
/// Solved through the dual: the minimizer has the exponential-family form
/// `w_j(ν) = w0_j·exp(Σ_i ν_i A_ij − c)` (`c = 0` for the generalized
/// divergence, `c = 1` for the plain one), and the dual is maximized by a
/// damped Newton method. The base is pinned to the prior's base: it carries
/// no entropy penalty, so the constraints alone would leave it undetermined.
///
/// Noisy or mutually inconsistent constraints make the problem infeasible;
/// that is detected up front by a least-squares residual check on the
/// constraint system, and at runtime by dual divergence, and reported as
/// [`Error::Infeasible`].
pub fn fit_me_exact(
    quotes: &QuoteSet,
    prior: &CumulativeKernel,
    grid: &Grid,
    opts: &FitOptions,
) -> Result<Estimate> {
    opts.validate()?;
    super::cls::check_strikes(quotes, grid)?;
    if !prior.grid().same_as(grid) {
        return Err(Error::GridMismatch(
            "prior kernel lives on a different grid".into(),
        ));
    }
    let w0 = prior.increments();
    if let Some(c) = (0..w0.len()).find(|&c| w0[c] <= 0.0) {
        return Err(Error::Input(format!(
            "exact maximum entropy needs a strictly positive prior; increment {c} is {}",
            w0[c]
        )));
    }

    let n = quotes.len();
    let m = grid.cells();
    let b0 = prior.base();
    // Constraints on the increments once the pinned base is priced in.
    let targets: Vec<f64> = quotes
        .strikes()
        .iter()
        .zip(quotes.prices())
        .map(|(&k, &s)| s - b0 * k)
        .collect();

    let design = PutDesign::build(grid, quotes.strikes(), false);
    let t_inf = targets.iter().fold(0.0_f64, |a, v| a.max(v.abs()));

    // Feasibility probe: the cone image is closed, so a strictly positive
    // least-squares residual means no monotone kernel can satisfy the
    // constraints.
    let aty = design.aty(&targets);
    let probe = nnls(&design.gram, &aty, 1e-10 * t_inf.max(1.0), 50_000);
    let probe_fit = design.predict(&probe.x);
    let probe_sse: f64 = probe_fit
        .iter()
        .zip(&targets)
        .map(|(f, t)| (f - t) * (f - t))
        .sum();
    if probe_sse > 1e-12 * t_inf.max(1.0).powi(2) {
        return Err(Error::Infeasible {
            reason: format!(
                "no monotone kernel satisfies the constraints: best squared residual {probe_sse:.3e}"
            ),
        });
    }

    let shift = match opts.entropy_form {
        EntropyForm::Generalized => 0.0,
        EntropyForm::Paper => 1.0,
    };
    let constraint_tol = 1e-11 * t_inf.max(1.0);

    let weights = |nu: &[f64]| -> Vec<f64> {
        let mut t = vec![0.0; m];
        for (i, &v) in nu.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let row = design.a.row(i);
            for (c, tc) in t.iter_mut().enumerate() {
                *tc += row[c] * v;
            }
        }
        t.iter()
            .zip(w0)
            .map(|(tc, &w0c)| w0c * (tc - shift).clamp(-700.0, 700.0).exp())
            .collect()
    };
    let dual_value = |nu: &[f64], w: &[f64]| -> f64 {
        let linear: f64 = nu.iter().zip(&targets).map(|(v, t)| v * t).sum();
        // Σ w0·(e^{t−c} − e^{−c}) written through w to reuse the clamping.
        let bulk: f64 = w
            .iter()
            .zip(w0)
            .map(|(wc, &w0c)| wc - w0c * (-shift as f64).exp())
            .sum();
        linear - bulk
    };

    let mut nu = vec![0.0; n];
    let mut w = weights(&nu);
    let mut g = dual_value(&nu, &w);
    let mut iterations = 0;
    let max_iter = opts.max_iterations.min(500);
    let mut residual_inf;

    loop {
        let fitted = design.predict(&w);
        let resid: Vec<f64> = targets.iter().zip(&fitted).map(|(t, f)| t - f).collect();
        residual_inf = resid.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if residual_inf <= constraint_tol {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::Infeasible {
                reason: format!(
                    "dual iteration stalled with constraint residual {residual_inf:.3e} after {iterations} iterations"
                ),
            });
        }
        if nu.iter().any(|v| v.abs() > 1e10) {
            return Err(Error::Infeasible {
                reason: "dual variables diverged; constraints are only attainable in the limit"
                    .into(),
            });
        }
        iterations += 1;

        // Newton system: (A·diag(w)·Aᵀ + μI) δ = resid.
        let mut base_h = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for c in 0..m {
                    s += design.a[[i, c]] * w[c] * design.a[[j, c]];
                }
                base_h[[i, j]] = s;
                base_h[[j, i]] = s;
            }
        }
        let diag_max = (0..n)
            .map(|i| base_h[[i, i]])
            .fold(f64::MIN_POSITIVE, f64::max);

        let mut mu = 0.0_f64;
        let mut stepped = false;
        for _attempt in 0..40 {
            let mut h = base_h.clone();
            if mu > 0.0 {
                for i in 0..n {
                    h[[i, i]] += mu;
                }
            }
            if !cholesky_in_place(&mut h) {
                mu = if mu == 0.0 { 1e-12 * diag_max } else { mu * 100.0 };
                continue;
            }
            let mut delta = resid.clone();
            cholesky_solve(&h, &mut delta);
            // Ascent on the concave dual with backtracking.
            let dir_deriv: f64 = resid.iter().zip(&delta).map(|(r, d)| r * d).sum();
            if dir_deriv <= 0.0 {
                mu = if mu == 0.0 { 1e-12 * diag_max } else { mu * 100.0 };
                continue;
            }
            let mut t = 1.0_f64;
            for _ in 0..60 {
                let nu_new: Vec<f64> =
                    nu.iter().zip(&delta).map(|(v, d)| v + t * d).collect();
                let w_new = weights(&nu_new);
                let g_new = dual_value(&nu_new, &w_new);
                if g_new >= g + 1e-4 * t * dir_deriv {
                    nu = nu_new;
                    w = w_new;
                    g = g_new;
                    stepped = true;
                    break;
                }
                t *= 0.5;
            }
            if stepped {
                break;
            }
            mu = if mu == 0.0 { 1e-12 * diag_max } else { mu * 100.0 };
        }
        if !stepped {
            return Err(Error::Infeasible {
                reason: "dual line search stalled; constraints are only attainable in the limit"
                    .into(),
            });
        }
    }

    let kernel = CumulativeKernel::new(*grid, b0, w.clone())?;
    let fitted_prices: Vec<f64> = quotes
        .strikes()
        .iter()
        .map(|&k| price_put(&kernel, k))
        .collect::<Result<_>>()?;
    let mse: f64 = fitted_prices
        .iter()
        .zip(quotes.prices())
        .map(|(f, s)| (f - s) * (f - s))
        .sum::<f64>()
        / n as f64;
    let entropy = divergence(&w, w0, opts.entropy_form);

    Ok(Estimate {
        kernel,
        fitted_prices,
        objective: entropy,
        mse_term: mse,
        entropy_term: entropy,
        iterations,
        kkt_residual: residual_inf,
        identifiable_upper: quotes.max_strike(),
        nonunique_cells: Vec::new(),
    })
}
