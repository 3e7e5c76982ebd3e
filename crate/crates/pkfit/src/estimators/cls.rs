use super::design::PutDesign;
use super::nnls::nnls;
use super::{Estimate, FitOptions};
use crate::core::{price_put, CumulativeKernel, Grid, QuoteSet};
use crate::{Error, Result};

/// Constrained least squares: minimizes `Σ_i (price_put(P, K_i) − S_i)²`
/// over the monotone cone `{base ≥ 0, w_j ≥ 0}`.
///
/// Put prices are linear in `(base, w)`, so this is a non-negative least
/// squares problem, solved by an active-set method to the KKT tolerance. The
/// fitted price curve `K ↦ price_put(P̂, K)` is automatically non-decreasing
/// and convex.
pub fn fit_cls(quotes: &QuoteSet, grid: &Grid, opts: &FitOptions) -> Result<Estimate> {
    opts.validate()?;
    check_strikes(quotes, grid)?;

    let design = PutDesign::build(grid, quotes.strikes(), true);
    let aty = design.aty(quotes.prices());
    // Relative tolerance: scaling every quote by c scales Aᵀy (and the
    // fitted kernel) by c, keeping the accepted solution set identical.
    let scale = aty.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let grad_tol = opts.kkt_tol * scale.max(f64::MIN_POSITIVE);

    let sol = nnls(&design.gram, &aty, grad_tol, opts.max_iterations);

    let kernel = CumulativeKernel::new(*grid, sol.x[0], sol.x[1..].to_vec())?;
    let fitted_prices: Vec<f64> = quotes
        .strikes()
        .iter()
        .map(|&k| price_put(&kernel, k))
        .collect::<Result<_>>()?;
    let sse: f64 = fitted_prices
        .iter()
        .zip(quotes.prices())
        .map(|(f, s)| (f - s) * (f - s))
        .sum();
    let n = quotes.len() as f64;

    let nonunique_cells = unconstrained_zero_cells(&design, &sol.x, &aty, grad_tol);

    let estimate = Estimate {
        kernel,
        fitted_prices,
        objective: sse,
        mse_term: sse / n,
        entropy_term: 0.0,
        iterations: sol.iterations,
        kkt_residual: sol.kkt_residual,
        identifiable_upper: quotes.max_strike(),
        nonunique_cells,
    };

    if !sol.converged {
        return Err(Error::NonConvergence {
            iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
            last: Box::new(estimate),
        });
    }
    Ok(estimate)
}

pub(crate) fn check_strikes(quotes: &QuoteSet, grid: &Grid) -> Result<()> {
    let b = grid.upper_bound();
    if let Some(k) = quotes.strikes().iter().find(|k| **k < 0.0 || **k > b) {
        return Err(Error::Domain(format!(
            "strike {k} outside the grid domain [0, {b}]"
        )));
    }
    Ok(())
}

/// Cells with zero increment and a numerically vanishing multiplier: the
/// quotes neither demand mass there nor forbid it, so the solution in those
/// cells is not unique.
fn unconstrained_zero_cells(
    design: &PutDesign,
    x: &[f64],
    aty: &[f64],
    grad_tol: f64,
) -> Vec<usize> {
    let n = x.len();
    let mut gx = vec![0.0; n];
    for (p, &xp) in x.iter().enumerate() {
        if xp == 0.0 {
            continue;
        }
        for j in 0..n {
            gx[j] += design.gram[[j, p]] * xp;
        }
    }
    (1..n)
        .filter(|&j| x[j] == 0.0 && 2.0 * (gx[j] - aty[j]).abs() <= grad_tol)
        .map(|j| j - 1)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::sup_distance;
    use crate::synth::{generate_quotes, make_kernel, sample_strikes, KernelSpec, NoiseSpec,
        StrikeDensitySpec};

    fn unit_grid(m: usize) -> Grid {
        Grid::new(1.0, m).unwrap()
    }

    #[test]
    fn all_zero_quotes_give_the_zero_kernel() {
        let grid = unit_grid(50);
        let quotes =
            QuoteSet::new(vec![0.2, 0.5, 0.9], vec![0.0, 0.0, 0.0], None, None, 1.0).unwrap();
        let est = fit_cls(&quotes, &grid, &FitOptions::default()).unwrap();
        assert_eq!(est.objective, 0.0);
        assert_eq!(est.kernel.base(), 0.0);
        assert!(est.kernel.increments().iter().all(|&w| w == 0.0));
        assert_eq!(est.iterations, 0);
    }

    #[test]
    fn noiseless_linear_kernel_recovery() {
        // Oracle: S(K) = K²/2 for P(x) = x.
        let grid = unit_grid(400);
        let strikes: Vec<f64> = (1..=200).map(|i| i as f64 / 200.0).collect();
        let prices: Vec<f64> = strikes.iter().map(|k| k * k / 2.0).collect();
        let quotes = QuoteSet::new(strikes, prices, Some(0.0), None, 1.0).unwrap();
        let est = fit_cls(&quotes, &grid, &FitOptions::default()).unwrap();
        let truth = make_kernel(
            &KernelSpec::Uniform {
                total_mass: 1.0,
                base: 0.0,
            },
            &grid,
        )
        .unwrap();
        let sup = sup_distance(&est.kernel, &truth).unwrap();
        assert!(sup <= 5e-3, "sup error {sup}");
    }

    #[test]
    fn noiseless_bimodal_round_trip() {
        let grid = unit_grid(400);
        let truth = make_kernel(&KernelSpec::default_bimodal(), &grid).unwrap();
        let strikes =
            sample_strikes(500, &StrikeDensitySpec::uniform(1.0).unwrap(), 21).unwrap();
        let quotes = generate_quotes(&truth, &strikes, &NoiseSpec::gaussian(0.0, 22)).unwrap();
        let est = fit_cls(&quotes, &grid, &FitOptions::default()).unwrap();
        assert!(est.mse_term <= 1e-16, "mse {}", est.mse_term);
        let sup = crate::core::sup_distance_within(&est.kernel, &truth, quotes.max_strike())
            .unwrap();
        assert!(sup <= 1e-2, "sup error {sup}");
    }

    #[test]
    fn strikes_outside_grid_are_rejected() {
        let grid = unit_grid(10);
        let quotes = QuoteSet::new(vec![1.5], vec![0.2], None, None, 2.0).unwrap();
        assert!(matches!(
            fit_cls(&quotes, &grid, &FitOptions::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn exhausted_budget_reports_nonconvergence_with_last_iterate() {
        let grid = unit_grid(100);
        let truth = make_kernel(&KernelSpec::default_bimodal(), &grid).unwrap();
        let strikes = sample_strikes(80, &StrikeDensitySpec::uniform(1.0).unwrap(), 3).unwrap();
        let quotes = generate_quotes(&truth, &strikes, &NoiseSpec::gaussian(0.01, 4)).unwrap();
        let opts = FitOptions {
            max_iterations: 2,
            ..FitOptions::default()
        };
        match fit_cls(&quotes, &grid, &opts) {
            Err(Error::NonConvergence {
                iterations,
                kkt_residual,
                last,
            }) => {
                assert!(iterations <= 2);
                assert!(kkt_residual > 0.0);
                assert_eq!(last.kernel.grid().cells(), 100);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn scale_equivariance() {
        let grid = unit_grid(120);
        let truth = make_kernel(&KernelSpec::default_bimodal(), &grid).unwrap();
        let strikes = sample_strikes(60, &StrikeDensitySpec::uniform(1.0).unwrap(), 8).unwrap();
        let quotes = generate_quotes(&truth, &strikes, &NoiseSpec::gaussian(0.02, 9)).unwrap();
        let est = fit_cls(&quotes, &grid, &FitOptions::default()).unwrap();
        for &c in &[3.0, 0.25] {
            let scaled = quotes.scaled(c).unwrap();
            let est_c = fit_cls(&scaled, &grid, &FitOptions::default()).unwrap();
            let denom = 1.0 + est.kernel.max_value().abs() * c;
            assert!(
                (est_c.kernel.base() - c * est.kernel.base()).abs() <= 1e-8 * denom,
                "base fails at c={c}"
            );
            for (w_c, w) in est_c
                .kernel
                .increments()
                .iter()
                .zip(est.kernel.increments())
            {
                assert!((w_c - c * w).abs() <= 1e-8 * denom, "increments fail at c={c}");
            }
        }
    }

    #[test]
    fn nonunique_cells_flagged_when_underdetermined() {
        // Two quotes on a 20-cell grid: far more cells than data.
        let grid = unit_grid(20);
        let quotes = QuoteSet::new(vec![0.5, 1.0], vec![0.1, 0.35], None, None, 1.0).unwrap();
        let est = fit_cls(&quotes, &grid, &FitOptions::default()).unwrap();
        assert!(!est.nonunique_cells.is_empty());
        for &c in &est.nonunique_cells {
            assert_eq!(est.kernel.increments()[c], 0.0);
        }
    }
}
