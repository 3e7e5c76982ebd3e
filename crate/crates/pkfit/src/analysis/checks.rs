use serde::Serialize;

use crate::core::{price_payoff, price_put, sup_distance, CumulativeKernel, Grid, Payoff, QuoteSet};
use crate::estimators::Estimate;
use crate::{Error, Result};

/// One evaluation of the pricing continuity bound
/// `|S(P1) − S(P2)| ≤ TV(F)·sup|P1 − P2|`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ContinuityCheck {
    pub lhs: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Checks `|price_payoff(P1, F) − price_payoff(P2, F)|` against
/// `TV(F)·sup_distance(P1, P2)`, the bound that makes pricing continuous in
/// the kernel under the uniform metric.
pub fn check_continuity_bound(
    p1: &CumulativeKernel,
    p2: &CumulativeKernel,
    payoff: &Payoff,
) -> Result<ContinuityCheck> {
    let s1 = price_payoff(p1, payoff)?;
    let s2 = price_payoff(p2, payoff)?;
    let lhs = (s1 - s2).abs();
    let bound = payoff.total_variation() * sup_distance(p1, p2)?;
    Ok(ContinuityCheck {
        lhs,
        bound,
        holds: lhs <= bound + 1e-10,
    })
}

/// One evaluation of the density lemma bound.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DensityLemmaCheck {
    /// `(1/N)·Σ_i f(K_i)`.
    pub empirical_mean: f64,
    /// Trapezoid `∫₀ᴮ f(x) dx`.
    pub integral: f64,
    /// Sampling allowance `3·sup(f)/√N`.
    pub tolerance: f64,
    pub bound_holds: bool,
}

/// Checks that for non-negative `f` and strikes drawn with density at least
/// `k`, the integral of `f` is controlled by its empirical mean:
/// `∫₀ᴮ f ≤ mean/k + 3·sup(f)/√N`. This is what turns small empirical
/// pricing errors into small L² errors.
pub fn check_density_lemma(
    f_nodes: &[f64],
    strikes: &[f64],
    k: f64,
    grid: &Grid,
) -> Result<DensityLemmaCheck> {
    if f_nodes.len() != grid.node_count() {
        return Err(Error::Input(format!(
            "expected {} node samples, got {}",
            grid.node_count(),
            f_nodes.len()
        )));
    }
    if let Some(v) = f_nodes.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Input(format!(
            "f must be non-negative and finite, found {v}"
        )));
    }
    if !k.is_finite() || k <= 0.0 {
        return Err(Error::Input(format!(
            "density floor must be positive, got {k}"
        )));
    }
    if strikes.is_empty() {
        return Err(Error::Input("need at least one strike".into()));
    }
    let b = grid.upper_bound();
    if strikes.iter().any(|s| !s.is_finite() || *s < 0.0 || *s > b) {
        return Err(Error::Input(format!("strikes must lie in [0, {b}]")));
    }

    let interp = |x: f64| -> f64 {
        let c = grid.cell_of(x);
        let t = (x - grid.node(c)) / grid.dx();
        f_nodes[c] * (1.0 - t) + f_nodes[c + 1] * t
    };
    let n = strikes.len() as f64;
    let empirical_mean = strikes.iter().map(|&s| interp(s)).sum::<f64>() / n;

    let dx = grid.dx();
    let mut integral = 0.0;
    for j in 0..grid.cells() {
        integral += 0.5 * (f_nodes[j] + f_nodes[j + 1]) * dx;
    }

    let sup_f = f_nodes.iter().fold(0.0_f64, |a, &v| a.max(v));
    let tolerance = 3.0 * sup_f / n.sqrt();
    Ok(DensityLemmaCheck {
        empirical_mean,
        integral,
        tolerance,
        bound_holds: integral <= empirical_mean / k + tolerance,
    })
}

/// Result of testing the projection inequality of the least squares fit.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectionCheck {
    pub n_trials: usize,
    /// Worst value of `Σ(R−S)² − Σ(Ŝ−S)² − Σ(R−Ŝ)²` over the trials;
    /// non-negative up to solver tolerance because the feasible price set is
    /// convex and `Ŝ` is the projection of the quotes onto it.
    pub worst_slack: f64,
    pub tolerance: f64,
    pub all_pass: bool,
}

/// For each trial feasible kernel `R` checks
/// `Σ(R(K_i)−S_i)² ≥ Σ(Ŝ(K_i)−S_i)² + Σ(R(K_i)−Ŝ(K_i))² − tol`, where `Ŝ`
/// is the fitted price curve of a least squares estimate on these quotes and
/// `tol = 1e−8·N` absorbs solver inexactness.
pub fn check_projection_inequality(
    quotes: &QuoteSet,
    cls_estimate: &Estimate,
    trial_kernels: &[CumulativeKernel],
) -> Result<ProjectionCheck> {
    let grid = cls_estimate.kernel.grid();
    if trial_kernels.iter().any(|r| !r.grid().same_as(grid)) {
        return Err(Error::GridMismatch(
            "trial kernels must share the estimate's grid".into(),
        ));
    }
    if cls_estimate.fitted_prices.len() != quotes.len() {
        return Err(Error::Input(
            "estimate was not produced from these quotes".into(),
        ));
    }

    let n = quotes.len();
    let fitted_sse: f64 = cls_estimate
        .fitted_prices
        .iter()
        .zip(quotes.prices())
        .map(|(f, s)| (f - s) * (f - s))
        .sum();

    let tolerance = 1e-8 * n as f64;
    let mut worst_slack = f64::INFINITY;
    for r in trial_kernels {
        let mut trial_sse = 0.0;
        let mut cross_sse = 0.0;
        for (i, &k) in quotes.strikes().iter().enumerate() {
            let r_price = price_put(r, k)?;
            let d_data = r_price - quotes.prices()[i];
            let d_fit = r_price - cls_estimate.fitted_prices[i];
            trial_sse += d_data * d_data;
            cross_sse += d_fit * d_fit;
        }
        let slack = trial_sse - fitted_sse - cross_sse;
        worst_slack = worst_slack.min(slack);
    }
    Ok(ProjectionCheck {
        n_trials: trial_kernels.len(),
        worst_slack,
        tolerance,
        all_pass: trial_kernels.is_empty() || worst_slack >= -tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{fit_cls, FitOptions};
    use crate::synth::{
        generate_quotes, make_kernel, sample_strikes, KernelSpec, NoiseSpec, StrikeDensitySpec,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_grid(m: usize) -> Grid {
        Grid::new(1.0, m).unwrap()
    }

    pub(crate) fn random_kernel(grid: &Grid, rng: &mut ChaCha8Rng) -> CumulativeKernel {
        let m = grid.cells();
        let base = rng.random::<f64>() * 0.3;
        let scale = rng.random::<f64>() * 2.0 / m as f64;
        let increments: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * scale).collect();
        CumulativeKernel::new(*grid, base, increments).unwrap()
    }

    #[test]
    fn identical_kernels_trivially_hold() {
        let grid = unit_grid(100);
        let k = CumulativeKernel::constant(grid, 0.5).unwrap();
        let put = Payoff::put(grid, 0.5).unwrap();
        let c = check_continuity_bound(&k, &k, &put).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert!(c.holds);
    }

    #[test]
    fn constant_kernels_achieve_equality() {
        // Put prices 0.5 and 0; TV of the strike-0.5 put is 0.5 and the sup
        // distance is 1, so the bound holds with equality.
        let grid = unit_grid(400);
        let one = CumulativeKernel::constant(grid, 1.0).unwrap();
        let zero = CumulativeKernel::constant(grid, 0.0).unwrap();
        let put = Payoff::put(grid, 0.5).unwrap();
        let c = check_continuity_bound(&one, &zero, &put).unwrap();
        assert!((c.lhs - 0.5).abs() <= 1e-12);
        assert!((c.bound - 0.5).abs() <= 1e-12);
        assert!(c.holds);
    }

    #[test]
    fn randomized_continuity_trials_never_violate() {
        let grid = unit_grid(200);
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let put = Payoff::put(grid, 0.5).unwrap();
        for _ in 0..1000 {
            let p1 = random_kernel(&grid, &mut rng);
            let p2 = random_kernel(&grid, &mut rng);
            let c = check_continuity_bound(&p1, &p2, &put).unwrap();
            assert!(c.holds, "violation: lhs {} bound {}", c.lhs, c.bound);
        }
    }

    #[test]
    fn density_lemma_zero_function() {
        let grid = unit_grid(50);
        let f = vec![0.0; grid.node_count()];
        let c = check_density_lemma(&f, &[0.1, 0.5, 0.9], 1.0, &grid).unwrap();
        assert_eq!(c.empirical_mean, 0.0);
        assert_eq!(c.integral, 0.0);
        assert!(c.bound_holds);
    }

    #[test]
    fn density_lemma_constant_function() {
        let grid = unit_grid(100);
        let f = vec![1.0; grid.node_count()];
        let strikes =
            sample_strikes(10_000, &StrikeDensitySpec::uniform(1.0).unwrap(), 8).unwrap();
        let c = check_density_lemma(&f, &strikes, 1.0, &grid).unwrap();
        assert!((c.empirical_mean - 1.0).abs() < 1e-9);
        assert!((c.integral - 1.0).abs() < 1e-12);
        assert!(c.bound_holds);
    }

    #[test]
    fn density_lemma_quadratic_oracle() {
        // Closed-form moments: ∫₀¹ x² dx = 1/3 and E[K²] = 1/3 for uniform
        // strikes.
        let grid = unit_grid(400);
        let f: Vec<f64> = (0..grid.node_count())
            .map(|j| grid.node(j) * grid.node(j))
            .collect();
        let strikes =
            sample_strikes(100_000, &StrikeDensitySpec::uniform(1.0).unwrap(), 9).unwrap();
        let c = check_density_lemma(&f, &strikes, 1.0, &grid).unwrap();
        assert!((c.integral - 1.0 / 3.0).abs() < 1e-5);
        assert!((c.empirical_mean - 1.0 / 3.0).abs() < 0.01);
        assert!(c.bound_holds);
    }

    #[test]
    fn density_lemma_rejects_negative_f() {
        let grid = unit_grid(10);
        let mut f = vec![0.5; grid.node_count()];
        f[3] = -0.1;
        assert!(check_density_lemma(&f, &[0.5], 1.0, &grid).is_err());
    }

    fn fitted_setup() -> (Grid, QuoteSet, Estimate) {
        let grid = unit_grid(100);
        let truth = make_kernel(&KernelSpec::default_bimodal(), &grid).unwrap();
        let strikes =
            sample_strikes(50, &StrikeDensitySpec::uniform(1.0).unwrap(), 17).unwrap();
        let quotes = generate_quotes(&truth, &strikes, &NoiseSpec::gaussian(0.02, 18)).unwrap();
        let est = fit_cls(&quotes, &grid, &FitOptions::default()).unwrap();
        (grid, quotes, est)
    }

    #[test]
    fn projection_equality_at_the_estimate_itself() {
        let (_, quotes, est) = fitted_setup();
        let trial = est.kernel.clone();
        let c = check_projection_inequality(&quotes, &est, &[trial]).unwrap();
        assert!(c.worst_slack.abs() <= 1e-12, "slack {}", c.worst_slack);
        assert!(c.all_pass);
    }

    #[test]
    fn random_feasible_kernels_all_pass() {
        let (grid, quotes, est) = fitted_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(900);
        let trials: Vec<CumulativeKernel> =
            (0..100).map(|_| random_kernel(&grid, &mut rng)).collect();
        let c = check_projection_inequality(&quotes, &est, &trials).unwrap();
        assert!(c.all_pass, "worst slack {}", c.worst_slack);
    }

    #[test]
    fn zero_kernel_gives_strictly_positive_slack() {
        let (grid, quotes, est) = fitted_setup();
        let zero = CumulativeKernel::constant(grid, 0.0).unwrap();
        let c = check_projection_inequality(&quotes, &est, &[zero]).unwrap();
        assert!(c.worst_slack > 0.0, "slack {}", c.worst_slack);
    }

    #[test]
    fn mismatched_trial_grid_is_rejected() {
        let (_, quotes, est) = fitted_setup();
        let other = CumulativeKernel::constant(unit_grid(50), 0.1).unwrap();
        assert!(check_projection_inequality(&quotes, &est, &[other]).is_err());
    }
}
