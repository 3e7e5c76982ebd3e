use ndarray::Array2;

use super::chol::{cholesky_in_place, cholesky_solve};
use super::cls::{check_strikes, fit_cls};
use super::design::PutDesign;
use super::{divergence, Estimate, EntropyForm, FitOptions};
use crate::core::{price_put, CumulativeKernel, Grid, QuoteSet};
use crate::{Error, Result};

// Increments below this are treated as pinned to the boundary: their true
// optimum underflows f64, so optimality there means the data gradient does
// not push upward.
const W_FLOOR: f64 = 1e-290;
const W_MIN: f64 = 1e-300;
const W_MAX: f64 = 1e150;
// Cells this small are left to the multiplicative fixed-point update and
// excluded from the Newton system.
const W_PRUNE: f64 = 1e-150;

/// Relaxed maximum relative entropy fit: minimizes
/// `(1/N)·Σ_i (price_put(P, K_i) − S_i)² + λ·D(w ‖ w0)` over the monotone
/// cone, where `D` is the divergence selected by `opts.entropy_form`. The
/// base parameter carries no entropy penalty.
///
/// At `λ = 0` the objective is exactly the least squares problem, so the fit
/// delegates to [`fit_cls`]. For `λ > 0` every cell with a positive prior
/// increment keeps strictly positive mass, and the solver combines
/// multiplicative fixed-point updates with a damped Newton method in log
/// coordinates; both only ever accept objective decreases.
///
/// Cells where the prior increment is zero are forced to zero mass (any
/// other value has infinite divergence); if the data demand mass there, the
/// fit fails with [`Error::PriorZeroIncrement`] listing the offending cells.
pub fn fit_rme(
    quotes: &QuoteSet,
    prior: &CumulativeKernel,
    lambda: f64,
    grid: &Grid,
    opts: &FitOptions,
) -> Result<Estimate> {
    opts.validate()?;
    check_strikes(quotes, grid)?;
    if !prior.grid().same_as(grid) {
        return Err(Error::GridMismatch(
            "prior kernel lives on a different grid".into(),
        ));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Input(format!(
            "lambda must be finite and non-negative, got {lambda}"
        )));
    }

    let w0 = prior.increments();

    if lambda == 0.0 {
        let cls = fit_cls(quotes, grid, opts)?;
        let d = divergence(cls.kernel.increments(), w0, opts.entropy_form);
        if !d.is_finite() {
            let cells = offending_cells(cls.kernel.increments(), w0);
            return Err(Error::PriorZeroIncrement { cells });
        }
        return Ok(Estimate {
            objective: cls.mse_term,
            entropy_term: d,
            ..cls
        });
    }

    let design = PutDesign::build(grid, quotes.strikes(), true);
    let run = rme_minimize(&design, quotes, prior, lambda, opts);

    // Zero-prior cells are pinned at zero mass; the fit is only valid if the
    // data do not demand mass there.
    let offending: Vec<usize> = (0..w0.len())
        .filter(|&c| w0[c] == 0.0 && run.data_grad[1 + c] < -run.grad_tol)
        .collect();
    if !offending.is_empty() {
        return Err(Error::PriorZeroIncrement { cells: offending });
    }

    let kernel = CumulativeKernel::new(*grid, run.z[0], run.z[1..].to_vec())?;
    let fitted_prices: Vec<f64> = quotes
        .strikes()
        .iter()
        .map(|&k| price_put(&kernel, k))
        .collect::<Result<_>>()?;
    let n = quotes.len() as f64;
    let mse: f64 = fitted_prices
        .iter()
        .zip(quotes.prices())
        .map(|(f, s)| (f - s) * (f - s))
        .sum::<f64>()
        / n;
    let entropy = divergence(kernel.increments(), w0, opts.entropy_form);

    let estimate = Estimate {
        kernel,
        fitted_prices,
        objective: mse + lambda * entropy,
        mse_term: mse,
        entropy_term: entropy,
        iterations: run.iterations,
        kkt_residual: run.kkt_residual,
        identifiable_upper: quotes.max_strike(),
        nonunique_cells: Vec::new(),
    };
    if !run.converged {
        return Err(Error::NonConvergence {
            iterations: run.iterations,
            kkt_residual: run.kkt_residual,
            last: Box::new(estimate),
        });
    }
    Ok(estimate)
}

fn offending_cells(w: &[f64], w0: &[f64]) -> Vec<usize> {
    (0..w.len())
        .filter(|&c| w[c] > 0.0 && w0[c] == 0.0)
        .collect()
}

pub(crate) struct RmeRun {
    pub z: Vec<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
    pub data_grad: Vec<f64>,
    pub grad_tol: f64,
    /// Objective value after every accepted step, starting at the prior.
    #[cfg_attr(not(test), allow(dead_code))]
    pub objective_trace: Vec<f64>,
}

enum Var {
    Base,
    Cell(usize),
}

pub(crate) fn rme_minimize(
    design: &PutDesign,
    quotes: &QuoteSet,
    prior: &CumulativeKernel,
    lambda: f64,
    opts: &FitOptions,
) -> RmeRun {
    let n = quotes.len() as f64;
    let prices = quotes.prices();
    let w0 = prior.increments();
    let m = w0.len();
    let free: Vec<usize> = (0..m).filter(|&c| w0[c] > 0.0).collect();
    let form = opts.entropy_form;
    let gram = &design.gram;
    let aty = design.aty(prices);

    let aty_inf = aty.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let scale = 1.0_f64.max(2.0 / n * aty_inf);
    let grad_tol = opts.kkt_tol * scale;

    // Start at the prior.
    let mut z = vec![0.0; m + 1];
    z[0] = prior.base();
    for &c in &free {
        z[1 + c] = w0[c];
    }

    let eval = |z: &[f64]| -> f64 {
        let fitted = design.predict(z);
        let sse: f64 = fitted
            .iter()
            .zip(prices)
            .map(|(f, s)| (f - s) * (f - s))
            .sum();
        sse / n + lambda * divergence(&z[1..], w0, form)
    };

    let mut f = eval(&z);
    let mut trace = vec![f];
    let mut iterations = 0;
    let mut converged = false;
    let mut kkt = f64::INFINITY;
    let mut data_grad = vec![0.0; m + 1];

    while iterations < opts.max_iterations {
        // Data gradient (2/N)·Aᵀ(Az − S), computed from residuals to avoid
        // the cancellation in G·z − Aᵀy.
        let fitted = design.predict(&z);
        let residuals: Vec<f64> = fitted.iter().zip(prices).map(|(f, s)| f - s).collect();
        data_grad = vec![0.0; m + 1];
        for (i, &r) in residuals.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            let row = design.a.row(i);
            for j in 0..=m {
                data_grad[j] += row[j] * r;
            }
        }
        for g in data_grad.iter_mut() {
            *g *= 2.0 / n;
        }

        let ent_grad = |c: usize| -> f64 {
            let w = z[1 + c];
            match form {
                EntropyForm::Generalized => lambda * (w / w0[c]).ln(),
                EntropyForm::Paper => lambda * ((w / w0[c]).ln() + 1.0),
            }
        };

        kkt = {
            let mut worst = if z[0] > 0.0 {
                data_grad[0].abs()
            } else {
                (-data_grad[0]).max(0.0)
            };
            for &c in &free {
                let w = z[1 + c];
                let v = if w > W_FLOOR {
                    (data_grad[1 + c] + ent_grad(c)).abs()
                } else {
                    (-data_grad[1 + c]).max(0.0)
                };
                worst = worst.max(v);
            }
            worst
        };
        if kkt <= grad_tol {
            converged = true;
            break;
        }
        iterations += 1;

        // Multiplicative fixed-point jump: solves each cell's stationarity
        // condition exactly at the current data gradient, and re-optimizes
        // the (unpenalized) base in closed form. Accepted only on decrease.
        {
            let mut z_jump = z.clone();
            let shift = match form {
                EntropyForm::Generalized => 0.0,
                EntropyForm::Paper => 1.0,
            };
            for &c in &free {
                let expo = (-data_grad[1 + c] / lambda - shift).clamp(-700.0, 700.0);
                z_jump[1 + c] = (w0[c] * expo.exp()).clamp(W_MIN, W_MAX);
            }
            if gram[[0, 0]] > 0.0 {
                let mut cross = 0.0;
                for j in 1..=m {
                    cross += gram[[0, j]] * z_jump[j];
                }
                z_jump[0] = ((aty[0] - cross) / gram[[0, 0]]).max(0.0);
            }
            let f_jump = eval(&z_jump);
            if f_jump < f - 1e-15 * (1.0 + f.abs()) {
                z = z_jump;
                f = f_jump;
                trace.push(f);
                continue;
            }
        }

        // Newton step in log coordinates for the increments, linear for the
        // base (projected at zero).
        let mut vars: Vec<Var> = Vec::with_capacity(free.len() + 1);
        if gram[[0, 0]] > 0.0 && (z[0] > 0.0 || data_grad[0] < 0.0) {
            vars.push(Var::Base);
        }
        for &c in &free {
            if z[1 + c] > W_PRUNE {
                vars.push(Var::Cell(c));
            }
        }
        if vars.is_empty() {
            // Nothing movable: only floored cells remain and the jump did
            // not help; the KKT check above governs success.
            break;
        }

        let k = vars.len();
        let mut grad_v = vec![0.0; k];
        let mut h = Array2::<f64>::zeros((k, k));
        for (a, va) in vars.iter().enumerate() {
            let (ia, da) = match va {
                Var::Base => (0usize, 1.0),
                Var::Cell(c) => (1 + c, z[1 + c]),
            };
            grad_v[a] = match va {
                Var::Base => data_grad[0],
                Var::Cell(c) => z[1 + c] * (data_grad[1 + c] + ent_grad(*c)),
            };
            for (b, vb) in vars.iter().enumerate().skip(a) {
                let (ib, db) = match vb {
                    Var::Base => (0usize, 1.0),
                    Var::Cell(c) => (1 + c, z[1 + c]),
                };
                let mut v = 2.0 / n * gram[[ia, ib]] * da * db;
                if a == b {
                    if matches!(va, Var::Cell(_)) {
                        // Log-coordinate curvature: λ·w from the entropy term
                        // plus w·(total gradient), keeping only the positive
                        // part of the latter; Levenberg damping covers the
                        // indefinite remainder.
                        v += lambda * da + grad_v[a].max(0.0);
                    }
                }
                h[[a, b]] = v;
                h[[b, a]] = v;
            }
        }

        let diag_max = (0..k).map(|i| h[[i, i]]).fold(f64::MIN_POSITIVE, f64::max);
        let mut mu = 0.0_f64;
        let mut stepped = false;
        for _attempt in 0..40 {
            let mut hl = h.clone();
            if mu > 0.0 {
                for i in 0..k {
                    hl[[i, i]] += mu;
                }
            }
            if !cholesky_in_place(&mut hl) {
                mu = if mu == 0.0 { 1e-10 * diag_max } else { mu * 100.0 };
                continue;
            }
            let mut p: Vec<f64> = grad_v.iter().map(|g| -g).collect();
            cholesky_solve(&hl, &mut p);
            let dir_deriv: f64 = grad_v.iter().zip(&p).map(|(g, pi)| g * pi).sum();
            if dir_deriv >= 0.0 {
                mu = if mu == 0.0 { 1e-10 * diag_max } else { mu * 100.0 };
                continue;
            }
            let mut t = 1.0_f64;
            for _ in 0..60 {
                let mut z_new = z.clone();
                for (a, va) in vars.iter().enumerate() {
                    match va {
                        Var::Base => z_new[0] = (z[0] + t * p[a]).max(0.0),
                        Var::Cell(c) => {
                            let expo = (t * p[a]).clamp(-50.0, 50.0);
                            z_new[1 + c] = (z[1 + c] * expo.exp()).clamp(W_MIN, W_MAX);
                        }
                    }
                }
                let f_new = eval(&z_new);
                if f_new <= f + 1e-4 * t * dir_deriv {
                    z = z_new;
                    f = f_new;
                    trace.push(f);
                    stepped = true;
                    break;
                }
                t *= 0.5;
            }
            if stepped {
                break;
            }
            mu = if mu == 0.0 { 1e-10 * diag_max } else { mu * 100.0 };
        }
        if !stepped {
            // No descent direction left at this scale.
            break;
        }
    }

    RmeRun {
        z,
        iterations,
        kkt_residual: kkt,
        converged,
        data_grad,
        grad_tol,
        objective_trace: trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{l2_distance, sup_distance};
    use crate::synth::{
        generate_quotes, make_kernel, sample_strikes, KernelSpec, NoiseSpec, StrikeDensitySpec,
    };

    fn unit_grid(m: usize) -> Grid {
        Grid::new(1.0, m).unwrap()
    }

    fn bimodal_quotes(
        grid: &Grid,
        n: usize,
        sigma: f64,
        seed: u64,
    ) -> (CumulativeKernel, QuoteSet) {
        let truth = make_kernel(&KernelSpec::default_bimodal(), grid).unwrap();
        let strikes =
            sample_strikes(n, &StrikeDensitySpec::uniform(1.0).unwrap(), seed).unwrap();
        let quotes =
            generate_quotes(&truth, &strikes, &NoiseSpec::gaussian(sigma, seed ^ 0xabc)).unwrap();
        (truth, quotes)
    }

    fn uniform_prior(grid: &Grid) -> CumulativeKernel {
        make_kernel(
            &KernelSpec::Uniform {
                total_mass: 1.0,
                base: 0.0,
            },
            grid,
        )
        .unwrap()
    }

    #[test]
    fn lambda_zero_reduces_to_cls() {
        let grid = unit_grid(80);
        let (_, quotes) = bimodal_quotes(&grid, 60, 0.01, 11);
        let prior = uniform_prior(&grid);
        let opts = FitOptions::default();
        let cls = fit_cls(&quotes, &grid, &opts).unwrap();
        let rme = fit_rme(&quotes, &prior, 0.0, &grid, &opts).unwrap();
        let d = l2_distance(&cls.kernel, &rme.kernel).unwrap();
        assert!(d <= 1e-6, "distance {d}");
        assert!(rme.entropy_term.is_finite());
    }

    #[test]
    fn quotes_from_the_prior_recover_the_prior() {
        let grid = unit_grid(100);
        let prior = make_kernel(&KernelSpec::default_bimodal(), &grid).unwrap();
        let strikes =
            sample_strikes(70, &StrikeDensitySpec::uniform(1.0).unwrap(), 31).unwrap();
        let quotes = generate_quotes(&prior, &strikes, &NoiseSpec::gaussian(0.0, 32)).unwrap();
        for &lambda in &[1e-4, 1e-2, 1.0] {
            let est = fit_rme(&quotes, &prior, lambda, &grid, &FitOptions::default()).unwrap();
            let d = l2_distance(&est.kernel, &prior).unwrap();
            assert!(d <= 1e-8, "lambda {lambda}: distance {d}");
        }
    }

    #[test]
    fn large_lambda_pulls_the_fit_to_the_prior() {
        let grid = unit_grid(100);
        let prior = make_kernel(&KernelSpec::default_bimodal(), &grid).unwrap();
        // Noisy quotes from a different kernel entirely.
        let other = uniform_prior(&grid);
        let strikes =
            sample_strikes(50, &StrikeDensitySpec::uniform(1.0).unwrap(), 41).unwrap();
        let quotes = generate_quotes(&other, &strikes, &NoiseSpec::gaussian(0.02, 42)).unwrap();
        let opts = FitOptions::default();
        let cls = fit_cls(&quotes, &grid, &opts).unwrap();
        let cls_dist = l2_distance(&cls.kernel, &prior).unwrap();

        let mut last = f64::INFINITY;
        for &lambda in &[1e2, 1e4, 1e6] {
            let est = fit_rme(&quotes, &prior, lambda, &grid, &opts).unwrap();
            let d = l2_distance(&est.kernel, &prior).unwrap();
            assert!(d < last, "distance must shrink as lambda grows");
            last = d;
        }
        assert!(
            last <= 1e-3 * cls_dist,
            "at lambda = 1e6, distance {last} vs CLS distance {cls_dist}"
        );
    }

    #[test]
    fn objective_is_monotone_along_the_iterates() {
        let grid = unit_grid(60);
        let (_, quotes) = bimodal_quotes(&grid, 45, 0.02, 51);
        let prior = uniform_prior(&grid);
        let opts = FitOptions::default();
        let design = PutDesign::build(&grid, quotes.strikes(), true);
        for &lambda in &[1e-6, 1e-3, 1.0] {
            let run = rme_minimize(&design, &quotes, &prior, lambda, &opts);
            assert!(run.converged);
            for pair in run.objective_trace.windows(2) {
                assert!(
                    pair[1] <= pair[0] + 1e-12 * (1.0 + pair[0].abs()),
                    "objective increased: {} -> {}",
                    pair[0],
                    pair[1]
                );
            }
        }
    }

    #[test]
    fn solution_satisfies_finite_difference_optimality() {
        // Independent certificate: central finite differences of the
        // objective vanish at the solution (interior coordinates), and the
        // objective is convex in the increments.
        let grid = unit_grid(12);
        let (_, quotes) = bimodal_quotes(&grid, 30, 0.01, 61);
        let prior = uniform_prior(&grid);
        let lambda = 1e-3;
        let opts = FitOptions::default();
        let est = fit_rme(&quotes, &prior, lambda, &grid, &opts).unwrap();

        let w0 = prior.increments().to_vec();
        let objective = |base: f64, w: &[f64]| -> f64 {
            let kernel = CumulativeKernel::new(grid, base, w.to_vec()).unwrap();
            let n = quotes.len() as f64;
            let mse: f64 = quotes
                .strikes()
                .iter()
                .zip(quotes.prices())
                .map(|(&k, &s)| {
                    let p = price_put(&kernel, k).unwrap();
                    (p - s) * (p - s)
                })
                .sum::<f64>()
                / n;
            mse + lambda * divergence(w, &w0, EntropyForm::Generalized)
        };

        let w_hat = est.kernel.increments().to_vec();
        let b_hat = est.kernel.base();
        let f0 = objective(b_hat, &w_hat);
        for c in 0..w_hat.len() {
            let h = 1e-6 * w_hat[c].max(1e-8);
            let mut wp = w_hat.clone();
            wp[c] += h;
            let mut wm = w_hat.clone();
            wm[c] = (wm[c] - h).max(0.0);
            let fd = (objective(b_hat, &wp) - objective(b_hat, &wm)) / (2.0 * h);
            assert!(
                fd.abs() < 1e-4,
                "cell {c}: finite-difference gradient {fd}"
            );
        }
        // Base: either interior with zero gradient, or at the boundary with
        // a non-negative one.
        let hb = 1e-7;
        let f_up = objective(b_hat + hb, &w_hat);
        if b_hat > 1e-12 {
            let f_dn = objective((b_hat - hb).max(0.0), &w_hat);
            assert!(((f_up - f_dn) / (2.0 * hb)).abs() < 1e-4);
        } else {
            assert!(f_up >= f0 - 1e-12);
        }
    }

    #[test]
    fn zero_prior_cells_error_when_data_demand_mass() {
        let grid = unit_grid(20);
        // Prior puts no mass below x = 0.5.
        let mut w0 = vec![0.0; 20];
        for w in w0.iter_mut().skip(10) {
            *w = 0.1;
        }
        let prior = CumulativeKernel::new(grid, 0.0, w0).unwrap();
        // Quotes from a kernel with all its mass below 0.5.
        let mut w_truth = vec![0.0; 20];
        for w in w_truth.iter_mut().take(10) {
            *w = 0.1;
        }
        let truth = CumulativeKernel::new(grid, 0.0, w_truth).unwrap();
        let strikes: Vec<f64> = (1..=20).map(|i| i as f64 / 20.0).collect();
        let quotes = generate_quotes(&truth, &strikes, &NoiseSpec::gaussian(0.0, 5)).unwrap();
        match fit_rme(&quotes, &prior, 1e-4, &grid, &FitOptions::default()) {
            Err(Error::PriorZeroIncrement { cells }) => {
                assert!(!cells.is_empty());
                assert!(cells.iter().all(|&c| c < 10));
            }
            other => panic!("expected PriorZeroIncrement, got {other:?}"),
        }
    }

    #[test]
    fn zero_prior_cells_are_fine_when_data_agree() {
        let grid = unit_grid(20);
        let mut w0 = vec![0.0; 20];
        for w in w0.iter_mut().skip(10) {
            *w = 0.1;
        }
        let prior = CumulativeKernel::new(grid, 0.0, w0.clone()).unwrap();
        // Quotes generated from the prior itself: no demand below 0.5.
        let strikes: Vec<f64> = (1..=20).map(|i| i as f64 / 20.0).collect();
        let quotes = generate_quotes(&prior, &strikes, &NoiseSpec::gaussian(0.0, 6)).unwrap();
        let est = fit_rme(&quotes, &prior, 1e-3, &grid, &FitOptions::default()).unwrap();
        let d = sup_distance(&est.kernel, &prior).unwrap();
        assert!(d <= 1e-6, "distance {d}");
        for c in 0..10 {
            assert_eq!(est.kernel.increments()[c], 0.0);
        }
    }

    #[test]
    fn negative_lambda_is_rejected() {
        let grid = unit_grid(10);
        let prior = uniform_prior(&grid);
        let quotes = QuoteSet::new(vec![0.5], vec![0.1], None, None, 1.0).unwrap();
        assert!(fit_rme(&quotes, &prior, -1.0, &grid, &FitOptions::default()).is_err());
    }

    #[test]
    fn lambda_continuity_toward_cls() {
        let grid = unit_grid(50);
        let (_, quotes) = bimodal_quotes(&grid, 100, 0.01, 71);
        let prior = uniform_prior(&grid);
        let opts = FitOptions::default();
        let cls = fit_cls(&quotes, &grid, &opts).unwrap();
        let mut prev = f64::INFINITY;
        for &lambda in &[1e-2, 1e-3, 1e-4, 1e-5] {
            let est = fit_rme(&quotes, &prior, lambda, &grid, &opts).unwrap();
            let d = l2_distance(&est.kernel, &cls.kernel).unwrap();
            assert!(
                d <= prev + 1e-12,
                "distance to CLS grew from {prev} to {d} at lambda {lambda}"
            );
            prev = d;
        }
    }

    #[test]
    fn paper_entropy_form_also_converges() {
        let grid = unit_grid(60);
        let (_, quotes) = bimodal_quotes(&grid, 40, 0.01, 81);
        let prior = uniform_prior(&grid);
        let opts = FitOptions {
            entropy_form: EntropyForm::Paper,
            ..FitOptions::default()
        };
        let est = fit_rme(&quotes, &prior, 1e-3, &grid, &opts).unwrap();
        assert!(est.kkt_residual <= 1e-8 * 1.0_f64.max(est.objective));
        // The plain form rewards shrinking mass, so the fit sits below the
        // prior's mass here.
        assert!(est.kernel.total_mass() < prior.total_mass());
    }
}
