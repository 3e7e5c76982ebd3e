use super::Grid;
use crate::{Error, Result};

/// Bounded-variation payoff `F(·, θ)` sampled at the grid nodes.
///
/// `F(x_M) = 0` is required (payoffs have finite support inside `[0, B]`).
/// `lipschitz_const` is the declared uniform-in-θ Lipschitz constant `C₁`
/// with `|F(x, θ₁) − F(x, θ₂)| ≤ C₁|θ₁ − θ₂|`; `variation_bound` bounds the
/// total variation of `F(·, θ)` over `[0, B]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Payoff {
    grid: Grid,
    values: Vec<f64>,
    theta: f64,
    lipschitz_const: f64,
    variation_bound: f64,
}

impl Payoff {
    pub fn new(
        grid: Grid,
        values: Vec<f64>,
        theta: f64,
        lipschitz_const: f64,
        variation_bound: f64,
    ) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::Input(format!(
                "expected {} payoff samples, got {}",
                grid.node_count(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("payoff samples must be finite".into()));
        }
        let terminal = *values.last().unwrap();
        if terminal != 0.0 {
            return Err(Error::Input(format!(
                "payoff must vanish at the last node (finite support), got F(B) = {terminal}"
            )));
        }
        if !theta.is_finite() {
            return Err(Error::Input("theta must be finite".into()));
        }
        if lipschitz_const.is_nan() || lipschitz_const < 0.0 {
            return Err(Error::Input(
                "Lipschitz constant must be non-negative".into(),
            ));
        }
        if variation_bound.is_nan() || variation_bound < 0.0 {
            return Err(Error::Input("variation bound must be non-negative".into()));
        }
        let tv = discrete_tv(&values);
        if tv > variation_bound * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::Input(format!(
                "discrete total variation {tv} exceeds declared bound {variation_bound}"
            )));
        }
        Ok(Self {
            grid,
            values,
            theta,
            lipschitz_const,
            variation_bound,
        })
    }

    /// European put payoff `max(K − x, 0)` with `0 ≤ K ≤ B`. The put family
    /// is uniformly Lipschitz in the strike with constant 1, and its total
    /// variation over `[0, B]` is `K`.
    pub fn put(grid: Grid, strike: f64) -> Result<Self> {
        if !(0.0..=grid.upper_bound()).contains(&strike) {
            return Err(Error::Domain(format!(
                "put strike {strike} outside [0, {}]",
                grid.upper_bound()
            )));
        }
        let values: Vec<f64> = (0..grid.node_count())
            .map(|j| (strike - grid.node(j)).max(0.0))
            .collect();
        Self::new(grid, values, strike, 1.0, strike)
    }

    /// Digital payoff `1_{x ≤ K}` sampled at the nodes, with a single unit
    /// down-jump across the cell containing `K`. Requires `K < B` so the
    /// payoff vanishes at the last node. The digital family is not Lipschitz
    /// in `K`, so the declared constant is infinite.
    pub fn digital(grid: Grid, strike: f64) -> Result<Self> {
        if !(0.0..grid.upper_bound()).contains(&strike) {
            return Err(Error::Domain(format!(
                "digital strike {strike} outside [0, {})",
                grid.upper_bound()
            )));
        }
        let values: Vec<f64> = (0..grid.node_count())
            .map(|j| if grid.node(j) <= strike { 1.0 } else { 0.0 })
            .collect();
        Self::new(grid, values, strike, f64::INFINITY, 1.0)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn lipschitz_const(&self) -> f64 {
        self.lipschitz_const
    }

    pub fn variation_bound(&self) -> f64 {
        self.variation_bound
    }

    /// Discrete total variation `Σ_j |F(x_{j+1}) − F(x_j)|`.
    pub fn total_variation(&self) -> f64 {
        discrete_tv(&self.values)
    }
}

fn discrete_tv(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Result of checking a payoff family for uniform Lipschitz continuity in θ
/// and uniformly bounded variation. Violations are reported, never thrown.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FamilyReport {
    pub n_payoffs: usize,
    /// Worst observed `sup_x |F(·,θ₁) − F(·,θ₂)| / (C₁·|θ₁ − θ₂|)` over all
    /// pairs with distinct θ; 0 when there is no comparable pair.
    pub worst_lipschitz_ratio: f64,
    pub worst_lipschitz_pair: Option<(usize, usize)>,
    pub lipschitz_ok: bool,
    /// Worst observed `TV(F) / variation_bound`; 0 for payoffs declaring a
    /// zero bound with zero variation.
    pub worst_variation_ratio: f64,
    pub max_total_variation: f64,
    pub variation_ok: bool,
}

impl FamilyReport {
    pub fn passed(&self) -> bool {
        self.lipschitz_ok && self.variation_ok
    }
}

/// Checks a payoff family for the uniform Lipschitz property (pairwise, using
/// the larger of the two declared constants) and for the declared variation
/// bounds. A single payoff yields a vacuously passing report.
pub fn validate_payoff_family(payoffs: &[Payoff]) -> Result<FamilyReport> {
    if let Some(first) = payoffs.first() {
        if payoffs.iter().any(|p| !p.grid.same_as(&first.grid)) {
            return Err(Error::GridMismatch(
                "payoff family must share one grid".into(),
            ));
        }
    }

    let slack = 1.0 + 1e-12;
    let mut worst_lip = 0.0_f64;
    let mut worst_pair = None;
    for i in 0..payoffs.len() {
        for j in (i + 1)..payoffs.len() {
            let (a, b) = (&payoffs[i], &payoffs[j]);
            let dtheta = (a.theta - b.theta).abs();
            if dtheta == 0.0 {
                continue;
            }
            let sup: f64 = a
                .values
                .iter()
                .zip(&b.values)
                .map(|(u, v)| (u - v).abs())
                .fold(0.0, f64::max);
            let declared = a.lipschitz_const.max(b.lipschitz_const);
            let ratio = sup / (declared * dtheta);
            if ratio > worst_lip {
                worst_lip = ratio;
                worst_pair = Some((i, j));
            }
        }
    }

    let mut worst_var = 0.0_f64;
    let mut max_tv = 0.0_f64;
    for p in payoffs {
        let tv = p.total_variation();
        max_tv = max_tv.max(tv);
        let ratio = if p.variation_bound > 0.0 {
            tv / p.variation_bound
        } else if tv > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        worst_var = worst_var.max(ratio);
    }

    Ok(FamilyReport {
        n_payoffs: payoffs.len(),
        worst_lipschitz_ratio: worst_lip,
        worst_lipschitz_pair: worst_pair,
        lipschitz_ok: worst_lip <= slack,
        worst_variation_ratio: worst_var,
        max_total_variation: max_tv,
        variation_ok: worst_var <= slack,
    })
}
