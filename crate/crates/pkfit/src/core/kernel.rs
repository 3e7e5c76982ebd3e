use serde::{Deserialize, Serialize};

use super::Grid;
use crate::{Error, Result};

/// Non-decreasing, bounded, piecewise-linear cumulative pricing kernel.
///
/// Stored as a base value `P(0) ≥ 0` plus non-negative per-cell increments
/// `w_j`, so that the node values are `P_j = base + Σ_{l ≤ j} w_l` and `P(x)`
/// is the piecewise-linear interpolant between nodes. Parameterizing the
/// monotone cone by increments turns every shape constraint into a sign
/// condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernel")]
pub struct CumulativeKernel {
    grid: Grid,
    base: f64,
    increments: Vec<f64>,
    #[serde(skip)]
    node_values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawKernel {
    grid: Grid,
    base: f64,
    increments: Vec<f64>,
}

impl TryFrom<RawKernel> for CumulativeKernel {
    type Error = Error;

    fn try_from(raw: RawKernel) -> Result<Self> {
        CumulativeKernel::new(raw.grid, raw.base, raw.increments)
    }
}

impl CumulativeKernel {
    pub fn new(grid: Grid, base: f64, increments: Vec<f64>) -> Result<Self> {
        if !base.is_finite() || base < 0.0 {
            return Err(Error::Input(format!(
                "kernel base must be finite and non-negative, got {base}"
            )));
        }
        if increments.len() != grid.cells() {
            return Err(Error::Input(format!(
                "expected {} increments (one per cell), got {}",
                grid.cells(),
                increments.len()
            )));
        }
        if let Some((j, w)) = increments
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::Input(format!(
                "increment {j} must be finite and non-negative, got {w}"
            )));
        }
        let mut node_values = Vec::with_capacity(grid.node_count());
        let mut acc = base;
        node_values.push(acc);
        for &w in &increments {
            acc += w;
            node_values.push(acc);
        }
        if !acc.is_finite() {
            return Err(Error::Input("kernel node values overflow".into()));
        }
        Ok(Self {
            grid,
            base,
            increments,
            node_values,
        })
    }

    /// Kernel with constant value `level` on the whole grid.
    pub fn constant(grid: Grid, level: f64) -> Result<Self> {
        let m = grid.cells();
        Self::new(grid, level, vec![0.0; m])
    }

    /// Builds a kernel from node values, validating monotonicity.
    pub fn from_node_values(grid: Grid, values: &[f64]) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::Input(format!(
                "expected {} node values, got {}",
                grid.node_count(),
                values.len()
            )));
        }
        let increments = values.windows(2).map(|w| w[1] - w[0]).collect();
        Self::new(grid, values[0], increments)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `P(0)`.
    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Node values `P_j`, length `M + 1`.
    pub fn node_values(&self) -> &[f64] {
        &self.node_values
    }

    pub fn node_value(&self, j: usize) -> f64 {
        self.node_values[j]
    }

    /// `P(B)`, the largest value the kernel attains.
    pub fn max_value(&self) -> f64 {
        *self.node_values.last().unwrap()
    }

    /// `P(B) − P(0)`.
    pub fn total_mass(&self) -> f64 {
        self.max_value() - self.base
    }

    /// Piecewise-linear evaluation at `x ∈ [0, B]`.
    pub fn value_at(&self, x: f64) -> Result<f64> {
        if !(0.0..=self.grid.upper_bound()).contains(&x) {
            return Err(Error::Domain(format!(
                "x = {x} outside [0, {}]",
                self.grid.upper_bound()
            )));
        }
        let c = self.grid.cell_of(x);
        let t = x - self.grid.node(c);
        let slope = (self.node_values[c + 1] - self.node_values[c]) / self.grid.dx();
        Ok(self.node_values[c] + slope * t)
    }

    /// `a·P1 + b·P2` for `a, b ≥ 0` on a shared grid.
    pub fn linear_combination(
        a: f64,
        p1: &CumulativeKernel,
        b: f64,
        p2: &CumulativeKernel,
    ) -> Result<Self> {
        if !p1.grid.same_as(&p2.grid) {
            return Err(Error::GridMismatch(
                "linear combination of kernels on different grids".into(),
            ));
        }
        if a < 0.0 || b < 0.0 {
            return Err(Error::Input(format!(
                "coefficients must be non-negative, got a={a}, b={b}"
            )));
        }
        let increments = p1
            .increments
            .iter()
            .zip(&p2.increments)
            .map(|(w1, w2)| a * w1 + b * w2)
            .collect();
        Self::new(p1.grid, a * p1.base + b * p2.base, increments)
    }
}
