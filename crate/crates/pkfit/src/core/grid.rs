use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Uniform discretization of the factor axis `[0, B]` into `M` cells with
/// nodes `x_j = j·B/M`, `j = 0..=M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct Grid {
    upper_bound: f64,
    cells: usize,
}

#[derive(Deserialize)]
struct RawGrid {
    upper_bound: f64,
    cells: usize,
}

impl TryFrom<RawGrid> for Grid {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        Grid::new(raw.upper_bound, raw.cells)
    }
}

impl Grid {
    pub fn new(upper_bound: f64, cells: usize) -> Result<Self> {
        if !upper_bound.is_finite() || upper_bound <= 0.0 {
            return Err(Error::Spec(format!(
                "grid upper bound must be finite and positive, got {upper_bound}"
            )));
        }
        if cells < 2 {
            return Err(Error::Spec(format!(
                "grid needs at least 2 cells, got {cells}"
            )));
        }
        Ok(Self { upper_bound, cells })
    }

    /// The default desk-scale grid: `B = 1`, `M = 400`. Discretization error
    /// at this resolution is well below the noise levels used in studies.
    pub fn default_unit() -> Self {
        Self {
            upper_bound: 1.0,
            cells: 400,
        }
    }

    /// Upper factor bound `B`.
    pub fn upper_bound(&self) -> f64 {
        self.upper_bound
    }

    /// Number of cells `M`.
    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Number of nodes, `M + 1`.
    pub fn node_count(&self) -> usize {
        self.cells + 1
    }

    /// Cell width `Δx = B/M`.
    pub fn dx(&self) -> f64 {
        self.upper_bound / self.cells as f64
    }

    /// Node `x_j`. Evaluated as `B·(j/M)` so that `x_0 = 0` and `x_M = B`
    /// hold exactly in floating point.
    pub fn node(&self, j: usize) -> f64 {
        debug_assert!(j <= self.cells);
        self.upper_bound * (j as f64 / self.cells as f64)
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.cells).map(|j| self.node(j)).collect()
    }

    /// Midpoint of cell `c` (the cell spanning `[x_c, x_{c+1}]`).
    pub fn cell_midpoint(&self, c: usize) -> f64 {
        debug_assert!(c < self.cells);
        self.upper_bound * ((c as f64 + 0.5) / self.cells as f64)
    }

    /// Index of the cell containing `x`, clamped so `x = B` maps to the last
    /// cell.
    pub fn cell_of(&self, x: f64) -> usize {
        debug_assert!((0.0..=self.upper_bound).contains(&x));
        let c = (x / self.dx()).floor() as usize;
        c.min(self.cells - 1)
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.upper_bound == other.upper_bound && self.cells == other.cells
    }
}

impl Default for Grid {
    fn default() -> Self {
        Self::default_unit()
    }
}
