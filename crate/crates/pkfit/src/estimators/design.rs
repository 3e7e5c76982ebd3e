use ndarray::{Array1, Array2};

use crate::core::Grid;

/// Linear representation of put pricing over the kernel parameters.
///
/// `price_put(P, K) = base·K + Σ_c w_c·ramp_integral(c, K)` exactly, so the
/// design matrix reproduces the pricing operator up to floating-point
/// reassociation. Column 0 is the base column when `include_base` is set.
pub(crate) struct PutDesign {
    pub a: Array2<f64>,
    pub gram: Array2<f64>,
}

impl PutDesign {
    pub fn build(grid: &Grid, strikes: &[f64], include_base: bool) -> Self {
        let n = strikes.len();
        let m = grid.cells();
        let offset = usize::from(include_base);
        let cols = m + offset;
        let mut a = Array2::zeros((n, cols));
        for (i, &k) in strikes.iter().enumerate() {
            if include_base {
                a[[i, 0]] = k;
            }
            for c in 0..m {
                let v = ramp_integral(grid, c, k);
                if v == 0.0 {
                    break; // ramps past the strike contribute nothing
                }
                a[[i, offset + c]] = v;
            }
        }
        let gram = a.t().dot(&a);
        Self { a, gram }
    }

    #[cfg(test)]
    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    /// `Aᵀy` for a price vector `y`.
    pub fn aty(&self, prices: &[f64]) -> Vec<f64> {
        let y = Array1::from_iter(prices.iter().copied());
        self.a.t().dot(&y).to_vec()
    }

    /// Model prices `A·z` for a parameter vector `z`.
    pub fn predict(&self, z: &[f64]) -> Vec<f64> {
        let zv = Array1::from_iter(z.iter().copied());
        self.a.dot(&zv).to_vec()
    }
}

/// `∫₀ᴷ ramp_c(x) dx` where `ramp_c` rises linearly from 0 to 1 over cell `c`
/// (the span `[x_c, x_{c+1}]`) and stays at 1 afterwards. This is the exact
/// contribution of increment `w_c` to the put price at strike `K`.
pub(crate) fn ramp_integral(grid: &Grid, cell: usize, strike: f64) -> f64 {
    let xl = grid.node(cell);
    if strike <= xl {
        return 0.0;
    }
    let xr = grid.node(cell + 1);
    let dx = grid.dx();
    if strike <= xr {
        let t = strike - xl;
        0.5 * t * t / dx
    } else {
        0.5 * dx + (strike - xr)
    }
}
