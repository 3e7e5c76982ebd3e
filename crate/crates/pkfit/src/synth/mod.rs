//! Synthetic-market generators: ground-truth kernels, strike samples with a
//! positive density on `[0, K̄]`, and noisy quote sets.
//!
//! All randomness flows through seeded ChaCha8 streams (a published,
//! counter-based generator), so every artifact is a pure function of its
//! seed. Replication `r` of a study uses `master_seed + r`; independent
//! streams within a replication are split off with [`stream_seed`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::core::{price_put, CumulativeKernel, Grid, QuoteSet};
use crate::{Error, Result};

/// Shape specification for a ground-truth cumulative kernel.
///
/// `total_mass` is `P(B) − P(0)`; `base` is `P(0)`. For the smooth shapes the
/// per-cell increments are the shape density sampled at cell midpoints and
/// normalized so the increments sum to `total_mass` exactly. A `table` spec
/// gives the increment profile explicitly (it is normalized the same way).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum KernelSpec {
    Uniform {
        total_mass: f64,
        #[serde(default)]
        base: f64,
    },
    Triangular {
        total_mass: f64,
        #[serde(default)]
        base: f64,
        /// Apex of the triangle density, in `[0, B]`.
        mode: f64,
    },
    Bimodal {
        total_mass: f64,
        #[serde(default)]
        base: f64,
        modes: (f64, f64),
        width: f64,
    },
    Table {
        total_mass: f64,
        #[serde(default)]
        base: f64,
        increments: Vec<f64>,
    },
}

impl KernelSpec {
    /// The default truth kernel for studies: bimodal, far from a uniform
    /// prior, with mass 0.95 and zero base.
    pub fn default_bimodal() -> Self {
        KernelSpec::Bimodal {
            total_mass: 0.95,
            base: 0.0,
            modes: (0.3, 0.7),
            width: 0.08,
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            KernelSpec::Uniform { total_mass, .. }
            | KernelSpec::Triangular { total_mass, .. }
            | KernelSpec::Bimodal { total_mass, .. }
            | KernelSpec::Table { total_mass, .. } => *total_mass,
        }
    }

    pub fn base(&self) -> f64 {
        match self {
            KernelSpec::Uniform { base, .. }
            | KernelSpec::Triangular { base, .. }
            | KernelSpec::Bimodal { base, .. }
            | KernelSpec::Table { base, .. } => *base,
        }
    }
}

/// Two-bump density profile used by the bimodal shape, before normalization.
pub fn bimodal_profile(x: f64, modes: (f64, f64), width: f64) -> f64 {
    let bump = |m: f64| (-((x - m) * (x - m)) / (2.0 * width * width)).exp();
    bump(modes.0) + bump(modes.1)
}

/// Materializes a [`KernelSpec`] on a grid. The resulting kernel has
/// `P(B) − P(0) = total_mass` to relative accuracy far below `1e-10`.
pub fn make_kernel(spec: &KernelSpec, grid: &Grid) -> Result<CumulativeKernel> {
    let mass = spec.total_mass();
    let base = spec.base();
    if !mass.is_finite() || mass < 0.0 {
        return Err(Error::Spec(format!(
            "kernel total mass must be finite and non-negative, got {mass}"
        )));
    }
    if !base.is_finite() || base < 0.0 {
        return Err(Error::Spec(format!(
            "kernel base must be finite and non-negative, got {base}"
        )));
    }
    let m = grid.cells();
    let b = grid.upper_bound();
    let profile: Vec<f64> = match spec {
        KernelSpec::Uniform { .. } => vec![1.0; m],
        KernelSpec::Triangular { mode, .. } => {
            if !(0.0..=b).contains(mode) {
                return Err(Error::Spec(format!(
                    "triangular mode {mode} outside [0, {b}]"
                )));
            }
            (0..m)
                .map(|c| {
                    let x = grid.cell_midpoint(c);
                    if x <= *mode {
                        if *mode > 0.0 {
                            x / *mode
                        } else {
                            0.0
                        }
                    } else if *mode < b {
                        (b - x) / (b - *mode)
                    } else {
                        0.0
                    }
                })
                .collect()
        }
        KernelSpec::Bimodal { modes, width, .. } => {
            if !width.is_finite() || *width <= 0.0 {
                return Err(Error::Spec(format!(
                    "bimodal width must be positive, got {width}"
                )));
            }
            (0..m)
                .map(|c| bimodal_profile(grid.cell_midpoint(c), *modes, *width))
                .collect()
        }
        KernelSpec::Table { increments, .. } => {
            if increments.len() != m {
                return Err(Error::Spec(format!(
                    "table spec has {} increments but the grid has {} cells",
                    increments.len(),
                    m
                )));
            }
            if increments.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::Spec(
                    "table increments must be finite and non-negative".into(),
                ));
            }
            increments.clone()
        }
    };

    let sum: f64 = profile.iter().sum();
    let increments = if mass == 0.0 {
        vec![0.0; m]
    } else {
        if sum <= 0.0 || !sum.is_finite() {
            return Err(Error::Spec(
                "kernel shape has no mass on the grid; cannot normalize".into(),
            ));
        }
        profile.iter().map(|f| mass * (f / sum)).collect()
    };
    CumulativeKernel::new(*grid, base, increments)
}

/// Distribution of observed strikes on `[0, K̄]`, guaranteed to have density
/// at least `lower_bound_k` everywhere there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrikeDensitySpec {
    pub kind: StrikeDensityKind,
    pub lower_bound_k: f64,
    pub k_bar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrikeDensityKind {
    Uniform,
    /// Density rising linearly from `k` at 0 to `2/K̄ − k` at `K̄`.
    LinearTilt,
}

impl StrikeDensitySpec {
    pub fn new(kind: StrikeDensityKind, lower_bound_k: f64, k_bar: f64) -> Result<Self> {
        if !k_bar.is_finite() || k_bar <= 0.0 {
            return Err(Error::Spec(format!(
                "strike bound must be finite and positive, got {k_bar}"
            )));
        }
        if !lower_bound_k.is_finite() || lower_bound_k <= 0.0 {
            return Err(Error::Spec(format!(
                "density lower bound must be positive, got {lower_bound_k}"
            )));
        }
        // The average density over [0, K̄] is 1/K̄, so no density can stay
        // above a larger floor; the uniform density must equal it.
        if lower_bound_k * k_bar > 1.0 + 1e-12 {
            return Err(Error::Spec(format!(
                "density floor {lower_bound_k} is impossible on [0, {k_bar}]"
            )));
        }
        Ok(Self {
            kind,
            lower_bound_k,
            k_bar,
        })
    }

    /// Uniform strikes on `[0, k_bar]` (density floor `1/K̄`).
    pub fn uniform(k_bar: f64) -> Result<Self> {
        let floor = 1.0 / k_bar;
        Self::new(StrikeDensityKind::Uniform, floor, k_bar)
    }

    pub fn density(&self, x: f64) -> f64 {
        if !(0.0..=self.k_bar).contains(&x) {
            return 0.0;
        }
        match self.kind {
            StrikeDensityKind::Uniform => 1.0 / self.k_bar,
            StrikeDensityKind::LinearTilt => self.lower_bound_k + self.tilt_slope() * x,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, self.k_bar);
        match self.kind {
            StrikeDensityKind::Uniform => x / self.k_bar,
            StrikeDensityKind::LinearTilt => {
                self.lower_bound_k * x + 0.5 * self.tilt_slope() * x * x
            }
        }
    }

    /// Inverse CDF; maps `u ∈ [0, 1)` to a strike.
    pub fn inv_cdf(&self, u: f64) -> f64 {
        match self.kind {
            StrikeDensityKind::Uniform => u * self.k_bar,
            StrikeDensityKind::LinearTilt => {
                let k = self.lower_bound_k;
                let a = self.tilt_slope();
                if a.abs() < 1e-300 {
                    return u * self.k_bar;
                }
                // Solve k·x + a·x²/2 = u for x ≥ 0.
                let x = (-k + (k * k + 2.0 * a * u).sqrt()) / a;
                x.clamp(0.0, self.k_bar)
            }
        }
    }

    fn tilt_slope(&self) -> f64 {
        // Chosen so the density integrates to one over [0, K̄].
        2.0 * (1.0 - self.lower_bound_k * self.k_bar) / (self.k_bar * self.k_bar)
    }
}

/// Additive price noise: mean zero, finite variance, fully seeded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    /// Mean-zero uniform noise on `[−σ√3, σ√3]` (standard deviation σ).
    Uniform,
}

impl NoiseSpec {
    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            sigma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::Spec(format!(
                "noise sigma must be finite and non-negative, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Draws `n` i.i.d. strikes from the spec density by inverse-CDF sampling.
/// Bit-reproducible for a fixed seed.
pub fn sample_strikes(n: usize, spec: &StrikeDensitySpec, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Input("strike sample size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| spec.inv_cdf(rng.random::<f64>()))
        .collect())
}

/// Generates quotes `S_i = price_put(P, K_i) + ε_i`. Prices are not clipped
/// at zero: noise may push them negative.
pub fn generate_quotes(
    kernel: &CumulativeKernel,
    strikes: &[f64],
    noise: &NoiseSpec,
) -> Result<QuoteSet> {
    noise.validate()?;
    if strikes.is_empty() {
        return Err(Error::Input("need at least one strike".into()));
    }
    let b = kernel.grid().upper_bound();
    if strikes.iter().any(|k| !k.is_finite() || *k < 0.0 || *k > b) {
        return Err(Error::Input(format!("strikes must lie in [0, {b}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut prices = Vec::with_capacity(strikes.len());
    for &k in strikes {
        let clean = price_put(kernel, k)?;
        let eps = if noise.sigma == 0.0 {
            0.0
        } else {
            match noise.kind {
                NoiseKind::Gaussian => Normal::new(0.0, noise.sigma)
                    .expect("sigma validated")
                    .sample(&mut rng),
                NoiseKind::Uniform => {
                    let half_width = noise.sigma * 3.0_f64.sqrt();
                    Uniform::new_inclusive(-half_width, half_width)
                        .expect("sigma validated")
                        .sample(&mut rng)
                }
            }
        };
        prices.push(clean + eps);
    }
    let max_strike = strikes.iter().fold(0.0_f64, |a, &k| a.max(k));
    let k_bar = if max_strike > 0.0 { max_strike } else { b };
    QuoteSet::new(
        strikes.to_vec(),
        prices,
        Some(noise.sigma),
        Some(noise.seed),
        k_bar,
    )
}

/// Seed for replication `r` of a study.
pub fn replication_seed(master_seed: u64, replication: u64) -> u64 {
    master_seed.wrapping_add(replication)
}

/// Splits an independent stream (strikes, noise, ...) off a replication seed
/// for a given sample size, via SplitMix64 mixing.
pub fn stream_seed(rep_seed: u64, n: usize, stream: u64) -> u64 {
    splitmix64(rep_seed ^ splitmix64((n as u64) << 8 | stream))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
