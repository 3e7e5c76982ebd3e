use crate::{Error, Result};

/// Observed `(strike, price)` pairs, possibly with a known noise level.
///
/// Prices may be negative: the observation model is `S_i = S(K_i) + ε_i`
/// with additive unclipped noise, and estimators must tolerate that.
#[derive(Debug, Clone, PartialEq)]
pub struct QuoteSet {
    strikes: Vec<f64>,
    prices: Vec<f64>,
    noise_sigma: Option<f64>,
    seed: Option<u64>,
    k_bar: f64,
}

impl QuoteSet {
    pub fn new(
        strikes: Vec<f64>,
        prices: Vec<f64>,
        noise_sigma: Option<f64>,
        seed: Option<u64>,
        k_bar: f64,
    ) -> Result<Self> {
        if strikes.is_empty() {
            return Err(Error::Input("quote set must contain at least one quote".into()));
        }
        if strikes.len() != prices.len() {
            return Err(Error::Input(format!(
                "{} strikes but {} prices",
                strikes.len(),
                prices.len()
            )));
        }
        if !k_bar.is_finite() || k_bar <= 0.0 {
            return Err(Error::Input(format!(
                "strike bound must be finite and positive, got {k_bar}"
            )));
        }
        if let Some((i, k)) = strikes
            .iter()
            .enumerate()
            .find(|(_, k)| !k.is_finite() || **k < 0.0 || **k > k_bar)
        {
            return Err(Error::Input(format!(
                "strike {i} = {k} outside [0, {k_bar}]"
            )));
        }
        if prices.iter().any(|p| !p.is_finite()) {
            return Err(Error::Input("prices must be finite".into()));
        }
        if let Some(sigma) = noise_sigma {
            if !sigma.is_finite() || sigma < 0.0 {
                return Err(Error::Input(format!(
                    "noise sigma must be finite and non-negative, got {sigma}"
                )));
            }
        }
        Ok(Self {
            strikes,
            prices,
            noise_sigma,
            seed,
            k_bar,
        })
    }

    pub fn len(&self) -> usize {
        self.strikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strikes.is_empty()
    }

    pub fn strikes(&self) -> &[f64] {
        &self.strikes
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn noise_sigma(&self) -> Option<f64> {
        self.noise_sigma
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Recorded strike bound `K̄`.
    pub fn k_bar(&self) -> f64 {
        self.k_bar
    }

    /// Largest observed strike; put quotes carry no information above it.
    pub fn max_strike(&self) -> f64 {
        self.strikes.iter().fold(0.0, |a, &k| a.max(k))
    }

    /// Quotes with every price scaled by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.strikes.clone(),
            self.prices.iter().map(|p| c * p).collect(),
            self.noise_sigma.map(|s| c.abs() * s),
            self.seed,
            self.k_bar,
        )
    }
}
