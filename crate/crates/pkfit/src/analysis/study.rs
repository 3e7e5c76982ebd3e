use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::core::{l2_distance_within, sup_distance_within, CumulativeKernel, Grid};
use crate::estimators::{fit_cls, fit_rme, lambda_schedule, FitOptions, DEFAULT_GAMMA,
    DEFAULT_LAMBDA0};
use crate::synth::{
    generate_quotes, make_kernel, replication_seed, sample_strikes, stream_seed, KernelSpec,
    NoiseSpec, StrikeDensitySpec,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cls,
    Rme,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Cls => write!(f, "cls"),
            Method::Rme => write!(f, "rme"),
        }
    }
}

/// Full configuration of a Monte Carlo consistency study.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub truth: KernelSpec,
    /// Prior used by the relaxed entropy method.
    pub prior: KernelSpec,
    pub grid: Grid,
    pub n_schedule: Vec<usize>,
    pub replications: usize,
    pub noise: NoiseSpec,
    pub strike_spec: StrikeDensitySpec,
    pub methods: Vec<Method>,
    pub master_seed: u64,
    pub lambda0: f64,
    pub gamma: f64,
    pub fit_options: FitOptions,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            truth: KernelSpec::default_bimodal(),
            prior: KernelSpec::Uniform {
                total_mass: 1.0,
                base: 0.0,
            },
            grid: Grid::default_unit(),
            n_schedule: vec![100, 200, 400, 800, 1600],
            replications: 20,
            noise: NoiseSpec::gaussian(0.01, 0),
            strike_spec: StrikeDensitySpec::uniform(1.0).expect("valid default"),
            methods: vec![Method::Cls, Method::Rme],
            master_seed: 0,
            lambda0: DEFAULT_LAMBDA0,
            gamma: DEFAULT_GAMMA,
            fit_options: FitOptions::default(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_schedule.is_empty() {
            return Err(Error::Spec("n_schedule must be non-empty".into()));
        }
        if self.n_schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Spec("n_schedule must be strictly increasing".into()));
        }
        if self.n_schedule[0] == 0 {
            return Err(Error::Spec("sample sizes must be positive".into()));
        }
        if self.replications == 0 {
            return Err(Error::Spec("need at least one replication".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Spec("select at least one method".into()));
        }
        if self.strike_spec.k_bar > self.grid.upper_bound() {
            return Err(Error::Spec(format!(
                "strike bound {} exceeds the grid bound {}",
                self.strike_spec.k_bar,
                self.grid.upper_bound()
            )));
        }
        self.noise.validate()?;
        self.fit_options.validate()?;
        lambda_schedule(1, self.lambda0, self.gamma)?;
        Ok(())
    }
}

/// One fit inside a study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyRow {
    pub method: Method,
    pub n: usize,
    pub replication: usize,
    /// Sup-norm error against the truth on the identifiable region.
    pub sup_error: f64,
    /// L² error against the truth on the identifiable region.
    pub l2_error: f64,
    pub objective: f64,
    pub runtime_ms: f64,
}

/// Median errors per `(method, N)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MedianRow {
    pub method: Method,
    pub n: usize,
    pub sup_error: f64,
    pub l2_error: f64,
}

/// Soft consistency check: median error at the largest sample size against
/// the smallest one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrendCheck {
    pub method: Method,
    pub n_small: usize,
    pub n_large: usize,
    pub sup_ratio: f64,
    pub l2_ratio: f64,
    /// Both medians shrank from the smallest to the largest sample size.
    pub decreasing: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    pub medians: Vec<MedianRow>,
    pub trends: Vec<TrendCheck>,
    /// Human-readable descriptions of fits that failed (kept out of `rows`).
    pub failures: Vec<String>,
    pub attempted: usize,
}

impl StudyReport {
    pub fn median_for(&self, method: Method, n: usize) -> Option<&MedianRow> {
        self.medians.iter().find(|m| m.method == method && m.n == n)
    }
}

/// Runs the Monte Carlo consistency study: for each sample size and
/// replication, samples strikes, generates noisy quotes, fits each method
/// (RME with `λ_N = λ₀·N^(−γ)` against the configured prior), and records
/// errors against the truth on the identifiable region `[0, max strike]`.
///
/// Replications run in parallel; every replication derives its own seeds, so
/// the report is identical across reruns and thread schedules. Individual
/// fit failures are recorded, not fatal; the study aborts only if more than
/// half of all fits fail.
pub fn run_consistency_study(config: &StudyConfig) -> Result<StudyReport> {
    config.validate()?;
    let truth = make_kernel(&config.truth, &config.grid)?;
    let prior = make_kernel(&config.prior, &config.grid)?;

    let tasks: Vec<(usize, usize)> = config
        .n_schedule
        .iter()
        .flat_map(|&n| (0..config.replications).map(move |r| (n, r)))
        .collect();

    let outcomes: Vec<(Vec<StudyRow>, Vec<String>)> = tasks
        .par_iter()
        .map(|&(n, rep)| run_replication(config, &truth, &prior, n, rep))
        .collect();

    let mut rows: Vec<StudyRow> = Vec::new();
    let mut failures: Vec<String> = Vec::new();
    for (mut r, mut f) in outcomes {
        rows.append(&mut r);
        failures.append(&mut f);
    }
    rows.sort_by(|a, b| {
        (a.method.to_string(), a.n, a.replication).cmp(&(b.method.to_string(), b.n, b.replication))
    });

    let attempted = tasks.len() * config.methods.len();
    if failures.len() * 2 > attempted {
        return Err(Error::Input(format!(
            "study aborted: {} of {attempted} fits failed",
            failures.len()
        )));
    }

    let mut medians = Vec::new();
    for &method in &config.methods {
        for &n in &config.n_schedule {
            let sup: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == method && r.n == n)
                .map(|r| r.sup_error)
                .collect();
            let l2: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == method && r.n == n)
                .map(|r| r.l2_error)
                .collect();
            if sup.is_empty() {
                continue;
            }
            medians.push(MedianRow {
                method,
                n,
                sup_error: median(sup),
                l2_error: median(l2),
            });
        }
    }

    let n_small = *config.n_schedule.first().unwrap();
    let n_large = *config.n_schedule.last().unwrap();
    let mut trends = Vec::new();
    for &method in &config.methods {
        let (Some(small), Some(large)) = (
            medians.iter().find(|m| m.method == method && m.n == n_small),
            medians.iter().find(|m| m.method == method && m.n == n_large),
        ) else {
            continue;
        };
        let sup_ratio = large.sup_error / small.sup_error;
        let l2_ratio = large.l2_error / small.l2_error;
        trends.push(TrendCheck {
            method,
            n_small,
            n_large,
            sup_ratio,
            l2_ratio,
            decreasing: sup_ratio < 1.0 && l2_ratio < 1.0,
        });
    }

    Ok(StudyReport {
        rows,
        medians,
        trends,
        failures,
        attempted,
    })
}

fn run_replication(
    config: &StudyConfig,
    truth: &CumulativeKernel,
    prior: &CumulativeKernel,
    n: usize,
    rep: usize,
) -> (Vec<StudyRow>, Vec<String>) {
    let rep_seed = replication_seed(config.master_seed, rep as u64);
    let mut rows = Vec::new();
    let mut failures = Vec::new();

    let strikes = match sample_strikes(n, &config.strike_spec, stream_seed(rep_seed, n, 0)) {
        Ok(s) => s,
        Err(e) => {
            failures.push(format!("n={n} rep={rep}: strike sampling failed: {e}"));
            return (rows, failures);
        }
    };
    let noise = NoiseSpec {
        seed: stream_seed(rep_seed, n, 1),
        ..config.noise
    };
    let quotes = match generate_quotes(truth, &strikes, &noise) {
        Ok(q) => q,
        Err(e) => {
            failures.push(format!("n={n} rep={rep}: quote generation failed: {e}"));
            return (rows, failures);
        }
    };
    let region = quotes.max_strike();

    for &method in &config.methods {
        let start = Instant::now();
        let fit = match method {
            Method::Cls => fit_cls(&quotes, &config.grid, &config.fit_options),
            Method::Rme => lambda_schedule(n, config.lambda0, config.gamma).and_then(|lambda| {
                fit_rme(&quotes, prior, lambda, &config.grid, &config.fit_options)
            }),
        };
        let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
        match fit {
            Ok(est) => {
                let sup = sup_distance_within(&est.kernel, truth, region);
                let l2 = l2_distance_within(&est.kernel, truth, region);
                match (sup, l2) {
                    (Ok(sup_error), Ok(l2_error)) => rows.push(StudyRow {
                        method,
                        n,
                        replication: rep,
                        sup_error,
                        l2_error,
                        objective: est.objective,
                        runtime_ms,
                    }),
                    _ => failures.push(format!("{method} n={n} rep={rep}: error metric failed")),
                }
            }
            Err(e) => failures.push(format!("{method} n={n} rep={rep}: {e}")),
        }
    }
    (rows, failures)
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
