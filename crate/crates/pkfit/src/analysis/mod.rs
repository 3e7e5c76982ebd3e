//! Executable diagnostics: the ill-posedness demonstration, empirical
//! δ-entropy of function families, inequality checkers, and the Monte Carlo
//! consistency study.

mod checks;
mod entropy;
mod illposed;
mod study;

pub use checks::{
    check_continuity_bound, check_density_lemma, check_projection_inequality, ContinuityCheck,
    DensityLemmaCheck, ProjectionCheck,
};
pub use entropy::{empirical_entropy, EntropyReport};
pub use illposed::{illposed_demo, IllposedReport};
pub use study::{
    run_consistency_study, MedianRow, Method, StudyConfig, StudyReport, StudyRow, TrendCheck,
};
