use serde::Serialize;

use crate::{Error, Result};

/// Empirical δ-entropy of a function family.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EntropyReport {
    /// Covering radius.
    pub delta: f64,
    /// Number of evaluation points.
    pub n: usize,
    /// Greedy internal covering count — an upper bound on the minimal number
    /// of δ-balls (centered at family members) needed to cover the family.
    pub m_hat: usize,
    /// `(1/n)·ln(m_hat)`.
    pub n_hat: f64,
}

/// Measures how "thin" a family of functions is under the empirical
/// root-mean-square distance `d_n(f, g) = sqrt((1/n)·Σ_i (f(x_i) − g(x_i))²)`.
///
/// A greedy internal covering repeatedly picks the first uncovered member as
/// a center and removes every member within `delta` of it. Families whose
/// `n_hat` tends to zero as `n` grows can be estimated consistently by least
/// squares; uniformly Lipschitz, uniformly bounded families behave that way.
pub fn empirical_entropy(
    family: &[Vec<f64>],
    delta: f64,
    points: &[f64],
) -> Result<EntropyReport> {
    if family.is_empty() {
        return Err(Error::Input("function family must be non-empty".into()));
    }
    if !delta.is_finite() || delta <= 0.0 {
        return Err(Error::Input(format!(
            "covering radius must be positive, got {delta}"
        )));
    }
    let n = points.len();
    if n == 0 {
        return Err(Error::Input("need at least one evaluation point".into()));
    }
    if let Some((i, f)) = family.iter().enumerate().find(|(_, f)| f.len() != n) {
        return Err(Error::Input(format!(
            "family member {i} has {} samples, expected {n}",
            f.len()
        )));
    }

    let mut covered = vec![false; family.len()];
    let mut m_hat = 0usize;
    for center in 0..family.len() {
        if covered[center] {
            continue;
        }
        m_hat += 1;
        covered[center] = true;
        for other in (center + 1)..family.len() {
            if !covered[other] && rms_distance(&family[center], &family[other]) <= delta {
                covered[other] = true;
            }
        }
    }

    Ok(EntropyReport {
        delta,
        n,
        m_hat,
        n_hat: (m_hat as f64).ln() / n as f64,
    })
}

fn rms_distance(f: &[f64], g: &[f64]) -> f64 {
    let n = f.len() as f64;
    let sum: f64 = f.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum();
    (sum / n).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(level: f64, n: usize) -> Vec<f64> {
        vec![level; n]
    }

    #[test]
    fn single_function_needs_one_ball() {
        let family = vec![constant(0.3, 10)];
        let points = vec![0.0; 10];
        let r = empirical_entropy(&family, 0.05, &points).unwrap();
        assert_eq!(r.m_hat, 1);
        assert_eq!(r.n_hat, 0.0);
    }

    #[test]
    fn two_close_constants_share_a_ball() {
        let family = vec![constant(0.0, 8), constant(0.04, 8)];
        let points = vec![0.0; 8];
        let r = empirical_entropy(&family, 0.05, &points).unwrap();
        assert_eq!(r.m_hat, 1);
    }

    #[test]
    fn spaced_constants_need_one_ball_each() {
        // Constants 0.0, 0.1, ..., 1.0 at pairwise distance ≥ 0.1 > δ.
        let n = 5;
        let family: Vec<Vec<f64>> = (0..=10).map(|i| constant(i as f64 / 10.0, n)).collect();
        let points = vec![0.0; n];
        let r = empirical_entropy(&family, 0.05, &points).unwrap();
        assert_eq!(r.m_hat, 11);

        // Brute-force oracle: minimal internal covering by exhaustive search
        // over center subsets.
        let m = family.len();
        let mut best = m;
        'mask: for mask in 1u32..(1 << m) {
            let centers: Vec<usize> = (0..m).filter(|j| mask >> j & 1 == 1).collect();
            if centers.len() >= best {
                continue;
            }
            for f in 0..m {
                if !centers
                    .iter()
                    .any(|&c| rms_distance(&family[c], &family[f]) <= 0.05)
                {
                    continue 'mask;
                }
            }
            best = centers.len();
        }
        assert_eq!(r.m_hat, best);
    }

    #[test]
    fn rejects_bad_inputs() {
        let points = vec![0.0; 4];
        assert!(empirical_entropy(&[], 0.1, &points).is_err());
        assert!(empirical_entropy(&[constant(0.0, 4)], 0.0, &points).is_err());
        assert!(empirical_entropy(&[constant(0.0, 3)], 0.1, &points).is_err());
        assert!(empirical_entropy(&[constant(0.0, 4)], 0.1, &[]).is_err());
    }

    #[test]
    fn coarser_radius_never_needs_more_balls() {
        // Put-price curves from a spread of kernels.
        use crate::core::{price_put, CumulativeKernel, Grid};
        let grid = Grid::new(1.0, 50).unwrap();
        let points: Vec<f64> = (0..40).map(|i| (i as f64 + 0.5) / 40.0).collect();
        let family: Vec<Vec<f64>> = (0..30)
            .map(|s| {
                let mass = 0.3 + 0.05 * s as f64;
                let k = CumulativeKernel::new(grid, 0.0, vec![mass / 50.0; 50]).unwrap();
                points.iter().map(|&p| price_put(&k, p).unwrap()).collect()
            })
            .collect();
        let mut last = usize::MAX;
        for &delta in &[0.005, 0.01, 0.02, 0.05, 0.1] {
            let r = empirical_entropy(&family, delta, &points).unwrap();
            assert!(r.m_hat <= last, "m_hat grew as delta widened");
            last = r.m_hat;
        }
    }
}
