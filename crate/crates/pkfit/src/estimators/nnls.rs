use ndarray::Array2;

use super::chol::GrowableCholesky;

/// Outcome of the non-negative least squares solve. `kkt_residual` is in
/// units of the gradient of `f(x) = ‖Ax − y‖²`: for free coordinates it is
/// `|∇f_j|`, for bound ones `max(0, −∇f_j)`.
#[derive(Debug)]
pub(crate) struct NnlsSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
}

/// Active-set (Lawson–Hanson style) non-negative least squares on the normal
/// equations: minimizes `‖Ax − y‖²` over `x ≥ 0` given `G = AᵀA` and
/// `c = Aᵀy`.
///
/// The passive-set Cholesky factor grows by one column per insertion and is
/// rebuilt after removals. Columns that are numerically dependent on the
/// passive set are skipped for the round; by optimality of the passive-set
/// solve their gradients are tiny anyway.
pub(crate) fn nnls(
    gram: &Array2<f64>,
    aty: &[f64],
    grad_tol: f64,
    max_iterations: usize,
) -> NnlsSolution {
    let n = aty.len();
    debug_assert_eq!(gram.nrows(), n);
    let mut x = vec![0.0; n];
    let mut passive: Vec<usize> = Vec::new();
    let mut in_passive = vec![false; n];
    let mut skipped = vec![false; n];
    let mut chol = GrowableCholesky::new();
    let mut iterations = 0usize;
    let mut budget_exhausted = false;
    // Internal threshold on the descent coordinate w = c − Gx = −∇f/2.
    let w_tol = 0.5 * grad_tol;

    'outer: loop {
        let gx = gram_times(gram, &passive, &x);
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if in_passive[j] || skipped[j] {
                continue;
            }
            let w_j = aty[j] - gx[j];
            if w_j > w_tol && best.is_none_or(|(_, bw)| w_j > bw) {
                best = Some((j, w_j));
            }
        }
        let Some((j_new, _)) = best else {
            break;
        };
        if iterations >= max_iterations {
            budget_exhausted = true;
            break;
        }
        iterations += 1;

        let cross: Vec<f64> = passive.iter().map(|&p| gram[[p, j_new]]).collect();
        if !chol.try_push(&cross, gram[[j_new, j_new]]) {
            skipped[j_new] = true;
            continue;
        }
        passive.push(j_new);
        in_passive[j_new] = true;

        let mut s = solve_passive(&chol, &passive, aty);
        if *s.last().unwrap() <= 0.0 {
            // Round-off artifact: a genuinely useful column gets a positive
            // coefficient. Back out and look elsewhere.
            chol.pop();
            passive.pop();
            in_passive[j_new] = false;
            skipped[j_new] = true;
            continue;
        }
        skipped.fill(false);

        // Inner loop: pull x toward the passive-set least squares solution,
        // dropping coordinates that hit the boundary.
        while s.iter().any(|&v| v <= 0.0) {
            if iterations >= max_iterations {
                budget_exhausted = true;
                break 'outer;
            }
            iterations += 1;

            let mut alpha = f64::INFINITY;
            let mut blocker = usize::MAX;
            for (idx, &p) in passive.iter().enumerate() {
                if s[idx] <= 0.0 {
                    let step = x[p] / (x[p] - s[idx]);
                    if step < alpha {
                        alpha = step;
                        blocker = idx;
                    }
                }
            }
            for (idx, &p) in passive.iter().enumerate() {
                x[p] += alpha * (s[idx] - x[p]);
            }
            x[passive[blocker]] = 0.0;

            let mut kept = Vec::with_capacity(passive.len());
            for &p in &passive {
                if x[p] > 0.0 {
                    kept.push(p);
                } else {
                    x[p] = 0.0;
                    in_passive[p] = false;
                }
            }
            passive = kept;
            rebuild_pruning(gram, &mut passive, &mut in_passive, &mut x, &mut chol);
            if passive.is_empty() {
                s.clear();
                break;
            }
            s = solve_passive(&chol, &passive, aty);
        }
        for (idx, &p) in passive.iter().enumerate() {
            x[p] = s[idx];
        }
    }

    let gx = gram_times(gram, &passive, &x);
    let mut kkt = 0.0_f64;
    for j in 0..n {
        let g_j = 2.0 * (gx[j] - aty[j]);
        let violation = if x[j] > 0.0 { g_j.abs() } else { (-g_j).max(0.0) };
        kkt = kkt.max(violation);
    }

    NnlsSolution {
        x,
        iterations,
        kkt_residual: kkt,
        converged: !budget_exhausted && kkt <= grad_tol,
    }
}

/// `(G x)_j` using only the passive (nonzero) coordinates of `x`.
fn gram_times(gram: &Array2<f64>, passive: &[usize], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n];
    for &p in passive {
        let xp = x[p];
        if xp == 0.0 {
            continue;
        }
        let col = gram.column(p);
        for j in 0..n {
            out[j] += col[j] * xp;
        }
    }
    out
}

fn solve_passive(chol: &GrowableCholesky, passive: &[usize], aty: &[f64]) -> Vec<f64> {
    let mut rhs: Vec<f64> = passive.iter().map(|&p| aty[p]).collect();
    chol.solve_in_place(&mut rhs);
    rhs
}

/// Refactorizes the passive set after removals, pruning any column that has
/// become numerically dependent (its coordinate is zeroed out).
fn rebuild_pruning(
    gram: &Array2<f64>,
    passive: &mut Vec<usize>,
    in_passive: &mut [bool],
    x: &mut [f64],
    chol: &mut GrowableCholesky,
) {
    loop {
        *chol = GrowableCholesky::new();
        let mut failed_at = None;
        for (pos, &j) in passive.iter().enumerate() {
            let cross: Vec<f64> = passive[..pos].iter().map(|&p| gram[[p, j]]).collect();
            if !chol.try_push(&cross, gram[[j, j]]) {
                failed_at = Some(pos);
                break;
            }
        }
        match failed_at {
            None => return,
            Some(pos) => {
                let dropped = passive.remove(pos);
                in_passive[dropped] = false;
                x[dropped] = 0.0;
            }
        }
    }
}
