//! Dense convex QP with a primal active-set method.
//!
//! Geared at the small stage problems of the lexicographic cascade:
//! tens of variables, PSD (not necessarily definite) Hessians, a
//! feasible start available by construction. Equality-constrained
//! subproblems are solved with the nullspace method and minimum-norm
//! tie-breaking, which keeps degenerate working sets from derailing
//! the iteration.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

const FEAS_TOL: f64 = 1e-8;
const DUAL_TOL: f64 = 1e-9;
const STEP_TOL: f64 = 1e-11;
const SV_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    /// Iteration guard tripped (cycling or an ill-posed problem).
    MaxIterations,
    /// The provided start violates the constraints.
    InfeasibleStart,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub status: QpStatus,
    /// Active inequality rows at the solution, ascending. Bound rows
    /// come after the explicit ones, two per bounded variable.
    pub active: Vec<usize>,
}

/// min ½ xᵀHx + fᵀx  s.t.  A_eq x = b_eq, A_in x ≤ b_in, |x_i| ≤ v
/// for every (i, v) in bounds.
///
/// `start` must be feasible; None tries the origin. H must be PSD and
/// the objective bounded below on the feasible set.
#[allow(clippy::too_many_arguments)]
pub fn solve_qp_level(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    a_in: &DMatrix<f64>,
    b_in: &DVector<f64>,
    bounds: &[(usize, f64)],
    start: Option<&DVector<f64>>,
) -> QpSolution {
    let n = h.ncols();
    let (a_in, b_in) = augment_bounds(a_in, b_in, bounds, n);
    let m_in = a_in.nrows();

    let mut x = match start {
        Some(x0) => x0.clone(),
        None => DVector::zeros(n),
    };
    if !is_feasible(&x, a_eq, b_eq, &a_in, &b_in) {
        return QpSolution {
            x,
            iterations: 0,
            status: QpStatus::InfeasibleStart,
            active: Vec::new(),
        };
    }

    let mut working: Vec<usize> = Vec::new();
    let max_iter = 50 * (a_eq.nrows() + m_in) + 50;

    for iter in 1..=max_iter {
        let (x_hat, duals) = eqp_min_norm(h, f, a_eq, b_eq, &a_in, &b_in, &working);
        let p = &x_hat - &x;

        if p.amax() <= STEP_TOL * (1.0 + x.amax()) {
            // Stationary on the working set. Check dual feasibility of
            // the inequality multipliers.
            let m_eq = a_eq.nrows();
            let neg = working
                .iter()
                .enumerate()
                .find(|(k, _)| duals[m_eq + k] < -DUAL_TOL)
                .map(|(k, _)| k);
            match neg {
                None => {
                    return QpSolution {
                        x: x_hat,
                        iterations: iter,
                        status: QpStatus::Optimal,
                        active: working,
                    };
                }
                Some(k) => {
                    // Lowest-index negative multiplier leaves the set.
                    working.remove(k);
                }
            }
            continue;
        }

        // Step toward the subproblem minimizer, stopping at the first
        // blocking constraint. Ties keep the lowest row index.
        let mut alpha = 1.0;
        let mut blocking: Option<usize> = None;
        for r in 0..m_in {
            if working.contains(&r) {
                continue;
            }
            let a_row = a_in.row(r);
            let denom = (a_row * &p)[0];
            if denom > 1e-12 {
                let slack = (b_in[r] - (a_row * &x)[0]).max(0.0);
                let ar = slack / denom;
                if ar < alpha {
                    alpha = ar;
                    blocking = Some(r);
                }
            }
        }
        x += alpha * &p;
        if let Some(r) = blocking {
            let pos = working.partition_point(|&w| w < r);
            working.insert(pos, r);
        }
    }

    QpSolution {
        x,
        iterations: max_iter,
        status: QpStatus::MaxIterations,
        active: working,
    }
}

fn augment_bounds(
    a_in: &DMatrix<f64>,
    b_in: &DVector<f64>,
    bounds: &[(usize, f64)],
    n: usize,
) -> (DMatrix<f64>, DVector<f64>) {
    if bounds.is_empty() {
        return (a_in.clone(), b_in.clone());
    }
    let m = a_in.nrows();
    let mut a = DMatrix::zeros(m + 2 * bounds.len(), n);
    let mut b = DVector::zeros(m + 2 * bounds.len());
    a.view_mut((0, 0), (m, n)).copy_from(a_in);
    b.rows_mut(0, m).copy_from(b_in);
    for (k, &(i, v)) in bounds.iter().enumerate() {
        a[(m + 2 * k, i)] = 1.0;
        b[m + 2 * k] = v;
        a[(m + 2 * k + 1, i)] = -1.0;
        b[m + 2 * k + 1] = v;
    }
    (a, b)
}

fn is_feasible(
    x: &DVector<f64>,
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    a_in: &DMatrix<f64>,
    b_in: &DVector<f64>,
) -> bool {
    if a_eq.nrows() > 0 && (a_eq * x - b_eq).amax() > FEAS_TOL {
        return false;
    }
    if a_in.nrows() > 0 {
        let r = a_in * x - b_in;
        if r.max() > FEAS_TOL {
            return false;
        }
    }
    true
}

/// Equality-constrained subproblem on the current working set, solved
/// by the nullspace method. Returns the minimizer and the stacked
/// multipliers (equalities first, then working-set rows in their
/// stored order).
///
/// The one-shot KKT saddle system is deliberately avoided: its
/// singular values come in nearly degenerate ± pairs, and an SVD
/// mixes those pairs badly enough to leave O(‖H‖) errors in the
/// solution. The general SVD is avoided entirely, in fact: on the
/// matrices that show up here (duplicated task rows, ± unit bound
/// rows, small PSD Gram blocks) its factorization residual can reach
/// the 1e-3 level. A pivoted Householder QR of Cᵀ is orthonormal by
/// construction and supplies the row-space basis, the particular
/// solution, and the multipliers; nullspace bases and reduced solves
/// go through symmetric eigendecompositions, which stay at machine
/// precision on symmetric input.
fn eqp_min_norm(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    a_in: &DMatrix<f64>,
    b_in: &DVector<f64>,
    working: &[usize],
) -> (DVector<f64>, DVector<f64>) {
    let n = h.ncols();
    let m = a_eq.nrows() + working.len();

    let mut c = DMatrix::zeros(m, n);
    let mut d = DVector::zeros(m);
    c.view_mut((0, 0), (a_eq.nrows(), n)).copy_from(a_eq);
    d.rows_mut(0, a_eq.nrows()).copy_from(b_eq);
    for (k, &r) in working.iter().enumerate() {
        c.row_mut(a_eq.nrows() + k).copy_from(&a_in.row(r));
        d[a_eq.nrows() + k] = b_in[r];
    }

    // Cᵀ P = Q R. The leading rank columns of Q span the row space;
    // x_p interpolates the pivot rows of Cx = d and lies in the row
    // space, so it is the minimum-norm particular solution.
    let (x_p, z, factors) = if m == 0 {
        (DVector::zeros(n), DMatrix::identity(n, n), None)
    } else {
        let qr = c.transpose().col_piv_qr();
        let q = qr.q();
        let r = qr.r();
        let kmax = q.ncols().min(r.nrows());
        let tol = SV_REL_TOL * r[(0, 0)].abs().max(1e-300);
        let rank = (0..kmax).take_while(|&i| r[(i, i)].abs() > tol).count();

        // Gather d into pivot order: slot i of the triangle belongs
        // to original row p(i).
        let mut dp = d.clone();
        qr.p().permute_rows(&mut dp);
        let mut w = DVector::zeros(rank);
        for i in 0..rank {
            let mut s = dp[i];
            for j in 0..i {
                s -= r[(j, i)] * w[j];
            }
            w[i] = s / r[(i, i)];
        }
        let q_r = q.columns(0, rank).into_owned();
        let x_p = &q_r * w;

        let proj = DMatrix::identity(n, n) - &q_r * q_r.transpose();
        let se = SymmetricEigen::new(proj);
        let cols: Vec<_> = (0..n)
            .filter(|&i| se.eigenvalues[i] > 0.5)
            .map(|i| se.eigenvectors.column(i).into_owned())
            .collect();
        let z = if cols.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&cols)
        };
        (x_p, z, Some((qr, r, rank)))
    };

    // Reduced problem over x = x_p + Z y: (ZᵀHZ) y = −Zᵀ(H x_p + f).
    // The reduced Hessian may still be singular (tied optima); the
    // minimum-norm y then selects the minimum-norm x, because x_p is
    // orthogonal to the nullspace and Z preserves norms. ZᵀHZ is
    // symmetric PSD, so the spectral solve is exact where the general
    // SVD is not.
    //
    // The truncation threshold must be scaled by H itself. When no
    // penalized direction survives in null(C) the reduced Hessian is
    // exactly zero and all of it is cancellation noise; a cutoff
    // relative to its own largest eigenvalue would mistake that noise
    // for curvature and blow y up along directions the objective does
    // not care about, dragging x off the constraints.
    let x = if z.ncols() > 0 {
        let red = z.transpose() * h * &z;
        let g = z.transpose() * (h * &x_p + f);
        let se = SymmetricEigen::new(red);
        let cut = SV_REL_TOL * se.eigenvalues.amax().max(h.amax()).max(1e-300);
        let mut y = DVector::zeros(z.ncols());
        for i in 0..z.ncols() {
            if se.eigenvalues[i] > cut {
                let coef = se.eigenvectors.column(i).dot(&g) / se.eigenvalues[i];
                y -= coef * se.eigenvectors.column(i);
            }
        }
        x_p + z * y
    } else {
        x_p
    };

    let Some((qr, r, rank)) = factors else {
        return (x, DVector::zeros(0));
    };
    // Multipliers from stationarity Cᵀλ = −(Hx + f), through the same
    // factorization: R (Pᵀλ) = Qᵀ rhs on the leading block, zero on
    // dependent rows.
    let qtg = qr.q().transpose() * (-(h * &x + f));
    let mut lambda = DVector::zeros(m);
    for i in (0..rank).rev() {
        let mut s = qtg[i];
        for j in (i + 1)..rank {
            s -= r[(i, j)] * lambda[j];
        }
        lambda[i] = s / r[(i, i)];
    }
    // Scatter from pivot order back to original row indices.
    qr.p().inv_permute_rows(&mut lambda);
    (x, lambda)
}
