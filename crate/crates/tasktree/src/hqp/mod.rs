//! Lexicographic stack-of-tasks solver.
//!
//! Levels are solved strictly in order. Each level minimizes the norm
//! of its own slack subject to every higher level being held at the
//! slack it already achieved, with hard velocity bounds at every
//! stage. A closing minimum-norm stage picks the smallest velocity
//! among the lexicographic optima, so the returned q̇ is unique even
//! when the constraint rows are rank deficient.

mod qp;

pub use qp::{solve_qp_level, QpSolution, QpStatus};

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::task::{Relation, Stack};

#[derive(Debug, thiserror::Error)]
pub enum HqpError {
    #[error("invalid problem: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    InfeasibleStart,
}

#[derive(Debug, Clone)]
pub struct LevelReport {
    pub level: u32,
    pub slack_norm: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct HqpSolution {
    pub qd: DVector<f64>,
    pub levels: Vec<LevelReport>,
    pub final_iterations: usize,
    pub status: SolveStatus,
}

impl HqpSolution {
    pub fn max_slack(&self) -> f64 {
        self.levels.iter().fold(0.0, |m, l| m.max(l.slack_norm))
    }
}

#[derive(Debug, Clone)]
pub struct HqpProblem {
    pub stack: Stack,
    /// Number of joint velocity variables.
    pub n: usize,
    /// Per-joint symmetric velocity bound, enforced at every stage.
    pub v_max: DVector<f64>,
    /// Damping for the pseudo-inverse path; the active-set cascade
    /// itself is exact.
    pub mu: f64,
    /// Weight of the closing minimum-norm stage. Only positivity
    /// matters: the minimizer does not depend on its value.
    pub epsilon: f64,
}

impl HqpProblem {
    fn validate(&self) -> Result<(), HqpError> {
        if self.epsilon <= 0.0 {
            return Err(HqpError::Invalid("epsilon must be positive".into()));
        }
        if self.mu < 0.0 {
            return Err(HqpError::Invalid("mu must be non-negative".into()));
        }
        if self.v_max.len() != self.n {
            return Err(HqpError::Invalid(format!(
                "v_max has {} entries for {} variables",
                self.v_max.len(),
                self.n
            )));
        }
        if self.v_max.iter().any(|v| !(*v > 0.0)) {
            return Err(HqpError::Invalid("velocity bounds must be positive".into()));
        }
        let mut prev = None;
        for lvl in &self.stack.levels {
            if let Some(p) = prev {
                if lvl.level <= p {
                    return Err(HqpError::Invalid(format!(
                        "levels must be strictly ascending, saw {} after {}",
                        lvl.level, p
                    )));
                }
            }
            prev = Some(lvl.level);
            for c in &lvl.constraints {
                if c.a.ncols() != self.n {
                    return Err(HqpError::Invalid(format!(
                        "constraint at level {} has {} columns for {} variables",
                        lvl.level,
                        c.a.ncols(),
                        self.n
                    )));
                }
                if c.a.nrows() != c.b.len() {
                    return Err(HqpError::Invalid(format!(
                        "constraint at level {} has {} rows but {} rhs entries",
                        lvl.level,
                        c.a.nrows(),
                        c.b.len()
                    )));
                }
                let finite =
                    c.a.iter().all(|v| v.is_finite()) && c.b.iter().all(|v| v.is_finite());
                if !finite {
                    return Err(HqpError::Invalid(format!(
                        "constraint at level {} has non-finite entries",
                        lvl.level
                    )));
                }
            }
        }
        Ok(())
    }
}

fn vstack(blocks: &[(&DMatrix<f64>, &DVector<f64>)], n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let rows: usize = blocks.iter().map(|(a, _)| a.nrows()).sum();
    let mut a = DMatrix::zeros(rows, n);
    let mut b = DVector::zeros(rows);
    let mut at = 0;
    for (ba, bb) in blocks {
        a.view_mut((at, 0), (ba.nrows(), n)).copy_from(*ba);
        b.rows_mut(at, bb.len()).copy_from(*bb);
        at += ba.nrows();
    }
    (a, b)
}

pub fn solve(problem: &HqpProblem) -> Result<HqpSolution, HqpError> {
    problem.validate()?;
    let n = problem.n;
    let bounds: Vec<(usize, f64)> = (0..n).map(|i| (i, problem.v_max[i])).collect();

    // Constraints from solved levels, re-stated at the slack each
    // level achieved.
    let mut frozen_eq: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::new();
    let mut frozen_in: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::new();
    let mut qd = DVector::zeros(n);
    let mut reports = Vec::with_capacity(problem.stack.levels.len());
    let mut status = SolveStatus::Optimal;

    for lvl in &problem.stack.levels {
        let eq: Vec<_> = lvl
            .constraints
            .iter()
            .filter(|c| c.relation == Relation::Eq)
            .map(|c| (&c.a, &c.b))
            .collect();
        let ineq: Vec<_> = lvl
            .constraints
            .iter()
            .filter(|c| c.relation == Relation::Le)
            .map(|c| (&c.a, &c.b))
            .collect();
        let (a_e, b_e) = vstack(&eq, n);
        let (a_i, b_i) = vstack(&ineq, n);
        let (me, mi) = (a_e.nrows(), a_i.nrows());

        if me + mi == 0 {
            reports.push(LevelReport {
                level: lvl.level,
                slack_norm: 0.0,
                iterations: 0,
            });
            continue;
        }

        // Stage variables z = (q̇, w_eq, w_in). Only the slacks are
        // penalized; q̇ is shaped purely by the constraints here.
        let nv = n + me + mi;
        let mut h = DMatrix::zeros(nv, nv);
        h.view_mut((n, n), (me + mi, me + mi))
            .copy_from(&DMatrix::identity(me + mi, me + mi));
        let f = DVector::zeros(nv);

        let (fa_e, fb_e) = frozen(&frozen_eq, n);
        let (fa_i, fb_i) = frozen(&frozen_in, n);

        // Equalities: frozen levels, then this level with w_eq slack.
        let mut a_eq = DMatrix::zeros(fa_e.nrows() + me, nv);
        a_eq.view_mut((0, 0), (fa_e.nrows(), n)).copy_from(&fa_e);
        a_eq.view_mut((fa_e.nrows(), 0), (me, n)).copy_from(&a_e);
        a_eq.view_mut((fa_e.nrows(), n), (me, me))
            .copy_from(&(-DMatrix::<f64>::identity(me, me)));
        let mut b_eq = DVector::zeros(fa_e.nrows() + me);
        b_eq.rows_mut(0, fb_e.len()).copy_from(&fb_e);
        b_eq.rows_mut(fa_e.nrows(), me).copy_from(&b_e);

        // Inequalities: frozen, this level with w_in slack, w_in ≥ 0.
        let mut a_in = DMatrix::zeros(fa_i.nrows() + 2 * mi, nv);
        a_in.view_mut((0, 0), (fa_i.nrows(), n)).copy_from(&fa_i);
        a_in.view_mut((fa_i.nrows(), 0), (mi, n)).copy_from(&a_i);
        a_in.view_mut((fa_i.nrows(), n + me), (mi, mi))
            .copy_from(&(-DMatrix::<f64>::identity(mi, mi)));
        a_in.view_mut((fa_i.nrows() + mi, n + me), (mi, mi))
            .copy_from(&(-DMatrix::<f64>::identity(mi, mi)));
        let mut b_in = DVector::zeros(fa_i.nrows() + 2 * mi);
        b_in.rows_mut(0, fb_i.len()).copy_from(&fb_i);
        b_in.rows_mut(fa_i.nrows(), mi).copy_from(&b_i);

        // Feasible start: previous q̇ with slacks absorbing whatever it
        // violates at this level.
        let mut z0 = DVector::zeros(nv);
        z0.rows_mut(0, n).copy_from(&qd);
        if me > 0 {
            z0.rows_mut(n, me).copy_from(&(&a_e * &qd - &b_e));
        }
        for k in 0..mi {
            z0[n + me + k] = (a_i.row(k).transpose().dot(&qd) - b_i[k]).max(0.0);
        }

        let sol = solve_qp_level(&h, &f, &a_eq, &b_eq, &a_in, &b_in, &bounds, Some(&z0));
        status = worse(status, sol.status);
        qd = sol.x.rows(0, n).into_owned();
        let w = sol.x.rows(n, me + mi).into_owned();
        reports.push(LevelReport {
            level: lvl.level,
            slack_norm: w.norm(),
            iterations: sol.iterations,
        });

        if me > 0 {
            let w_e = sol.x.rows(n, me).into_owned();
            frozen_eq.push((a_e, b_e + w_e));
        }
        if mi > 0 {
            let w_i = sol.x.rows(n + me, mi).into_owned();
            frozen_in.push((a_i, b_i + w_i));
        }
    }

    // Closing stage: smallest velocity among the lexicographic optima.
    let (fa_e, fb_e) = frozen(&frozen_eq, n);
    let (fa_i, fb_i) = frozen(&frozen_in, n);
    let h = DMatrix::identity(n, n) * problem.epsilon;
    let f = DVector::zeros(n);
    let sol = solve_qp_level(&h, &f, &fa_e, &fb_e, &fa_i, &fb_i, &bounds, Some(&qd));
    status = worse(status, sol.status);

    Ok(HqpSolution {
        qd: sol.x,
        levels: reports,
        final_iterations: sol.iterations,
        status,
    })
}

fn frozen(blocks: &[(DMatrix<f64>, DVector<f64>)], n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let refs: Vec<_> = blocks.iter().map(|(a, b)| (a, b)).collect();
    vstack(&refs, n)
}

fn worse(a: SolveStatus, b: QpStatus) -> SolveStatus {
    let b = match b {
        QpStatus::Optimal => SolveStatus::Optimal,
        QpStatus::MaxIterations => SolveStatus::MaxIterations,
        QpStatus::InfeasibleStart => SolveStatus::InfeasibleStart,
    };
    match (a, b) {
        (SolveStatus::InfeasibleStart, _) | (_, SolveStatus::InfeasibleStart) => {
            SolveStatus::InfeasibleStart
        }
        (SolveStatus::MaxIterations, _) | (_, SolveStatus::MaxIterations) => {
            SolveStatus::MaxIterations
        }
        _ => SolveStatus::Optimal,
    }
}

/// Damped pseudo-inverse. With μ > 0 this is the Tikhonov form
/// Mᵀ(MMᵀ + μ²I)⁻¹ (or its transpose-side twin for tall matrices);
/// with μ = 0 it falls back to the SVD pseudo-inverse with a relative
/// singular value cutoff of 1e−10.
pub fn damped_pinv(m: &DMatrix<f64>, mu: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    if mu > 0.0 {
        if r <= c {
            let g = m * m.transpose() + DMatrix::identity(r, r) * (mu * mu);
            let inv = Cholesky::new(g).expect("damped Gram is SPD").inverse();
            m.transpose() * inv
        } else {
            let g = m.transpose() * m + DMatrix::identity(c, c) * (mu * mu);
            let inv = Cholesky::new(g).expect("damped Gram is SPD").inverse();
            inv * m.transpose()
        }
    } else {
        let svd = m.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let eps = if smax > 0.0 { 1e-10 * smax } else { 1.0 };
        svd.pseudo_inverse(eps).expect("svd pseudo-inverse")
    }
}

/// Equality-only hierarchy via nullspace projection: each level acts
/// inside the nullspace of all levels above it. Levels are (J, v)
/// pairs meaning J q̇ = v, highest priority first.
pub fn solve_equality_recursive(
    levels: &[(DMatrix<f64>, DVector<f64>)],
    n: usize,
    mu: f64,
) -> DVector<f64> {
    let mut qd = DVector::zeros(n);
    let mut null = DMatrix::identity(n, n);
    for (j, v) in levels {
        let jn = j * &null;
        let pinv = damped_pinv(&jn, mu);
        qd = &qd + &pinv * (v - j * &qd);
        null -= &pinv * jn;
    }
    qd
}
