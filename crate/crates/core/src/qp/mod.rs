//! Strictly convex QP solver returning exact multipliers.
//!
//! ```text
//! min ½xᵀHx + fᵀx   s.t.  A_eq x = b_eq,  A_in x ≤ b_in
//! ```
//!
//! The solver is a dual active-set method (Goldfarb–Idnani): it starts from the
//! equality-constrained minimizer, repeatedly picks the most violated
//! inequality and moves along the primal/dual direction obtained from one KKT
//! solve until that row becomes active, dropping rows whose multiplier would
//! turn negative. Every KKT solve goes through [`kkt::KktFactor`], which
//! exploits the stage structure of MPC problems. The multipliers satisfy
//! `Hx + f + A_inᵀλ + A_eqᵀμ = 0`.

mod band;
mod kkt;

use nalgebra::DVector;

pub use kkt::KktBackend;
use kkt::{KktFactor, RowStages};

use crate::linearize::StackedQp;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterLimit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub backend: KktBackend,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            backend: KktBackend::Banded,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub dz: DVector<f64>,
    /// One multiplier per inequality row.
    pub lambda: DVector<f64>,
    /// One multiplier per equality row.
    pub mu: DVector<f64>,
    pub status: QpStatus,
    pub kkt_norm: f64,
    /// Number of KKT factorizations performed.
    pub iterations: usize,
    /// Inequality rows held active at termination, in the order they entered.
    pub active_set: Vec<usize>,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Max-norm KKT residual: stationarity, equality violation, inequality
/// violation and complementarity.
pub fn qp_kkt_residual(qp: &StackedQp, sol: &QpSolution) -> f64 {
    let x = &sol.dz;
    let stat = qp.h.mul_vec(x) + &qp.f + qp.aineq.tr_mul_vec(&sol.lambda) + qp.aeq.tr_mul_vec(&sol.mu);
    let eq = qp.aeq.mul_vec(x) - &qp.beq;
    let slack = &qp.bineq - qp.aineq.mul_vec(x);
    let ineq_viol = slack.iter().fold(0.0f64, |m, s| m.max(-s));
    let comp = slack
        .iter()
        .zip(sol.lambda.iter())
        .fold(0.0f64, |m, (s, l)| m.max((s * l).abs()));
    [stat.amax(), eq.amax(), ineq_viol, comp]
        .into_iter()
        .fold(0.0, f64::max)
}

/// One-shot convenience wrapper around [`QpSolver`].
pub fn solve_qp(qp: &StackedQp, warm: Option<&QpSolution>, tol: f64) -> QpSolution {
    QpSolver::new(QpSettings {
        tol,
        ..QpSettings::default()
    })
    .solve(qp, warm)
}

/// A single-threaded solver instance. Create one per worker.
#[derive(Debug, Clone)]
pub struct QpSolver {
    settings: QpSettings,
}

struct Iterate {
    x: DVector<f64>,
    mu: DVector<f64>,
    lam: Vec<f64>,
    active: Vec<usize>,
}

impl QpSolver {
    pub fn new(settings: QpSettings) -> Self {
        assert!(settings.tol > 0.0, "QP tolerance must be positive");
        Self { settings }
    }

    pub fn settings(&self) -> &QpSettings {
        &self.settings
    }

    fn eqp(&self, qp: &StackedQp, stages: &RowStages, active: &[usize]) -> Option<Iterate> {
        let k = KktFactor::new(qp, stages, active, self.settings.backend)?;
        let rhs_act: Vec<f64> = active.iter().map(|&w| qp.bineq[w]).collect();
        let neg_f: Vec<f64> = qp.f.iter().map(|v| -v).collect();
        let (x, mu, lam) = k.solve(&neg_f, qp.beq.as_slice(), &rhs_act)?;
        Some(Iterate {
            x,
            mu,
            lam: lam.as_slice().to_vec(),
            active: active.to_vec(),
        })
    }

    pub fn solve(&mut self, qp: &StackedQp, warm: Option<&QpSolution>) -> QpSolution {
        let n_in = qp.aineq.nrows();
        let tol = self.settings.tol;
        let stages = RowStages::new(qp);
        let mut iterations = 0usize;

        let mut active: Vec<usize> = warm
            .map(|w| {
                let mut a: Vec<usize> = w.active_set.iter().copied().filter(|&i| i < n_in).collect();
                a.dedup();
                a
            })
            .unwrap_or_default();

        // Dual-feasible starting point: equality-constrained minimizer on the
        // warm working set, shedding rows with negative multipliers.
        let mut it = loop {
            iterations += 1;
            match self.eqp(qp, &stages, &active) {
                Some(it) => {
                    let worst = it
                        .lam
                        .iter()
                        .enumerate()
                        .filter(|(_, &l)| l < 0.0)
                        .min_by(|a, b| a.1.total_cmp(b.1))
                        .map(|(k, _)| k);
                    match worst {
                        Some(k) => {
                            active.remove(k);
                        }
                        None => break it,
                    }
                }
                None if active.is_empty() => {
                    return self.finish(qp, None, QpStatus::Infeasible, iterations);
                }
                None => active.clear(),
            }
        };

        let status = 'outer: loop {
            // most violated inequality outside the working set
            let mut add: Option<(usize, f64)> = None;
            for w in 0..n_in {
                if it.active.contains(&w) {
                    continue;
                }
                let v = qp.aineq.row_dot(w, &it.x) - qp.bineq[w];
                if v > tol && add.is_none_or(|(_, best)| v > best) {
                    add = Some((w, v));
                }
            }
            let Some((p, _)) = add else {
                break QpStatus::Optimal;
            };
            let (cols, vals) = qp.aineq.row(p);
            let mut neg_cp = vec![0.0; qp.n_vars()];
            for (&j, &v) in cols.iter().zip(vals) {
                neg_cp[j] = -v;
            }
            let cp_norm2: f64 = vals.iter().map(|v| v * v).sum();
            let h_scale = qp.h.triplets().fold(1.0f64, |m, (_, _, v)| m.max(v.abs()));
            let mut lam_p = 0.0;

            loop {
                if iterations >= self.settings.max_iter {
                    break 'outer QpStatus::IterLimit;
                }
                iterations += 1;
                let zeros_eq = vec![0.0; qp.aeq.nrows()];
                let zeros_act = vec![0.0; it.active.len()];
                let dir = KktFactor::new(qp, &stages, &it.active, self.settings.backend)
                    .and_then(|k| k.solve(&neg_cp, &zeros_eq, &zeros_act));
                let Some((dx, dmu, dlam)) = dir else {
                    break 'outer QpStatus::Infeasible;
                };
                let theta = -qp.aineq.row_dot(p, &dx);

                let mut block: Option<(usize, f64)> = None;
                for (k, &dl) in dlam.iter().enumerate() {
                    if dl < 0.0 {
                        let t = it.lam[k] / -dl;
                        if block.is_none_or(|(_, best)| t < best) {
                            block = Some((k, t));
                        }
                    }
                }

                let violation = qp.aineq.row_dot(p, &it.x) - qp.bineq[p];
                let dependent = theta <= 1e-14 * cp_norm2 / h_scale;
                let t_full = if dependent { f64::INFINITY } else { violation / theta };
                let step = match block {
                    Some((_, t_dual)) if t_dual < t_full => t_dual,
                    _ if dependent => break 'outer QpStatus::Infeasible,
                    _ => t_full,
                };

                if !dependent {
                    it.x.axpy(step, &dx, 1.0);
                }
                it.mu.axpy(step, &dmu, 1.0);
                for (l, dl) in it.lam.iter_mut().zip(dlam.iter()) {
                    *l += step * dl;
                }
                lam_p += step;

                if step == t_full {
                    it.active.push(p);
                    it.lam.push(lam_p);
                    continue 'outer;
                }
                let (k, _) = block.expect("partial step requires a blocking row");
                it.active.remove(k);
                it.lam.remove(k);
            }
        };

        self.finish(qp, Some((stages, it)), status, iterations)
    }

    fn finish(
        &self,
        qp: &StackedQp,
        state: Option<(RowStages, Iterate)>,
        status: QpStatus,
        iterations: usize,
    ) -> QpSolution {
        let n_in = qp.aineq.nrows();
        let Some((stages, mut it)) = state else {
            return QpSolution {
                dz: DVector::zeros(qp.n_vars()),
                lambda: DVector::zeros(n_in),
                mu: DVector::zeros(qp.aeq.nrows()),
                status,
                kkt_norm: f64::INFINITY,
                iterations,
                active_set: Vec::new(),
            };
        };
        if status == QpStatus::Optimal {
            // Re-solve on the final working set to clear accumulated drift.
            if let Some(clean) = self.eqp(qp, &stages, &it.active) {
                if clean.lam.iter().all(|&l| l >= -self.settings.tol) {
                    it = clean;
                }
            }
        }
        let mut lambda = DVector::zeros(n_in);
        for (&w, &l) in it.active.iter().zip(&it.lam) {
            lambda[w] = l.max(0.0);
        }
        let mut sol = QpSolution {
            dz: it.x,
            lambda,
            mu: it.mu,
            status,
            kkt_norm: 0.0,
            iterations,
            active_set: it.active,
        };
        sol.kkt_norm = qp_kkt_residual(qp, &sol);
        sol
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn one_var(f: f64, aeq: Option<f64>, ain: Option<f64>) -> StackedQp {
        let h = DMatrix::from_element(1, 1, 1.0);
        let (ae, be) = match aeq {
            Some(b) => (DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, b)),
            None => (DMatrix::zeros(0, 1), DVector::zeros(0)),
        };
        let (ai, bi) = match ain {
            Some(b) => (DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, b)),
            None => (DMatrix::zeros(0, 1), DVector::zeros(0)),
        };
        StackedQp::dense(&h, DVector::from_element(1, f), &ae, be, &ai, bi)
    }

    #[test]
    fn equality_only() {
        let qp = one_var(0.0, Some(3.0), None);
        let s = solve_qp(&qp, None, 1e-8);
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.dz[0] - 3.0).abs() < 1e-12);
        assert!((s.mu[0] + 3.0).abs() < 1e-12);
        assert!(s.kkt_norm < 1e-12);
    }

    #[test]
    fn active_inequality() {
        let qp = one_var(1.0, None, Some(-2.0));
        let s = solve_qp(&qp, None, 1e-8);
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.dz[0] + 2.0).abs() < 1e-12);
        assert!((s.lambda[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inactive_inequality_has_zero_multiplier() {
        let qp = one_var(1.0, None, Some(5.0));
        let s = solve_qp(&qp, None, 1e-8);
        assert!((s.dz[0] + 1.0).abs() < 1e-12);
        assert_eq!(s.lambda[0], 0.0);
        assert!(s.active_set.is_empty());
    }

    #[test]
    fn perturbed_solution_has_stationarity_residual() {
        let qp = one_var(0.0, Some(3.0), None);
        let mut s = solve_qp(&qp, None, 1e-8);
        assert!(qp_kkt_residual(&qp, &s) < 1e-14);
        s.dz[0] += 1e-3;
        assert!((qp_kkt_residual(&qp, &s) - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn conflicting_inequalities_are_infeasible() {
        // x ≤ −1 and −x ≤ −1
        let h = DMatrix::from_element(1, 1, 1.0);
        let ai = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let qp = StackedQp::dense(
            &h,
            DVector::zeros(1),
            &DMatrix::zeros(0, 1),
            DVector::zeros(0),
            &ai,
            DVector::from_vec(vec![-1.0, -1.0]),
        );
        assert_eq!(solve_qp(&qp, None, 1e-8).status, QpStatus::Infeasible);
    }

    #[test]
    fn infeasible_against_equality() {
        // x = 0 and x ≤ −1
        let qp = one_var(0.0, Some(0.0), Some(-1.0));
        assert_eq!(solve_qp(&qp, None, 1e-8).status, QpStatus::Infeasible);
    }

    #[test]
    fn iteration_budget_is_respected() {
        // two violated rows need at least three factorizations
        let h = DMatrix::identity(2, 2);
        let ai = DMatrix::identity(2, 2);
        let qp = StackedQp::dense(
            &h,
            DVector::zeros(2),
            &DMatrix::zeros(0, 2),
            DVector::zeros(0),
            &ai,
            DVector::from_vec(vec![-1.0, -1.0]),
        );
        let mut solver = QpSolver::new(QpSettings {
            max_iter: 2,
            ..QpSettings::default()
        });
        assert_eq!(solver.solve(&qp, None).status, QpStatus::IterLimit);
        let full = solve_qp(&qp, None, 1e-8);
        assert_eq!(full.status, QpStatus::Optimal);
        assert!((full.dz - DVector::from_vec(vec![-1.0, -1.0])).amax() < 1e-12);
    }

    #[test]
    fn banded_and_dense_backends_agree() {
        let h = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let ae = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let ai = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, -1.0, 1.0]);
        let qp = StackedQp::dense(
            &h,
            DVector::from_vec(vec![1.0, -2.0, 0.5]),
            &ae,
            DVector::from_element(1, 1.0),
            &ai,
            DVector::from_vec(vec![0.1, -0.3]),
        );
        let a = QpSolver::new(QpSettings::default()).solve(&qp, None);
        let b = QpSolver::new(QpSettings {
            backend: KktBackend::Dense,
            ..QpSettings::default()
        })
        .solve(&qp, None);
        assert!((a.dz - b.dz).amax() < 1e-12);
        assert!((a.lambda - b.lambda).amax() < 1e-12);
    }
}
