//! Assembly and factorization of the equality-constrained KKT system
//!
//! ```text
//! [ H  Aᵀ  C_Wᵀ ] [ x ]   [ a ]
//! [ A  0   0    ] [ μ ] = [ b ]
//! [ C_W 0  0    ] [ λ ]   [ c ]
//! ```
//!
//! for a working set `W` of inequality rows. Unknowns are interleaved stage by
//! stage (rows that couple stage `i−1` to `i` first, then stage `i`'s
//! variables, then rows local to stage `i`), which keeps the matrix banded with
//! a bandwidth that depends on the stage width, not the horizon.

use nalgebra::{DMatrix, DVector};

use super::band::BandLu;
use crate::linearize::StackedQp;

/// Linear algebra used for the KKT solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KktBackend {
    /// Stage-interleaved banded LU.
    #[default]
    Banded,
    /// Dense LU of the whole KKT matrix. Reference path for small problems.
    Dense,
}

/// First and last stage touched by every constraint row.
#[derive(Debug, Clone)]
pub(crate) struct RowStages {
    eq: Vec<(usize, usize)>,
    ineq: Vec<(usize, usize)>,
}

fn row_span(m: &crate::sparse::CsrMatrix, var_stage: &[usize], i: usize) -> (usize, usize) {
    let (cols, _) = m.row(i);
    let lo = cols.iter().map(|&j| var_stage[j]).min().unwrap_or(0);
    let hi = cols.iter().map(|&j| var_stage[j]).max().unwrap_or(0);
    (lo, hi)
}

impl RowStages {
    pub fn new(qp: &StackedQp) -> Self {
        Self {
            eq: (0..qp.aeq.nrows()).map(|i| row_span(&qp.aeq, &qp.var_stage, i)).collect(),
            ineq: (0..qp.aineq.nrows()).map(|i| row_span(&qp.aineq, &qp.var_stage, i)).collect(),
        }
    }
}

fn row_key((lo, hi): (usize, usize), kind: usize, idx: usize) -> (usize, usize, usize, usize) {
    (hi, if lo < hi { 0 } else { 2 }, kind, idx)
}

enum Factor {
    Band(BandLu),
    Dense(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

/// A factorized KKT matrix for one working set.
pub(crate) struct KktFactor {
    n_primal: usize,
    n_eq: usize,
    n_act: usize,
    /// unknown id → row/column position
    pos: Vec<usize>,
    entries: Vec<(usize, usize, f64)>,
    scale: f64,
    factor: Factor,
}

impl KktFactor {
    pub fn new(qp: &StackedQp, stages: &RowStages, active: &[usize], backend: KktBackend) -> Option<Self> {
        let n_primal = qp.n_vars();
        let n_eq = qp.aeq.nrows();
        let n_act = active.len();
        let n = n_primal + n_eq + n_act;

        let mut keys: Vec<((usize, usize, usize, usize), usize)> = Vec::with_capacity(n);
        for j in 0..n_primal {
            keys.push(((qp.var_stage[j], 1, 0, j), j));
        }
        for r in 0..n_eq {
            keys.push((row_key(stages.eq[r], 0, r), n_primal + r));
        }
        for (k, &w) in active.iter().enumerate() {
            keys.push((row_key(stages.ineq[w], 1, w), n_primal + n_eq + k));
        }
        keys.sort_unstable();
        let mut pos = vec![0; n];
        for (p, &(_, id)) in keys.iter().enumerate() {
            pos[id] = p;
        }

        let mut entries = Vec::with_capacity(qp.h.nnz() + 2 * (qp.aeq.nnz() + n_act * 8));
        for (i, j, v) in qp.h.triplets() {
            entries.push((pos[i], pos[j], v));
        }
        for (r, j, v) in qp.aeq.triplets() {
            let pr = pos[n_primal + r];
            entries.push((pr, pos[j], v));
            entries.push((pos[j], pr, v));
        }
        for (k, &w) in active.iter().enumerate() {
            let pr = pos[n_primal + n_eq + k];
            let (cols, vals) = qp.aineq.row(w);
            for (&j, &v) in cols.iter().zip(vals) {
                entries.push((pr, pos[j], v));
                entries.push((pos[j], pr, v));
            }
        }
        let scale = entries.iter().fold(0.0f64, |m, e| m.max(e.2.abs()));

        let factor = match backend {
            KktBackend::Banded => {
                let bw = entries.iter().map(|&(i, j, _)| i.abs_diff(j)).max().unwrap_or(0);
                let mut lu = BandLu::new(n, bw, bw);
                for &(i, j, v) in &entries {
                    lu.add(i, j, v);
                }
                lu.factor().ok()?;
                Factor::Band(lu)
            }
            KktBackend::Dense => {
                let mut m = DMatrix::zeros(n, n);
                for &(i, j, v) in &entries {
                    m[(i, j)] += v;
                }
                Factor::Dense(m.lu())
            }
        };
        Some(Self {
            n_primal,
            n_eq,
            n_act,
            pos,
            entries,
            scale,
            factor,
        })
    }

    fn raw_solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        match &self.factor {
            Factor::Band(lu) => {
                let mut x = b.to_vec();
                lu.solve(&mut x);
                Some(x)
            }
            Factor::Dense(lu) => lu
                .solve(&DVector::from_column_slice(b))
                .map(|v| v.as_slice().to_vec()),
        }
    }

    fn residual(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        let mut r = b.to_vec();
        for &(i, j, v) in &self.entries {
            r[i] -= v * x[j];
        }
        r
    }

    /// Solves for `(x, μ, λ_W)` given the three right-hand-side blocks. One
    /// step of iterative refinement is applied; `None` signals a numerically
    /// singular system.
    pub fn solve(&self, rhs_primal: &[f64], rhs_eq: &[f64], rhs_act: &[f64]) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let n = self.pos.len();
        let mut b = vec![0.0; n];
        for (id, &v) in rhs_primal.iter().chain(rhs_eq).chain(rhs_act).enumerate() {
            b[self.pos[id]] = v;
        }
        let mut x = self.raw_solve(&b)?;
        for _ in 0..2 {
            let r = self.residual(&x, &b);
            let d = self.raw_solve(&r)?;
            for (xi, di) in x.iter_mut().zip(d) {
                *xi += di;
            }
        }
        let r = self.residual(&x, &b);
        let rnorm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let bnorm = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let xnorm = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !rnorm.is_finite() || !xnorm.is_finite() || rnorm > 1e-9 * (bnorm + self.scale * xnorm).max(1e-300) {
            return None;
        }
        let get = |id: usize| x[self.pos[id]];
        let primal = DVector::from_fn(self.n_primal, |i, _| get(i));
        let eq = DVector::from_fn(self.n_eq, |i, _| get(self.n_primal + i));
        let act = DVector::from_fn(self.n_act, |i, _| get(self.n_primal + self.n_eq + i));
        Some((primal, eq, act))
    }

    #[cfg(test)]
    pub fn bandwidth(&self) -> usize {
        self.entries.iter().map(|&(i, j, _)| i.abs_diff(j)).max().unwrap_or(0)
    }
}
