//! Brute-force active-set enumeration for small strictly convex QPs, plus a
//! seeded generator of random feasible instances.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct DenseQp {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub aeq: DMatrix<f64>,
    pub beq: DVector<f64>,
    pub ain: DMatrix<f64>,
    pub bin: DVector<f64>,
}

pub struct OracleSolution {
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
    pub mu: DVector<f64>,
}

/// Random instance with `n ≤ 12` variables, at most 3 equalities and at most
/// 6 inequalities. Feasibility is guaranteed by construction around a random
/// point; the linear term is large enough that some inequalities bind.
pub fn random_qp(seed: u64) -> DenseQp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=12usize);
    let meq = rng.random_range(0..=3usize.min(n - 1));
    let mi = rng.random_range(1..=6usize);
    let u = |r: usize, c: usize, rng: &mut ChaCha8Rng| DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
    let l = u(n, n, &mut rng);
    let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
    let f = u(n, 1, &mut rng).column(0) * 5.0;
    let x0 = u(n, 1, &mut rng).column(0).into_owned();
    let aeq = u(meq, n, &mut rng);
    let beq = &aeq * &x0;
    let ain = u(mi, n, &mut rng);
    let slack = DVector::from_fn(mi, |_, _| rng.random_range(0.0..1.0));
    let bin = &ain * &x0 + slack;
    DenseQp { h, f, aeq, beq, ain, bin }
}

/// Tries every subset of inequality rows as the active set and keeps the one
/// whose equality-constrained solution is primal feasible with non-negative
/// multipliers.
pub fn enumerate(qp: &DenseQp) -> Option<OracleSolution> {
    let n = qp.f.len();
    let meq = qp.aeq.nrows();
    let mi = qp.ain.nrows();
    for mask in 0u32..(1 << mi) {
        let set: Vec<usize> = (0..mi).filter(|i| mask & (1 << i) != 0).collect();
        let k = set.len();
        if meq + k > n {
            continue;
        }
        let dim = n + meq + k;
        let mut m = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        m.view_mut((0, 0), (n, n)).copy_from(&qp.h);
        for j in 0..n {
            rhs[j] = -qp.f[j];
        }
        for r in 0..meq {
            for j in 0..n {
                m[(n + r, j)] = qp.aeq[(r, j)];
                m[(j, n + r)] = qp.aeq[(r, j)];
            }
            rhs[n + r] = qp.beq[r];
        }
        for (a, &w) in set.iter().enumerate() {
            for j in 0..n {
                m[(n + meq + a, j)] = qp.ain[(w, j)];
                m[(j, n + meq + a)] = qp.ain[(w, j)];
            }
            rhs[n + meq + a] = qp.bin[w];
        }
        let svd = m.clone().svd(true, true);
        if svd.singular_values.min() < 1e-10 * svd.singular_values.max() {
            continue;
        }
        let Some(sol) = m.lu().solve(&rhs) else { continue };
        let x = sol.rows(0, n).into_owned();
        let mu = sol.rows(n, meq).into_owned();
        let lam_set = sol.rows(n + meq, k);
        if lam_set.iter().any(|&l| l < -1e-9) {
            continue;
        }
        let viol = &qp.ain * &x - &qp.bin;
        if viol.iter().any(|&v| v > 1e-9) {
            continue;
        }
        let mut lambda = DVector::zeros(mi);
        for (a, &w) in set.iter().enumerate() {
            lambda[w] = lam_set[a];
        }
        return Some(OracleSolution { x, lambda, mu });
    }
    None
}
