//! Linearization of the NMPC problem around a guess trajectory and assembly
//! of the stacked QP
//!
//! ```text
//! min ½ Δzᵀ𝒬Δz + 𝓕ᵀΔz   s.t.  𝓜Δz ≤ −s,  𝓐Δz = r
//! ```
//!
//! Stages are indexed `0..=N`. Row block `0` of `𝓐` is `E` on stage 0 with
//! residual `x(k) − E z₀`; row block `i+1` is `−Aᵢ` on stage `i` and `E` on
//! stage `i+1` with residual `h(zᵢ) − E z_{i+1}`. Algebraic rows, when the model
//! has them, are appended after the `(N+1)n` dynamics rows.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::Result;
use crate::nlp::{eval_dynamics, ConstraintEval, Dims, NlpProblem, Trajectory};
use crate::sparse::CsrMatrix;

/// Smallest eigenvalue a regularized Hessian block is allowed to have.
pub const MIN_HESSIAN_EIGENVALUE: f64 = 1e-8;

/// Per-stage QP blocks evaluated at a linearization point.
#[derive(Debug, Clone)]
pub struct QpData {
    pub dims: Dims,
    /// `Q₀ … Q_N`, regularized.
    pub hessians: Vec<DMatrix<f64>>,
    /// `F₀ … F_N`
    pub gradients: Vec<DVector<f64>>,
    /// `M₀ … M_N`
    pub ineq_jacobians: Vec<DMatrix<f64>>,
    /// `s₀ … s_N`
    pub ineq_values: Vec<DVector<f64>>,
    /// `A₀ … A_{N−1}`
    pub dyn_jacobians: Vec<DMatrix<f64>>,
    /// The `(N+1)n` dynamics rows of `r`.
    pub dyn_residual: DVector<f64>,
    /// Algebraic equality rows `cᵢ + CᵢΔzᵢ = 0` for stages `0..N`.
    pub algebraic: Vec<Option<ConstraintEval>>,
}

impl QpData {
    pub fn n_eq(&self) -> usize {
        self.dyn_residual.len() + self.algebraic.iter().flatten().map(|c| c.rows()).sum::<usize>()
    }

    pub fn n_ineq(&self) -> usize {
        self.ineq_values.iter().map(|s| s.len()).sum()
    }

    /// Full equality right-hand side `r`, algebraic rows included.
    pub fn residual(&self) -> DVector<f64> {
        let mut r = self.dyn_residual.as_slice().to_vec();
        for c in self.algebraic.iter().flatten() {
            r.extend(c.value.iter().map(|v| -v));
        }
        DVector::from_vec(r)
    }

    /// Stacked inequality values `s`.
    pub fn ineq_stack(&self) -> DVector<f64> {
        DVector::from_iterator(self.n_ineq(), self.ineq_values.iter().flat_map(|s| s.iter().copied()))
    }

    /// `𝒬·Δz` applied block by block.
    pub fn hessian_mul(&self, dz: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(dz.len());
        for (i, q) in self.hessians.iter().enumerate() {
            let o = self.dims.stage_offset(i);
            let w = q.nrows();
            let y = q * dz.rows(o, w);
            out.rows_mut(o, w).copy_from(&y);
        }
        out
    }
}

/// The QP in stacked sparse form plus the stage of every variable, which the
/// structured KKT solver uses to order unknowns into a narrow band.
#[derive(Debug, Clone)]
pub struct StackedQp {
    pub h: CsrMatrix,
    pub f: DVector<f64>,
    pub aeq: CsrMatrix,
    pub beq: DVector<f64>,
    pub aineq: CsrMatrix,
    pub bineq: DVector<f64>,
    pub var_stage: Vec<usize>,
}

impl StackedQp {
    /// A QP without stage structure (every variable in stage 0).
    pub fn dense(
        h: &DMatrix<f64>,
        f: DVector<f64>,
        aeq: &DMatrix<f64>,
        beq: DVector<f64>,
        aineq: &DMatrix<f64>,
        bineq: DVector<f64>,
    ) -> Self {
        let n = f.len();
        Self {
            h: CsrMatrix::from_dense(h),
            f,
            aeq: CsrMatrix::from_dense(aeq),
            beq,
            aineq: CsrMatrix::from_dense(aineq),
            bineq,
            var_stage: vec![0; n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.f.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&self.h.mul_vec(x)) + self.f.dot(x)
    }
}

/// Shifts a symmetric block by the smallest `ρ ∈ {0, 10⁻⁸, 10⁻⁷, …}` that
/// lifts its minimum eigenvalue to at least `10⁻⁸`.
pub fn regularize_hessian(q: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(q.is_square(), "Hessian block must be square");
    let sym = (q + q.transpose()) * 0.5;
    if sym.nrows() == 0 {
        return sym;
    }
    let min_eig = SymmetricEigen::new(sym.clone()).eigenvalues.min();
    if min_eig >= MIN_HESSIAN_EIGENVALUE {
        return sym;
    }
    let mut rho = MIN_HESSIAN_EIGENVALUE;
    while min_eig + rho < MIN_HESSIAN_EIGENVALUE {
        rho *= 10.0;
    }
    let n = sym.nrows();
    sym + DMatrix::identity(n, n) * rho
}

/// Stacked equality residual `r` of a trajectory (dynamics rows followed by
/// algebraic rows).
pub fn equality_residual<P: NlpProblem + ?Sized>(
    problem: &P,
    traj: &Trajectory,
    x_now: &[f64],
) -> Result<DVector<f64>> {
    let dims = problem.dims();
    let nx = dims.nx();
    let n_stages = dims.horizon();
    let mut r = Vec::with_capacity((n_stages + 1) * nx);
    r.extend(x_now.iter().zip(traj.state(0)).map(|(a, b)| a - b));
    for i in 0..n_stages {
        let next = eval_dynamics(problem, i, traj.stage(i))?;
        r.extend(next.iter().zip(traj.state(i + 1)).map(|(a, b)| a - b));
    }
    for i in 0..n_stages {
        if let Some(c) = problem.stage_algebraic(i, traj.stage(i)) {
            r.extend(c.value.iter().map(|v| -v));
        }
    }
    Ok(DVector::from_vec(r))
}

/// Evaluates every block of the linearized QP at `guess`.
pub fn build_qp<P: NlpProblem + ?Sized>(problem: &P, guess: &Trajectory, x_now: &[f64]) -> Result<QpData> {
    let dims = problem.dims();
    assert_eq!(guess.dims(), dims, "trajectory dims do not match the problem");
    assert_eq!(x_now.len(), dims.nx());
    let n_stages = dims.horizon();
    let nx = dims.nx();

    let mut hessians = Vec::with_capacity(n_stages + 1);
    let mut gradients = Vec::with_capacity(n_stages + 1);
    let mut ineq_jacobians = Vec::with_capacity(n_stages + 1);
    let mut ineq_values = Vec::with_capacity(n_stages + 1);
    let mut dyn_jacobians = Vec::with_capacity(n_stages);
    let mut algebraic = Vec::with_capacity(n_stages);
    let mut dyn_residual = DVector::zeros((n_stages + 1) * nx);

    for (k, (a, b)) in x_now.iter().zip(guess.state(0)).enumerate() {
        dyn_residual[k] = a - b;
    }

    for i in 0..n_stages {
        let z = guess.stage(i);
        let cost = problem.stage_cost_derivatives(i, z);
        hessians.push(regularize_hessian(&cost.hessian));
        gradients.push(cost.gradient);
        let g = problem.stage_constraints(i, z);
        ineq_jacobians.push(g.jacobian);
        ineq_values.push(g.value);
        let next = eval_dynamics(problem, i, z)?;
        let jac = problem.dynamics_jacobian(i, z)?;
        for k in 0..nx {
            dyn_residual[(i + 1) * nx + k] = next[k] - guess.state(i + 1)[k];
        }
        dyn_jacobians.push(jac);
        algebraic.push(problem.stage_algebraic(i, z));
    }
    let x_terminal = guess.stage(n_stages);
    let cost = problem.terminal_cost_derivatives(x_terminal);
    hessians.push(regularize_hessian(&cost.hessian));
    gradients.push(cost.gradient);
    let g = problem.terminal_constraints(x_terminal);
    ineq_jacobians.push(g.jacobian);
    ineq_values.push(g.value);

    Ok(QpData {
        dims,
        hessians,
        gradients,
        ineq_jacobians,
        ineq_values,
        dyn_jacobians,
        dyn_residual,
        algebraic,
    })
}

fn push_block(t: &mut Vec<(usize, usize, f64)>, row0: usize, col0: usize, block: &DMatrix<f64>, scale: f64) {
    for i in 0..block.nrows() {
        for j in 0..block.ncols() {
            t.push((row0 + i, col0 + j, scale * block[(i, j)]));
        }
    }
}

/// Stacks the stage blocks into sparse matrices. Dense blocks are stored in
/// full, explicit zeros included, so the pattern depends only on the
/// dimensions and the per-stage row counts.
pub fn stack(qp: &QpData) -> StackedQp {
    let dims = qp.dims;
    let p = dims.decision_len();
    let nx = dims.nx();
    let n_stages = dims.horizon();

    let mut ht = Vec::new();
    let mut f = Vec::with_capacity(p);
    for (i, (q, g)) in qp.hessians.iter().zip(&qp.gradients).enumerate() {
        push_block(&mut ht, dims.stage_offset(i), dims.stage_offset(i), q, 1.0);
        f.extend(g.iter().copied());
    }

    let n_eq = qp.n_eq();
    let mut at = Vec::new();
    for k in 0..nx {
        at.push((k, k, 1.0));
    }
    for i in 0..n_stages {
        let row0 = (i + 1) * nx;
        push_block(&mut at, row0, dims.stage_offset(i), &qp.dyn_jacobians[i], -1.0);
        for k in 0..nx {
            at.push((row0 + k, dims.stage_offset(i + 1) + k, 1.0));
        }
    }
    let mut row = (n_stages + 1) * nx;
    for (i, c) in qp.algebraic.iter().enumerate() {
        if let Some(c) = c {
            push_block(&mut at, row, dims.stage_offset(i), &c.jacobian, 1.0);
            row += c.rows();
        }
    }

    let n_in = qp.n_ineq();
    let mut mt = Vec::new();
    let mut row = 0;
    for (i, m) in qp.ineq_jacobians.iter().enumerate() {
        push_block(&mut mt, row, dims.stage_offset(i), m, 1.0);
        row += m.nrows();
    }

    StackedQp {
        h: CsrMatrix::from_triplets(p, p, ht),
        f: DVector::from_vec(f),
        aeq: CsrMatrix::from_triplets(n_eq, p, at),
        beq: qp.residual(),
        aineq: CsrMatrix::from_triplets(n_in, p, mt),
        bineq: -qp.ineq_stack(),
        var_stage: dims.stage_of_each_variable(),
    }
}
