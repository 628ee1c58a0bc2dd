//! Problem abstraction for nonlinear MPC over a discrete horizon.
//!
//! A horizon of `N` stages is stacked into a single decision vector
//! `z = [x₀; u₀; x₁; u₁; …; x_{N−1}; u_{N−1}; x_N]` of length `N(n+q)+n`.
//! Stage `i < N` owns the block `zᵢ = [xᵢ; uᵢ]`, the terminal stage owns only
//! `x_N`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Problem dimensions: state size `nx`, input size `nu`, horizon length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    nx: usize,
    nu: usize,
    horizon: usize,
}

impl Dims {
    pub fn new(nx: usize, nu: usize, horizon: usize) -> Result<Self> {
        if nx == 0 || nu == 0 {
            return Err(Error::InvalidDims(format!("need nx ≥ 1 and nu ≥ 1, got nx={nx}, nu={nu}")));
        }
        if horizon < 2 {
            return Err(Error::InvalidDims(format!("horizon must be ≥ 2, got {horizon}")));
        }
        Ok(Self { nx, nu, horizon })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Width of a non-terminal stage block, `n + q`.
    pub fn stage_width(&self) -> usize {
        self.nx + self.nu
    }

    /// Total decision length `p = N(n+q) + n`.
    pub fn decision_len(&self) -> usize {
        self.horizon * self.stage_width() + self.nx
    }

    /// Width of stage `i` (the terminal stage holds the state only).
    pub fn width_of(&self, stage: usize) -> usize {
        if stage < self.horizon {
            self.stage_width()
        } else {
            self.nx
        }
    }

    pub fn stage_offset(&self, stage: usize) -> usize {
        assert!(stage <= self.horizon, "stage {stage} beyond horizon {}", self.horizon);
        stage * self.stage_width()
    }

    /// Stage index of every entry of the decision vector.
    pub fn stage_of_each_variable(&self) -> Vec<usize> {
        (0..=self.horizon)
            .flat_map(|i| std::iter::repeat_n(i, self.width_of(i)))
            .collect()
    }
}

/// `E = [I 0]`, picking the state out of a stage block.
#[derive(Debug, Clone, Copy)]
pub struct StateSelector {
    dims: Dims,
}

impl StateSelector {
    pub fn new(dims: Dims) -> Self {
        Self { dims }
    }

    pub fn apply<'a>(&self, block: &'a [f64]) -> &'a [f64] {
        &block[..self.dims.nx]
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.dims.nx, self.dims.stage_width());
        e.fill_diagonal(1.0);
        e
    }
}

/// A stacked state/input trajectory over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dims: Dims,
    data: DVector<f64>,
}

impl Trajectory {
    pub fn new(dims: Dims, data: DVector<f64>) -> Result<Self> {
        if data.len() != dims.decision_len() {
            return Err(Error::InvalidDims(format!(
                "trajectory length {} does not match p = {}",
                data.len(),
                dims.decision_len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            data: DVector::zeros(dims.decision_len()),
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.data
    }

    pub fn stage(&self, i: usize) -> &[f64] {
        let o = self.dims.stage_offset(i);
        &self.data.as_slice()[o..o + self.dims.width_of(i)]
    }

    pub fn stage_mut(&mut self, i: usize) -> &mut [f64] {
        let o = self.dims.stage_offset(i);
        let w = self.dims.width_of(i);
        &mut self.data.as_mut_slice()[o..o + w]
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.stage(i)[..self.dims.nx]
    }

    pub fn input(&self, i: usize) -> &[f64] {
        assert!(i < self.dims.horizon, "terminal stage has no input");
        &self.stage(i)[self.dims.nx..]
    }

    pub fn set_state(&mut self, i: usize, x: &[f64]) {
        let nx = self.dims.nx;
        self.stage_mut(i)[..nx].copy_from_slice(x);
    }

    pub fn set_input(&mut self, i: usize, u: &[f64]) {
        let nx = self.dims.nx;
        self.stage_mut(i)[nx..].copy_from_slice(u);
    }

    /// `self + alpha · step`
    pub fn stepped(&self, step: &DVector<f64>, alpha: f64) -> Trajectory {
        assert_eq!(step.len(), self.data.len());
        Trajectory {
            dims: self.dims,
            data: &self.data + step * alpha,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.amax()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Gradient and Hessian of a cost term at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct CostDerivatives {
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// Value and Jacobian of a vector-valued constraint function.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintEval {
    pub value: DVector<f64>,
    pub jacobian: DMatrix<f64>,
}

impl ConstraintEval {
    pub fn empty(width: usize) -> Self {
        Self {
            value: DVector::zeros(0),
            jacobian: DMatrix::zeros(0, width),
        }
    }

    pub fn rows(&self) -> usize {
        self.value.len()
    }
}

/// A discrete-time NMPC problem
///
/// ```text
/// min  Σᵢ f(i, zᵢ) + f_T(x_N)
/// s.t. g(i, zᵢ) ≤ 0,  g_T(x_N) ≤ 0,
///      x₀ = x(k),  x_{i+1} = h(i, zᵢ),
///      c(i, zᵢ) = 0            (optional algebraic rows)
/// ```
///
/// Every callback must be a pure function of its arguments; the solver
/// evaluates them from several threads at once. The number of constraint rows
/// returned for a stage must not depend on the evaluation point.
pub trait NlpProblem: Sync {
    fn dims(&self) -> Dims;

    fn stage_cost(&self, stage: usize, z: &[f64]) -> f64;
    fn terminal_cost(&self, x: &[f64]) -> f64;
    fn stage_cost_derivatives(&self, stage: usize, z: &[f64]) -> CostDerivatives;
    fn terminal_cost_derivatives(&self, x: &[f64]) -> CostDerivatives;

    fn dynamics(&self, stage: usize, z: &[f64]) -> Result<DVector<f64>>;
    /// `∂h/∂z`, an `n × (n+q)` matrix.
    fn dynamics_jacobian(&self, stage: usize, z: &[f64]) -> Result<DMatrix<f64>>;

    /// Inequality rows `g(i, zᵢ) ≤ 0` and their Jacobian.
    fn stage_constraints(&self, stage: usize, z: &[f64]) -> ConstraintEval;
    fn terminal_constraints(&self, x: &[f64]) -> ConstraintEval;

    /// Algebraic equality rows `c(i, zᵢ) = 0`, if the model has any.
    fn stage_algebraic(&self, _stage: usize, _z: &[f64]) -> Option<ConstraintEval> {
        None
    }
}

/// Evaluates `h` at a stage block and rejects non-finite results.
pub fn eval_dynamics<P: NlpProblem + ?Sized>(problem: &P, stage: usize, block: &[f64]) -> Result<DVector<f64>> {
    if block.iter().any(|v| !v.is_finite()) {
        return Err(Error::DynamicsEval {
            stage,
            reason: "non-finite stage block".into(),
        });
    }
    let x = problem.dynamics(stage, block)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::DynamicsEval {
            stage,
            reason: "dynamics returned a non-finite state".into(),
        });
    }
    Ok(x)
}

/// Central-difference Jacobian of the dynamics. Test oracle for
/// [`NlpProblem::dynamics_jacobian`].
pub fn fd_jacobian<P: NlpProblem + ?Sized>(
    problem: &P,
    stage: usize,
    block: &[f64],
    step: f64,
) -> Result<DMatrix<f64>> {
    assert!(step > 0.0, "finite-difference step must be positive");
    let nx = problem.dims().nx();
    let mut jac = DMatrix::zeros(nx, block.len());
    let mut probe = block.to_vec();
    for j in 0..block.len() {
        let h = step * (1.0 + block[j].abs());
        probe[j] = block[j] + h;
        let plus = eval_dynamics(problem, stage, &probe)?;
        probe[j] = block[j] - h;
        let minus = eval_dynamics(problem, stage, &probe)?;
        probe[j] = block[j];
        jac.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    Ok(jac)
}

/// Forward-simulates the dynamics from `x0` with the given stacked inputs
/// (`N·q` values, stage-major).
pub fn rollout<P: NlpProblem + ?Sized>(problem: &P, x0: &[f64], inputs: &[f64]) -> Result<Trajectory> {
    let dims = problem.dims();
    let (nx, nu, n_stages) = (dims.nx(), dims.nu(), dims.horizon());
    assert_eq!(x0.len(), nx);
    assert_eq!(inputs.len(), n_stages * nu);
    let mut traj = Trajectory::zeros(dims);
    traj.set_state(0, x0);
    for i in 0..n_stages {
        traj.set_input(i, &inputs[i * nu..(i + 1) * nu]);
        let next = eval_dynamics(problem, i, traj.stage(i))?;
        traj.set_state(i + 1, next.as_slice());
    }
    Ok(traj)
}

/// Stacked inputs of a trajectory (`N·q` values).
pub fn inputs_of(traj: &Trajectory) -> Vec<f64> {
    (0..traj.dims().horizon()).flat_map(|i| traj.input(i).to_vec()).collect()
}

/// Shifts a solved trajectory one stage forward in time to warm start the
/// next sample. The last input is repeated and the terminal state is obtained
/// by propagating the new last stage block through `h`.
pub fn shift_warm_start<P: NlpProblem + ?Sized>(problem: &P, prev: &Trajectory) -> Result<Trajectory> {
    let dims = problem.dims();
    assert_eq!(prev.dims(), dims);
    let n_stages = dims.horizon();
    let mut next = Trajectory::zeros(dims);
    for i in 0..n_stages - 1 {
        next.stage_mut(i).copy_from_slice(prev.stage(i + 1));
    }
    // Stage N−1 pairs the old terminal state with the old last input.
    next.set_state(n_stages - 1, prev.state(n_stages));
    next.set_input(n_stages - 1, prev.input(n_stages - 1));
    let terminal = eval_dynamics(problem, n_stages - 1, next.stage(n_stages - 1))?;
    next.set_state(n_stages, terminal.as_slice());
    Ok(next)
}

/// Total objective value along a trajectory.
pub fn total_cost<P: NlpProblem + ?Sized>(problem: &P, traj: &Trajectory) -> f64 {
    let n_stages = problem.dims().horizon();
    (0..n_stages).map(|i| problem.stage_cost(i, traj.stage(i))).sum::<f64>()
        + problem.terminal_cost(traj.stage(n_stages))
}


#[cfg(test)]
mod tests {
    use super::toy::Scalar;
    use super::*;

    #[test]
    fn dims_validation() {
        assert!(Dims::new(0, 1, 3).is_err());
        assert!(Dims::new(1, 0, 3).is_err());
        assert!(Dims::new(1, 1, 1).is_err());
        let d = Dims::new(4, 1, 40).unwrap();
        assert_eq!(d.decision_len(), 204);
        assert_eq!(d.width_of(40), 4);
        assert_eq!(d.width_of(39), 5);
    }

    #[test]
    fn stage_accessors() {
        let d = Dims::new(2, 1, 2).unwrap();
        let t = Trajectory::new(d, DVector::from_iterator(8, (0..8).map(|v| v as f64))).unwrap();
        assert_eq!(t.stage(0), &[0.0, 1.0, 2.0]);
        assert_eq!(t.state(1), &[3.0, 4.0]);
        assert_eq!(t.input(1), &[5.0]);
        assert_eq!(t.stage(2), &[6.0, 7.0]);
        assert!(Trajectory::new(d, DVector::zeros(7)).is_err());
    }

    #[test]
    fn selector_picks_state() {
        let d = Dims::new(2, 3, 2).unwrap();
        let e = StateSelector::new(d);
        let block = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(e.apply(&block), &[1.0, 2.0]);
        let m = e.matrix();
        assert_eq!((m * DVector::from_row_slice(&block)).as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn fd_jacobian_of_linear_map_is_exact() {
        let mut p = Scalar::integrator(3);
        p.a = 2.0;
        let j = fd_jacobian(&p, 0, &[0.3, -1.2], 1e-6).unwrap();
        assert!((j[(0, 0)] - 2.0).abs() < 1e-9);
        assert!((j[(0, 1)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fd_jacobian_of_constant_map_is_zero() {
        let mut p = Scalar::integrator(3);
        p.a = 0.0;
        p.b = 0.0;
        let j = fd_jacobian(&p, 0, &[0.3, -1.2], 1e-6).unwrap();
        assert_eq!(j.amax(), 0.0);
    }

    #[test]
    fn shift_of_integrator_trajectory() {
        let p = Scalar::integrator(2);
        let prev = Trajectory::new(p.dims(), DVector::from_vec(vec![0.0, 1.0, 1.0, 1.0, 2.0])).unwrap();
        let next = shift_warm_start(&p, &prev).unwrap();
        assert_eq!(next.as_vector().as_slice(), &[1.0, 1.0, 2.0, 1.0, 3.0]);
    }

    #[test]
    fn shift_of_constant_equilibrium_is_identity() {
        let p = Scalar::integrator(4);
        let prev = rollout(&p, &[0.0], &[0.0; 4]).unwrap();
        assert_eq!(shift_warm_start(&p, &prev).unwrap(), prev);
    }

    #[test]
    fn rollout_of_integrator() {
        let p = Scalar::integrator(3);
        let t = rollout(&p, &[0.0], &[1.0, 1.0, 1.0]).unwrap();
        let states: Vec<f64> = (0..=3).map(|i| t.state(i)[0]).collect();
        assert_eq!(states, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(inputs_of(&t), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn non_finite_block_is_rejected() {
        let p = Scalar::integrator(3);
        assert!(matches!(
            eval_dynamics(&p, 1, &[f64::NAN, 0.0]),
            Err(Error::DynamicsEval { stage: 1, .. })
        ));
    }
}
