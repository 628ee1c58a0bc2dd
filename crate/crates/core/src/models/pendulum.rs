//! Inverted pendulum on a cart.
//!
//! State `x = (angle, angular velocity, cart position, cart velocity)` with
//! angle `0` upright, input is the horizontal force on the cart. The NMPC model
//! uses implicit Euler; the plant is integrated with an adaptive Runge–Kutta
//! method.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};

use super::ode::{integrate, Tolerances};
use crate::error::{Error, Result};
use crate::nlp::{ConstraintEval, CostDerivatives, Dims, NlpProblem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumParams {
    /// kg
    pub cart_mass: f64,
    /// kg
    pub pend_mass: f64,
    /// m
    pub length: f64,
    /// m/s²
    pub gravity: f64,
    /// s
    pub ts: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            cart_mass: 2.4,
            pend_mass: 0.23,
            length: 0.36,
            gravity: 9.81,
            ts: 0.02,
        }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.cart_mass, self.pend_mass, self.length, self.gravity, self.ts]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("pendulum parameters must be positive".into()))
        }
    }

    /// Denominators of the angular and cart accelerations at angle `x1`.
    pub fn denominators(&self, x1: f64) -> (f64, f64) {
        let (m, l, big_m) = (self.pend_mass, self.length, self.cart_mass);
        let c = x1.cos();
        (m * l * c * c - (big_m + m) * l, big_m + m - m * c * c)
    }
}

/// Continuous-time right-hand side.
pub fn pendulum_ode(p: &PendulumParams, x: &[f64], u: f64) -> Vector4<f64> {
    let (m, l, g, big_m) = (p.pend_mass, p.length, p.gravity, p.cart_mass);
    let (s, c) = x[0].sin_cos();
    let w2 = x[1] * x[1];
    let (d2, d4) = p.denominators(x[0]);
    Vector4::new(
        x[1],
        (u * c - (big_m + m) * g * s + m * l * c * s * w2) / d2,
        x[3],
        (u + m * l * s * w2 - m * g * c * s) / d4,
    )
}

/// `(∂f/∂x, ∂f/∂u)` of [`pendulum_ode`].
pub fn pendulum_ode_jacobian(p: &PendulumParams, x: &[f64], u: f64) -> (Matrix4<f64>, Vector4<f64>) {
    let (m, l, g, big_m) = (p.pend_mass, p.length, p.gravity, p.cart_mass);
    let (s, c) = x[0].sin_cos();
    let w = x[1];
    let w2 = w * w;
    let (d2, d4) = p.denominators(x[0]);
    let cos2 = c * c - s * s;

    let n2 = u * c - (big_m + m) * g * s + m * l * c * s * w2;
    let n2_x1 = -u * s - (big_m + m) * g * c + m * l * cos2 * w2;
    let d2_x1 = -2.0 * m * l * c * s;
    let n4 = u + m * l * s * w2 - m * g * c * s;
    let n4_x1 = m * l * c * w2 - m * g * cos2;
    let d4_x1 = 2.0 * m * c * s;

    let mut jx = Matrix4::zeros();
    jx[(0, 1)] = 1.0;
    jx[(1, 0)] = (n2_x1 * d2 - n2 * d2_x1) / (d2 * d2);
    jx[(1, 1)] = 2.0 * m * l * c * s * w / d2;
    jx[(2, 3)] = 1.0;
    jx[(3, 0)] = (n4_x1 * d4 - n4 * d4_x1) / (d4 * d4);
    jx[(3, 1)] = 2.0 * m * l * s * w / d4;
    let ju = Vector4::new(0.0, c / d2, 0.0, 1.0 / d4);
    (jx, ju)
}

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 25;

/// One implicit Euler step `x⁺ = x + Ts·f(x⁺, u)` solved by damped Newton.
pub fn pendulum_discrete(p: &PendulumParams, block: &[f64]) -> Result<Vector4<f64>> {
    let x = Vector4::from_column_slice(&block[..4]);
    let u = block[4];
    let residual = |y: &Vector4<f64>| y - x - pendulum_ode(p, y.as_slice(), u) * p.ts;
    let mut y = x + pendulum_ode(p, x.as_slice(), u) * p.ts;
    let mut r = residual(&y);
    for _ in 0..NEWTON_MAX_ITER {
        if r.amax() <= NEWTON_TOL * (1.0 + y.amax()) {
            return Ok(y);
        }
        let (jx, _) = pendulum_ode_jacobian(p, y.as_slice(), u);
        let jac = Matrix4::identity() - jx * p.ts;
        let step = jac
            .lu()
            .solve(&-r)
            .ok_or_else(|| Error::Integration("singular implicit Euler Jacobian".into()))?;
        let mut t = 1.0;
        loop {
            let trial = y + step * t;
            let r_trial = residual(&trial);
            if r_trial.amax() < r.amax() || t < 1e-4 {
                y = trial;
                r = r_trial;
                break;
            }
            t *= 0.5;
        }
    }
    if r.amax() <= NEWTON_TOL * (1.0 + y.amax()) {
        Ok(y)
    } else {
        Err(Error::Integration(format!(
            "implicit Euler did not converge (residual {:.3e})",
            r.amax()
        )))
    }
}

/// Jacobian of [`pendulum_discrete`] from the implicit function theorem.
pub fn pendulum_discrete_jacobian(p: &PendulumParams, block: &[f64]) -> Result<DMatrix<f64>> {
    let y = pendulum_discrete(p, block)?;
    let (jx, ju) = pendulum_ode_jacobian(p, y.as_slice(), block[4]);
    let lhs = Matrix4::identity() - jx * p.ts;
    let mut rhs = DMatrix::zeros(4, 5);
    for i in 0..4 {
        rhs[(i, i)] = 1.0;
        rhs[(i, 4)] = p.ts * ju[i];
    }
    let lu = nalgebra::DMatrix::from_fn(4, 4, |i, j| lhs[(i, j)]).lu();
    lu.solve(&rhs)
        .ok_or_else(|| Error::Integration("singular implicit Euler Jacobian".into()))
}

/// Plant response over `dt` with the input held constant.
pub fn integrate_plant(p: &PendulumParams, x: &[f64], u_hold: f64, dt: f64) -> Result<Vec<f64>> {
    integrate_plant_with(p, x, u_hold, dt, Tolerances::default())
}

pub fn integrate_plant_with(p: &PendulumParams, x: &[f64], u_hold: f64, dt: f64, tol: Tolerances) -> Result<Vec<f64>> {
    integrate(
        |x, dx| dx.copy_from_slice(pendulum_ode(p, x, u_hold).as_slice()),
        x,
        dt,
        tol,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumSpec {
    pub horizon: usize,
    pub state_weights: [f64; 4],
    pub input_weight: f64,
    pub terminal_weights: [f64; 4],
    /// Bound on the cart position.
    pub position_bound: f64,
    pub input_bound: f64,
}

impl Default for PendulumSpec {
    fn default() -> Self {
        Self {
            horizon: 40,
            state_weights: [100.0, 0.1, 500.0, 0.1],
            input_weight: 0.001,
            terminal_weights: [1000.0, 10.0, 500.0, 10.0],
            position_bound: 10.0,
            input_bound: 500.0,
        }
    }
}

/// Tracking problem for a constant state reference.
///
/// Stage cost `½(z − z_ref)ᵀ diag(Q, R)(z − z_ref)`, terminal cost
/// `½(x − x_ref)ᵀ Q_T (x − x_ref)`. The cart position is bounded on stages
/// `1..=N` (stage 0 is pinned to the measurement) and the force on stages
/// `0..N`.
#[derive(Debug, Clone)]
pub struct PendulumProblem {
    pub params: PendulumParams,
    pub spec: PendulumSpec,
    pub reference: [f64; 4],
    dims: Dims,
}

pub fn build_pendulum_problem(params: PendulumParams, spec: PendulumSpec, reference: [f64; 4]) -> Result<PendulumProblem> {
    params.validate()?;
    if spec.state_weights.iter().chain(&spec.terminal_weights).any(|w| !(*w >= 0.0)) || !(spec.input_weight >= 0.0) {
        return Err(Error::InvalidConfig("pendulum weights must be non-negative".into()));
    }
    if !(spec.position_bound > 0.0) || !(spec.input_bound > 0.0) {
        return Err(Error::InvalidConfig("pendulum bounds must be positive".into()));
    }
    let dims = Dims::new(4, 1, spec.horizon)?;
    Ok(PendulumProblem {
        params,
        spec,
        reference,
        dims,
    })
}

impl PendulumProblem {
    pub fn set_reference(&mut self, reference: [f64; 4]) {
        self.reference = reference;
    }

    fn stage_weights(&self) -> [f64; 5] {
        let q = self.spec.state_weights;
        [q[0], q[1], q[2], q[3], self.spec.input_weight]
    }

    fn bound_rows(rows: &mut Vec<(usize, f64, f64)>, col: usize, bound: f64, v: f64) {
        rows.push((col, 1.0, v - bound));
        rows.push((col, -1.0, -v - bound));
    }

    fn constraints(&self, width: usize, rows: Vec<(usize, f64, f64)>) -> ConstraintEval {
        let mut jac = DMatrix::zeros(rows.len(), width);
        let mut value = DVector::zeros(rows.len());
        for (k, &(col, sign, v)) in rows.iter().enumerate() {
            jac[(k, col)] = sign;
            value[k] = v;
        }
        ConstraintEval { value, jacobian: jac }
    }
}

fn quadratic(weights: &[f64], z: &[f64], reference: &[f64]) -> (f64, CostDerivatives) {
    let n = weights.len();
    let d: Vec<f64> = (0..n).map(|i| z[i] - reference[i]).collect();
    let cost = 0.5 * (0..n).map(|i| weights[i] * d[i] * d[i]).sum::<f64>();
    let derivs = CostDerivatives {
        gradient: DVector::from_fn(n, |i, _| weights[i] * d[i]),
        hessian: DMatrix::from_diagonal(&DVector::from_column_slice(weights)),
    };
    (cost, derivs)
}

impl NlpProblem for PendulumProblem {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn stage_cost(&self, _: usize, z: &[f64]) -> f64 {
        let r = self.reference;
        quadratic(&self.stage_weights(), z, &[r[0], r[1], r[2], r[3], 0.0]).0
    }

    fn terminal_cost(&self, x: &[f64]) -> f64 {
        quadratic(&self.spec.terminal_weights, x, &self.reference).0
    }

    fn stage_cost_derivatives(&self, _: usize, z: &[f64]) -> CostDerivatives {
        let r = self.reference;
        quadratic(&self.stage_weights(), z, &[r[0], r[1], r[2], r[3], 0.0]).1
    }

    fn terminal_cost_derivatives(&self, x: &[f64]) -> CostDerivatives {
        quadratic(&self.spec.terminal_weights, x, &self.reference).1
    }

    fn dynamics(&self, _: usize, z: &[f64]) -> Result<DVector<f64>> {
        Ok(DVector::from_column_slice(pendulum_discrete(&self.params, z)?.as_slice()))
    }

    fn dynamics_jacobian(&self, _: usize, z: &[f64]) -> Result<DMatrix<f64>> {
        pendulum_discrete_jacobian(&self.params, z)
    }

    fn stage_constraints(&self, stage: usize, z: &[f64]) -> ConstraintEval {
        let mut rows = Vec::with_capacity(4);
        if stage > 0 {
            Self::bound_rows(&mut rows, 2, self.spec.position_bound, z[2]);
        }
        Self::bound_rows(&mut rows, 4, self.spec.input_bound, z[4]);
        self.constraints(5, rows)
    }

    fn terminal_constraints(&self, x: &[f64]) -> ConstraintEval {
        let mut rows = Vec::with_capacity(2);
        Self::bound_rows(&mut rows, 2, self.spec.position_bound, x[2]);
        self.constraints(4, rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp::fd_jacobian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn equilibria_are_fixed_points() {
        let p = PendulumParams::default();
        assert_eq!(pendulum_ode(&p, &[0.0; 4], 0.0), Vector4::zeros());
        assert!(pendulum_ode(&p, &[PI, 0.0, 0.0, 0.0], 0.0).amax() < 1e-14);
        assert_eq!(pendulum_discrete(&p, &[0.0; 5]).unwrap(), Vector4::zeros());
        let down = pendulum_discrete(&p, &[PI, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((down[0] - PI).abs() < 1e-12 && down.rows(1, 3).amax() < 1e-12);
    }

    #[test]
    fn horizontal_pendulum_accelerates_at_g_over_l() {
        let p = PendulumParams::default();
        let f = pendulum_ode(&p, &[FRAC_PI_2, 0.0, 0.0, 0.0], 0.0);
        assert!((f[1] - 9.81 / 0.36).abs() < 1e-12);
        assert!(f[3].abs() < 1e-15);
    }

    #[test]
    fn denominators_stay_away_from_zero() {
        let p = PendulumParams::default();
        let worst = (0..=10_000)
            .map(|k| {
                let (a, b) = p.denominators(2.0 * PI * k as f64 / 10_000.0);
                a.abs().min(b.abs())
            })
            .fold(f64::INFINITY, f64::min);
        assert!(worst > 0.1);
    }

    #[test]
    fn ode_jacobian_matches_finite_differences() {
        let p = PendulumParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            let u = rng.random_range(-50.0..50.0);
            let (jx, ju) = pendulum_ode_jacobian(&p, &x, u);
            let h = 1e-6;
            for j in 0..5 {
                let mut a = x.clone();
                let mut b = x.clone();
                let (ua, ub) = if j == 4 {
                    (u + h, u - h)
                } else {
                    a[j] += h;
                    b[j] -= h;
                    (u, u)
                };
                let col = (pendulum_ode(&p, &a, ua) - pendulum_ode(&p, &b, ub)) / (2.0 * h);
                let exact = if j == 4 { ju } else { jx.column(j).into_owned() };
                assert!((col - exact).amax() <= 1e-5 * (1.0 + exact.amax()));
            }
        }
    }

    #[test]
    fn implicit_euler_residual_vanishes() {
        let p = PendulumParams::default();
        let block = [0.1, 0.0, 0.0, 0.0, 0.0];
        let y = pendulum_discrete(&p, &block).unwrap();
        let back = Vector4::new(0.1, 0.0, 0.0, 0.0) + pendulum_ode(&p, y.as_slice(), 0.0) * p.ts;
        assert!((y - back).amax() < 1e-12);
    }

    #[test]
    fn discrete_jacobian_matches_finite_differences() {
        let problem = build_pendulum_problem(PendulumParams::default(), PendulumSpec::default(), [0.0; 4]).unwrap();
        let block = [0.1, 0.0, 0.0, 0.0, 0.0];
        let exact = problem.dynamics_jacobian(0, &block).unwrap();
        let fd = fd_jacobian(&problem, 0, &block, 1e-6).unwrap();
        assert!((&exact - &fd).amax() <= 1e-5 * exact.amax());
    }

    #[test]
    fn small_angles_follow_the_linear_model() {
        let p = PendulumParams::default();
        let x0 = [1e-4, 0.0, 0.0, 0.0];
        let y = pendulum_discrete(&p, &[x0[0], x0[1], x0[2], x0[3], 0.0]).unwrap();
        let (a, _) = pendulum_ode_jacobian(&p, &[0.0; 4], 0.0);
        let lin = (Matrix4::identity() - a * p.ts).lu().solve(&Vector4::from_column_slice(&x0)).unwrap();
        assert!((y - lin).amax() < 1e-10);
    }

    #[test]
    fn stage_cost_and_bounds() {
        let problem = build_pendulum_problem(PendulumParams::default(), PendulumSpec::default(), [0.0, 0.0, 3.0, 0.0]).unwrap();
        let z_ref = [0.0, 0.0, 3.0, 0.0, 0.0];
        assert_eq!(problem.stage_cost(1, &z_ref), 0.0);
        let d = problem.stage_cost_derivatives(1, &z_ref);
        assert_eq!(d.gradient, DVector::zeros(5));
        let diag = DVector::from_vec(vec![100.0, 0.1, 500.0, 0.1, 0.001]);
        assert_eq!(d.hessian, DMatrix::from_diagonal(&diag));
        let g = problem.stage_constraints(3, &[0.0, 0.0, 0.0, 0.0, 600.0]);
        assert_eq!(g.rows(), 4);
        assert_eq!(g.value[2], 100.0);
        assert!(g.value.iter().enumerate().all(|(k, v)| k == 2 || *v < 0.0));
        assert_eq!(problem.stage_constraints(0, &z_ref).rows(), 2);
    }

    #[test]
    fn plant_keeps_upright_equilibrium() {
        let p = PendulumParams::default();
        let x = integrate_plant(&p, &[0.0, 0.0, 1.5, 0.0], 0.0, 0.02).unwrap();
        assert!((x[2] - 1.5).abs() < 1e-10 && x[0].abs() < 1e-10);
    }

    #[test]
    fn plant_self_converges() {
        let p = PendulumParams::default();
        let x0 = [PI - 0.3, 1.0, 0.0, 0.5];
        let a = integrate_plant(&p, &x0, 20.0, 0.5).unwrap();
        let tight = Tolerances { atol: 5e-9, rtol: 5e-9 };
        let b = integrate_plant_with(&p, &x0, 20.0, 0.5, tight).unwrap();
        let diff = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(diff < 1e-7, "{diff}");
    }
}
