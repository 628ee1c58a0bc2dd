//! Numerical checks shared by the property tests and the acceptance run.

use nalgebra::{DMatrix, DVector};
use pssqp::linearize::{build_qp, equality_residual, stack};
use pssqp::models::{build_pendulum_problem, build_wdn_problem, PendulumParams, PendulumSpec, WdnSpec};
use pssqp::nlp::{fd_jacobian, rollout, NlpProblem};
use pssqp::shoot::NullSpaceProjector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-6;

/// Largest entry of `exact − approx`, relative to the size of `approx`.
pub fn relative_gap(exact: &DMatrix<f64>, approx: &DMatrix<f64>) -> f64 {
    (exact - approx).amax() / approx.amax().max(1.0)
}

fn central(f: &dyn Fn(&[f64]) -> DVector<f64>, z: &[f64]) -> DMatrix<f64> {
    let rows = f(z).len();
    let mut jac = DMatrix::zeros(rows, z.len());
    let mut probe = z.to_vec();
    for j in 0..z.len() {
        let h = FD_STEP * (1.0 + z[j].abs());
        probe[j] = z[j] + h;
        let plus = f(&probe);
        probe[j] = z[j] - h;
        let minus = f(&probe);
        probe[j] = z[j];
        jac.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    jac
}

/// Worst relative gap between the analytic derivatives a problem reports at
/// stage block `z` and central differences: dynamics, inequality and
/// algebraic Jacobians, cost gradient and cost Hessian.
pub fn derivative_gap<P: NlpProblem>(problem: &P, stage: usize, z: &[f64]) -> f64 {
    let dyn_exact = problem.dynamics_jacobian(stage, z).unwrap();
    let dyn_fd = fd_jacobian(problem, stage, z, FD_STEP).unwrap();
    let mut worst = relative_gap(&dyn_exact, &dyn_fd);

    let g = |z: &[f64]| problem.stage_constraints(stage, z).value;
    worst = worst.max(relative_gap(&problem.stage_constraints(stage, z).jacobian, &central(&g, z)));

    if let Some(alg) = problem.stage_algebraic(stage, z) {
        let c = |z: &[f64]| problem.stage_algebraic(stage, z).unwrap().value;
        worst = worst.max(relative_gap(&alg.jacobian, &central(&c, z)));
    }

    let d = problem.stage_cost_derivatives(stage, z);
    let cost = |z: &[f64]| DVector::from_element(1, problem.stage_cost(stage, z));
    worst = worst.max(relative_gap(&DMatrix::from_row_slice(1, z.len(), d.gradient.as_slice()), &central(&cost, z)));
    let grad = |z: &[f64]| problem.stage_cost_derivatives(stage, z).gradient;
    worst.max(relative_gap(&d.hessian, &central(&grad, z)))
}

/// Worst derivative gap of the pendulum over `points` seeded stage blocks.
pub fn pendulum_derivative_gap(seed: u64, points: usize) -> f64 {
    let p = build_pendulum_problem(PendulumParams::default(), PendulumSpec::default(), [0.0, 0.0, 3.0, 0.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..points)
        .map(|_| {
            let z = [
                rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
                rng.random_range(-8.0..8.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(-8.0..8.0),
                rng.random_range(-500.0..500.0),
            ];
            derivative_gap(&p, rng.random_range(0..40), &z)
        })
        .fold(0.0, f64::max)
}

/// Worst derivative gap of the water network over `points` seeded stage
/// blocks inside its operating envelope.
pub fn wdn_derivative_gap(seed: u64, points: usize) -> f64 {
    let p = build_wdn_problem(WdnSpec::default(), 0.0).unwrap();
    let width = p.dims().stage_width();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..points)
        .map(|_| {
            let mut z: Vec<f64> = (0..width).map(|_| rng.random_range(-30.0..45.0)).collect();
            z[3] = rng.random_range(0.0..60.0);
            z[4] = rng.random_range(0.0..40.0);
            derivative_gap(&p, rng.random_range(0..24), &z)
        })
        .fold(0.0, f64::max)
}

/// Dynamics residual `‖r‖∞` of a pendulum rollout perturbed along a random
/// null-space direction of its equality Jacobian, one value per scale.
pub fn nullspace_residuals(seed: u64, scales: &[f64]) -> Vec<f64> {
    let p = build_pendulum_problem(PendulumParams::default(), PendulumSpec::default(), [0.0, 0.0, 3.0, 0.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_now = [rng.random_range(-0.5..0.5), rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0), 0.0];
    let inputs: Vec<f64> = (0..p.dims().horizon()).map(|_| rng.random_range(-20.0..20.0)).collect();
    let base = rollout(&p, &x_now, &inputs).unwrap();
    let projector = NullSpaceProjector::new(&stack(&build_qp(&p, &base, &x_now).unwrap()).aeq).unwrap();
    let omega = DVector::from_fn(p.dims().decision_len(), |_, _| rng.random_range(-1.0..=1.0));
    let eps = projector.apply(&omega);
    let unit = eps.amax();
    scales
        .iter()
        .map(|s| equality_residual(&p, &base.stepped(&eps, s / unit), &x_now).unwrap().amax())
        .collect()
}

/// Ratios of successive residuals when the scale is halved three times.
pub fn halving_ratios(seed: u64) -> Vec<f64> {
    let r = nullspace_residuals(seed, &[0.01, 0.005, 0.0025, 0.00125]);
    r.windows(2).map(|w| w[0] / w[1]).collect()
}
