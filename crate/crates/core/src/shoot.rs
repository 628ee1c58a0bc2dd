//! Parallel shooting SQP.
//!
//! Phase 1 runs `m` full-step SQP iterations side by side from perturbed
//! copies of the initial guess. When the shots stop making progress (an error
//! increase, all shots collapsing onto one trajectory, or a two-cycle in the
//! steps) the solver latches into Phase 2, where every worker linearizes at a
//! different fraction `j/m` of the best shot's Newton step.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linearize::{build_qp, stack, QpData};
use crate::nlp::{inputs_of, rollout, NlpProblem, Trajectory};
use crate::qp::{QpSettings, QpSolution, QpSolver};
use crate::sparse::CsrMatrix;

/// How Phase-1 shots are perturbed away from the initial guess.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShotMethod {
    /// Random offsets projected onto the kernel of the linearized dynamics.
    #[default]
    NullSpace,
    /// Random input offsets with states regenerated through the dynamics.
    InputRollout,
}

/// Reading of the "error increased" trigger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TriggerMode {
    /// Fires when any shot's error went up.
    #[default]
    AnyIncrease,
    /// Fires only when every shot's error went up.
    AllIncrease,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsSqpConfig {
    /// Number of concurrent shots.
    pub m: usize,
    /// Convergence tolerance on the residual error.
    pub delta: f64,
    /// Weight of the equality residual inside the residual error.
    pub gamma: f64,
    pub max_outer_iters: usize,
    pub seed: u64,
    pub shot_method: ShotMethod,
    /// Size of Phase-1 perturbations relative to `1 + ‖z‖∞`.
    pub shot_scale: f64,
    /// Relative tolerance for "all trajectories are equal".
    pub eq_tol: f64,
    /// Absolute tolerance for "steps cancel out".
    pub cyc_tol: f64,
    pub trigger_mode: TriggerMode,
    /// When false the solver never leaves Phase 1.
    pub phase2_enabled: bool,
    pub qp: QpSettings,
}

impl Default for PsSqpConfig {
    fn default() -> Self {
        Self {
            m: 1,
            delta: 0.5,
            gamma: 1.0,
            max_outer_iters: 100,
            seed: 0,
            shot_method: ShotMethod::NullSpace,
            shot_scale: 0.02,
            eq_tol: 1e-6,
            cyc_tol: 1e-8,
            trigger_mode: TriggerMode::AnyIncrease,
            phase2_enabled: true,
            qp: QpSettings::default(),
        }
    }
}

impl PsSqpConfig {
    /// Plain full-step SQP: one shot, no Phase 2.
    pub fn baseline(mut self) -> Self {
        self.m = 1;
        self.phase2_enabled = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.m < 1 {
            return bad("m must be at least 1");
        }
        if !(self.delta > 0.0) {
            return bad("delta must be positive");
        }
        if !(self.gamma > 0.0) {
            return bad("gamma must be positive");
        }
        if self.max_outer_iters < 1 {
            return bad("max_outer_iters must be at least 1");
        }
        if !(self.shot_scale > 0.0) {
            return bad("shot_scale must be positive");
        }
        if !(self.eq_tol >= 0.0) || !(self.cyc_tol >= 0.0) {
            return bad("trigger tolerances must be non-negative");
        }
        if !(self.qp.tol > 0.0) || self.qp.max_iter < 1 {
            return bad("QP tolerance and iteration budget must be positive");
        }
        Ok(())
    }
}

/// One worker's view of the current iteration.
#[derive(Debug, Clone)]
pub struct ShotState {
    pub traj: Trajectory,
    /// Step from the latest QP, zero until one has been solved.
    pub last_dz: DVector<f64>,
    pub lambda: DVector<f64>,
    /// Residual error of the latest QP, `∞` when the shot failed.
    pub err: f64,
    pub prev_err: f64,
    /// Step of the previous iteration. `None` for a shot that was just
    /// created, which then takes no part in the increase and cycle triggers.
    pub prev_dz: Option<DVector<f64>>,
    pub failed: bool,
    warm: Option<QpSolution>,
}

impl ShotState {
    pub fn new(traj: Trajectory, delta: f64) -> Self {
        let p = traj.dims().decision_len();
        Self {
            traj,
            last_dz: DVector::zeros(p),
            lambda: DVector::zeros(0),
            err: f64::INFINITY,
            prev_err: 2.0 * delta,
            prev_dz: None,
            failed: false,
            warm: None,
        }
    }

    /// Builds and solves the QP at the current trajectory, rotating the
    /// previous error and step into `prev_*`.
    fn iterate<P: NlpProblem + ?Sized>(&mut self, problem: &P, x_now: &[f64], cfg: &PsSqpConfig) {
        let had_step = !self.failed && self.err.is_finite();
        if had_step {
            self.prev_err = self.err;
        }
        self.prev_dz = had_step.then(|| self.last_dz.clone());
        let outcome = build_qp(problem, &self.traj, x_now).ok().and_then(|data| {
            let qp = stack(&data);
            let sol = QpSolver::new(cfg.qp).solve(&qp, self.warm.as_ref());
            sol.is_optimal().then(|| {
                let err = residual_error(&data, &sol, cfg.gamma);
                (sol, err)
            })
        });
        match outcome {
            Some((sol, err)) if err.is_finite() => {
                self.last_dz = sol.dz.clone();
                self.lambda = sol.lambda.clone();
                self.err = err;
                self.failed = false;
                self.warm = Some(sol);
            }
            _ => {
                self.last_dz.fill(0.0);
                self.err = f64::INFINITY;
                self.failed = true;
                self.warm = None;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    IterLimit,
    AllShotsFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    /// Linearization point of the best shot in the last batch. On
    /// convergence its QP step certifies it as a KKT point.
    pub solution: Trajectory,
    /// Number of QP batches solved.
    pub outer_iters: usize,
    pub phase2_entered_at: Option<usize>,
    /// `per_iter_errors[t][j]`, with `∞` for failed shots.
    pub per_iter_errors: Vec<Vec<f64>>,
    pub best_index_history: Vec<usize>,
    /// Whether iteration `t` ran in Phase 2.
    pub phase_history: Vec<bool>,
    /// Shots created during iteration `t` to replace failed ones (random
    /// shots generated before the loop are not counted).
    pub regenerated: Vec<usize>,
    pub status: SolveStatus,
}

impl SolveReport {
    pub fn final_error(&self) -> f64 {
        self.per_iter_errors
            .last()
            .map_or(f64::INFINITY, |e| e.iter().copied().fold(f64::INFINITY, f64::min))
    }

    pub fn best_index(&self) -> usize {
        self.best_index_history.last().copied().unwrap_or(0)
    }
}

/// Orthogonal projector onto the kernel of a constraint matrix, built from a
/// column-pivoted QR of its transpose so no pseudo-inverse is formed.
#[derive(Debug, Clone)]
pub struct NullSpaceProjector {
    /// Orthonormal basis of the row space.
    range: DMatrix<f64>,
}

impl NullSpaceProjector {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let at = a.to_dense().transpose();
        let (p, rows) = at.shape();
        if rows == 0 {
            return Ok(Self { range: DMatrix::zeros(p, 0) });
        }
        if at.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShotGen("constraint matrix is not finite".into()));
        }
        let qr = at.col_piv_qr();
        let r = qr.r();
        let k = r.nrows();
        let lead = r[(0, 0)].abs();
        let tol = (p.max(rows) as f64) * f64::EPSILON * lead;
        let rank = (0..k).take_while(|&i| r[(i, i)].abs() > tol).count();
        if rank == 0 && lead > 0.0 {
            return Err(Error::ShotGen("rank detection failed".into()));
        }
        let q = qr.q();
        Ok(Self {
            range: q.columns(0, rank).into_owned(),
        })
    }

    pub fn rank(&self) -> usize {
        self.range.ncols()
    }

    /// `ω − Q Qᵀ ω`
    pub fn apply(&self, omega: &DVector<f64>) -> DVector<f64> {
        omega - &self.range * (self.range.transpose() * omega)
    }
}

/// `base + (I − 𝓐†𝓐)ω` with `𝓐` taken from `qp`.
pub fn nullspace_shot(base: &Trajectory, qp: &QpData, omega: &DVector<f64>) -> Result<Trajectory> {
    let projector = NullSpaceProjector::new(&stack(qp).aeq)?;
    Ok(base.stepped(&projector.apply(omega), 1.0))
}

/// Rolls out `base`'s inputs plus `input_offsets` from `x_now`.
pub fn rollout_shot<P: NlpProblem + ?Sized>(
    problem: &P,
    x_now: &[f64],
    base: &Trajectory,
    input_offsets: &[f64],
) -> Result<Trajectory> {
    let mut inputs = inputs_of(base);
    if inputs.len() != input_offsets.len() {
        return Err(Error::InvalidDims(format!(
            "expected {} input offsets, got {}",
            inputs.len(),
            input_offsets.len()
        )));
    }
    for (u, d) in inputs.iter_mut().zip(input_offsets) {
        *u += d;
    }
    rollout(problem, x_now, &inputs)
}

/// `‖[𝒬Δz; λ∘s; γr]‖₂` with `s` and `r` from the linearization point.
pub fn residual_error(qp: &QpData, sol: &QpSolution, gamma: f64) -> f64 {
    let qdz = qp.hessian_mul(&sol.dz);
    let s = qp.ineq_stack();
    let r = qp.residual();
    let comp = sol.lambda.iter().zip(s.iter()).map(|(l, s)| (l * s).powi(2));
    let sum = qdz.norm_squared() + comp.sum::<f64>() + gamma * gamma * r.norm_squared();
    sum.sqrt()
}

/// `‖[𝒬Δz; 𝓐Δz; λ∘𝓜Δz]‖∞`: how far the step is from vanishing.
pub fn check_step_kkt(qp: &QpData, sol: &QpSolution) -> f64 {
    let stacked = stack(qp);
    let qdz = qp.hessian_mul(&sol.dz);
    let adz = stacked.aeq.mul_vec(&sol.dz);
    let mdz = stacked.aineq.mul_vec(&sol.dz);
    let comp = sol.lambda.iter().zip(mdz.iter()).map(|(l, v)| (l * v).abs());
    qdz.iter()
        .chain(adz.iter())
        .map(|v| v.abs())
        .chain(comp)
        .fold(0.0, f64::max)
}

/// Whether Phase 2 should start after iteration `t`. Failed shots and shots
/// created this iteration are ignored by the tests that look back in time;
/// the "all equal" test needs at least two live shots.
pub fn phase2_trigger(states: &[ShotState], t: usize, cfg: &PsSqpConfig) -> bool {
    let live: Vec<&ShotState> = states.iter().filter(|s| !s.failed).collect();
    let seasoned: Vec<&ShotState> = live.iter().copied().filter(|s| s.prev_dz.is_some()).collect();

    if t >= 1 && !seasoned.is_empty() {
        let rises = seasoned.iter().map(|s| s.err - s.prev_err);
        let increased = match cfg.trigger_mode {
            TriggerMode::AnyIncrease => rises.fold(f64::NEG_INFINITY, f64::max) > 0.0,
            TriggerMode::AllIncrease => rises.fold(f64::INFINITY, f64::min) > 0.0,
        };
        if increased {
            return true;
        }
    }

    if live.len() >= 2 {
        let z1 = live[0].traj.as_vector();
        let bound = cfg.eq_tol * (1.0 + z1.amax());
        let spread = live
            .iter()
            .enumerate()
            .flat_map(|(a, sa)| live[a + 1..].iter().map(move |sb| (sa.traj.as_vector() - sb.traj.as_vector()).amax()))
            .fold(0.0, f64::max);
        if spread <= bound {
            return true;
        }
    }

    t >= 1
        && !seasoned.is_empty()
        && seasoned.len() == live.len()
        && seasoned
            .iter()
            .all(|s| (s.prev_dz.as_ref().unwrap() + &s.last_dz).amax() <= cfg.cyc_tol)
}

/// Index of the smallest error among live shots, lowest index on ties.
pub fn select_best(states: &[ShotState]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (j, s) in states.iter().enumerate() {
        if s.failed {
            continue;
        }
        if best.is_none_or(|b| s.err < states[b].err) {
            best = Some(j);
        }
    }
    best.ok_or(Error::AllShotsFailed)
}

/// `best.traj + (j/m)·best.last_dz` for `j = 1..=m`.
pub fn distribute_steps(best: &ShotState, m: usize) -> Vec<Trajectory> {
    (1..=m)
        .map(|j| best.traj.stepped(&best.last_dz, j as f64 / m as f64))
        .collect()
}

fn random_nullspace_shot(
    base: &Trajectory,
    projector: &NullSpaceProjector,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> Option<Trajectory> {
    let p = base.dims().decision_len();
    let omega = DVector::from_fn(p, |_, _| rng.random_range(-1.0..=1.0));
    let eps = projector.apply(&omega);
    let norm = eps.amax();
    if !(norm > 0.0) {
        return None;
    }
    Some(base.stepped(&eps, scale / norm))
}

fn random_rollout_shot<P: NlpProblem + ?Sized>(
    problem: &P,
    x_now: &[f64],
    base: &Trajectory,
    shot_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Option<Trajectory> {
    let inputs = inputs_of(base);
    let size = shot_scale * (1.0 + inputs.iter().fold(0.0f64, |m, u| m.max(u.abs())));
    let offsets: Vec<f64> = inputs.iter().map(|_| size * rng.random_range(-1.0..=1.0)).collect();
    rollout_shot(problem, x_now, base, &offsets).ok()
}

/// Solves one NMPC problem with parallel shooting SQP.
pub fn ps_sqp_solve<P: NlpProblem + ?Sized>(
    problem: &P,
    x_now: &[f64],
    init: &Trajectory,
    cfg: &PsSqpConfig,
) -> Result<SolveReport> {
    cfg.validate()?;
    let dims = problem.dims();
    if init.dims() != dims || x_now.len() != dims.nx() {
        return Err(Error::InvalidDims("initial guess or state does not match the problem".into()));
    }
    if !init.is_finite() {
        return Err(Error::InvalidDims("initial guess is not finite".into()));
    }

    let m = cfg.m;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scale = cfg.shot_scale * (1.0 + init.max_abs());

    let mut trajs = vec![init.clone()];
    if m > 1 {
        let projector = match cfg.shot_method {
            ShotMethod::NullSpace => build_qp(problem, init, x_now)
                .and_then(|qp| NullSpaceProjector::new(&stack(&qp).aeq))
                .ok(),
            ShotMethod::InputRollout => None,
        };
        for _ in 1..m {
            let shot = match &projector {
                Some(proj) => random_nullspace_shot(init, proj, scale, &mut rng),
                None => None,
            }
            .or_else(|| random_rollout_shot(problem, x_now, init, cfg.shot_scale, &mut rng))
            .unwrap_or_else(|| init.clone());
            trajs.push(shot);
        }
    }
    let mut shots: Vec<ShotState> = trajs.into_iter().map(|z| ShotState::new(z, cfg.delta)).collect();

    let mut report = SolveReport {
        solution: init.clone(),
        outer_iters: 0,
        phase2_entered_at: None,
        per_iter_errors: Vec::new(),
        best_index_history: Vec::new(),
        phase_history: Vec::new(),
        regenerated: Vec::new(),
        status: SolveStatus::IterLimit,
    };
    let mut phase2 = false;

    for t in 0..cfg.max_outer_iters {
        shots.par_iter_mut().for_each(|s| s.iterate(problem, x_now, cfg));
        report.outer_iters = t + 1;
        report.per_iter_errors.push(shots.iter().map(|s| s.err).collect());
        report.phase_history.push(phase2);

        let best = match select_best(&shots) {
            Ok(b) => b,
            Err(_) => {
                report.status = SolveStatus::AllShotsFailed;
                report.regenerated.push(0);
                return Ok(report);
            }
        };
        report.best_index_history.push(best);
        report.solution = shots[best].traj.clone();

        if shots[best].err < cfg.delta {
            report.status = SolveStatus::Converged;
            report.regenerated.push(0);
            return Ok(report);
        }

        if !phase2 && cfg.phase2_enabled && phase2_trigger(&shots, t, cfg) {
            phase2 = true;
            report.phase2_entered_at = Some(t);
        }

        let mut fresh = 0;
        if phase2 {
            let next = distribute_steps(&shots[best], m);
            let warm = shots[best].warm.clone();
            for (s, z) in shots.iter_mut().zip(next) {
                s.traj = z;
                s.warm = warm.clone();
            }
        } else {
            for s in shots.iter_mut() {
                if s.failed {
                    let z = random_rollout_shot(problem, x_now, init, cfg.shot_scale, &mut rng)
                        .unwrap_or_else(|| init.clone());
                    *s = ShotState::new(z, cfg.delta);
                    fresh += 1;
                } else {
                    s.traj = s.traj.stepped(&s.last_dz, 1.0);
                }
            }
        }
        report.regenerated.push(fresh);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp::toy::Scalar;
    use crate::nlp::Dims;

    fn state(dims: Dims, err: f64, failed: bool) -> ShotState {
        let mut s = ShotState::new(Trajectory::zeros(dims), 0.5);
        s.err = err;
        s.failed = failed;
        s
    }

    fn sol(dz: Vec<f64>, lambda: Vec<f64>) -> QpSolution {
        QpSolution {
            dz: DVector::from_vec(dz),
            lambda: DVector::from_vec(lambda),
            mu: DVector::zeros(0),
            status: crate::qp::QpStatus::Optimal,
            kkt_norm: 0.0,
            iterations: 0,
            active_set: vec![],
        }
    }

    fn toy_qp(horizon: usize, x_now: f64, u: f64) -> (Scalar, Trajectory, QpData) {
        let mut p = Scalar::integrator(horizon);
        p.u_max = Some(1.0);
        let z = rollout(&p, &[x_now], &vec![u; horizon]).unwrap();
        let qp = build_qp(&p, &z, &[x_now]).unwrap();
        (p, z, qp)
    }

    #[test]
    fn select_best_examples() {
        let d = Dims::new(1, 1, 2).unwrap();
        let s = [state(d, 3.0, false), state(d, 1.0, false), state(d, 2.0, false)];
        assert_eq!(select_best(&s).unwrap(), 1);
        let s = [state(d, 1.0, false), state(d, 1.0, false)];
        assert_eq!(select_best(&s).unwrap(), 0);
        let s = [state(d, f64::INFINITY, true), state(d, 0.4, false)];
        assert_eq!(select_best(&s).unwrap(), 1);
        let s = [state(d, 0.1, true)];
        assert_eq!(select_best(&s), Err(Error::AllShotsFailed));
    }

    #[test]
    fn residual_error_examples() {
        let (_, _, mut qp) = toy_qp(2, 0.0, 0.0);
        let p = qp.dims.decision_len();
        let n_in = qp.n_ineq();
        assert_eq!(residual_error(&qp, &sol(vec![0.0; p], vec![0.0; n_in]), 1.0), 0.0);

        let mut lambda = vec![0.0; n_in];
        lambda[0] = 1.0;
        qp.ineq_values[0][0] = -2.0;
        qp.ineq_values[0][1] = -5.0;
        assert_eq!(residual_error(&qp, &sol(vec![0.0; p], lambda), 1.0), 2.0);

        let (_, _, mut qp) = toy_qp(2, 0.0, 0.0);
        qp.dyn_residual[1] = 0.3;
        let zero = sol(vec![0.0; p], vec![0.0; n_in]);
        let e1 = residual_error(&qp, &zero, 1.0);
        assert!((residual_error(&qp, &zero, 10.0) - 10.0 * e1).abs() < 1e-15);
    }

    #[test]
    fn zero_step_passes_step_check() {
        let (_, _, qp) = toy_qp(3, 0.4, 0.1);
        let s = sol(vec![0.0; qp.dims.decision_len()], vec![7.0; qp.n_ineq()]);
        assert_eq!(check_step_kkt(&qp, &s), 0.0);
    }

    #[test]
    fn trigger_examples() {
        let d = Dims::new(1, 1, 2).unwrap();
        let cfg = PsSqpConfig::default();
        let p = d.decision_len();

        let mut a = state(d, 0.5, false);
        let mut b = state(d, 1.2, false);
        a.prev_err = 1.0;
        b.prev_err = 1.0;
        a.prev_dz = Some(DVector::from_element(p, 1.0));
        b.prev_dz = Some(DVector::from_element(p, 1.0));
        b.traj = b.traj.stepped(&DVector::from_element(p, 1.0), 1.0);
        assert!(phase2_trigger(&[a.clone(), b.clone()], 1, &cfg));
        let all = PsSqpConfig {
            trigger_mode: TriggerMode::AllIncrease,
            ..cfg.clone()
        };
        assert!(!phase2_trigger(&[a.clone(), b.clone()], 1, &all));

        let same = [state(d, 1.0, false), state(d, 2.0, false)];
        assert!(phase2_trigger(&same, 0, &cfg));

        let v = DVector::from_fn(p, |i, _| i as f64 + 1.0);
        let mut c = state(d, 1.0, false);
        c.prev_err = 1.0;
        c.prev_dz = Some(v.clone());
        c.last_dz = -v;
        assert!(phase2_trigger(&[c.clone()], 1, &cfg));
        assert!(!phase2_trigger(&[c], 0, &cfg));
    }

    #[test]
    fn distribute_steps_fractions() {
        let d = Dims::new(1, 1, 2).unwrap();
        let mut s = state(d, 1.0, false);
        s.last_dz = DVector::from_element(d.decision_len(), 1.0);
        let out = distribute_steps(&s, 4);
        let alphas: Vec<f64> = out.iter().map(|z| z.as_vector()[0]).collect();
        assert_eq!(alphas, vec![0.25, 0.5, 0.75, 1.0]);
        assert_eq!(distribute_steps(&s, 1)[0].as_vector()[0], 1.0);
        s.last_dz.fill(0.0);
        assert!(distribute_steps(&s, 3).iter().all(|z| *z == s.traj));
    }

    #[test]
    fn projector_annihilates_row_space() {
        let (_, z, qp) = toy_qp(4, 0.2, 0.3);
        let a = stack(&qp).aeq;
        let proj = NullSpaceProjector::new(&a).unwrap();
        assert_eq!(proj.rank(), a.nrows());
        let zero = DVector::zeros(z.dims().decision_len());
        assert_eq!(nullspace_shot(&z, &qp, &zero).unwrap(), z);
        let y = DVector::from_fn(a.nrows(), |i, _| (i as f64).cos());
        let omega = a.tr_mul_vec(&y);
        assert!(proj.apply(&omega).amax() < 1e-12);
        let omega = DVector::from_fn(z.dims().decision_len(), |i, _| (i as f64 * 0.7).sin());
        let eps = proj.apply(&omega);
        assert!(a.mul_vec(&eps).amax() <= 1e-8 * (1.0 + omega.amax()));
    }

    #[test]
    fn rollout_shot_of_integrator() {
        let p = Scalar::integrator(3);
        let base = rollout(&p, &[0.0], &[0.0; 3]).unwrap();
        let shot = rollout_shot(&p, &[0.0], &base, &[1.0; 3]).unwrap();
        let states: Vec<f64> = (0..=3).map(|i| shot.state(i)[0]).collect();
        assert_eq!(states, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(rollout_shot(&p, &[0.0], &base, &[0.0; 3]).unwrap(), base);
    }

    #[test]
    fn lq_problem_converges_in_two_iterations() {
        let p = Scalar::integrator(10);
        let init = Trajectory::zeros(p.dims);
        let cfg = PsSqpConfig {
            delta: 1e-8,
            ..PsSqpConfig::default()
        };
        let report = ps_sqp_solve(&p, &[1.0], &init, &cfg).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        assert_eq!(report.outer_iters, 2);
        assert!(report.final_error() < 1e-8);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let p = Scalar::integrator(3);
        let init = Trajectory::zeros(p.dims);
        for cfg in [
            PsSqpConfig { m: 0, ..PsSqpConfig::default() },
            PsSqpConfig { delta: 0.0, ..PsSqpConfig::default() },
            PsSqpConfig { gamma: -1.0, ..PsSqpConfig::default() },
        ] {
            assert!(matches!(ps_sqp_solve(&p, &[0.0], &init, &cfg), Err(Error::InvalidConfig(_))));
        }
    }
}
