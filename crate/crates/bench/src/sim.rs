//! Receding-horizon simulation: solve, apply the first input to the plant,
//! shift the solution forward, repeat.

use std::f64::consts::PI;
use std::time::Instant;

use log::{debug, warn};
use pssqp::models::{build_pendulum_problem, build_wdn_problem, integrate_plant};
use pssqp::nlp::{rollout, shift_warm_start, NlpProblem, Trajectory};
use pssqp::shoot::{ps_sqp_solve, PsSqpConfig, SolveReport, SolveStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Model, SimConfig};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    /// Time at the start of the sample, in the model's time unit.
    pub t: f64,
    /// Measured state the controller saw.
    pub state: Vec<f64>,
    /// Applied stage-0 input block.
    pub input: Vec<f64>,
    pub sqp_iters: usize,
    pub phase2: bool,
    pub best_shot: usize,
    pub wall_time: f64,
    pub converged: bool,
}

/// What the controller saw and returned at one sample.
pub struct Sample<'a> {
    pub k: usize,
    pub x_now: &'a [f64],
    pub problem: &'a dyn NlpProblem,
    pub report: &'a SolveReport,
    pub solver: &'a PsSqpConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub records: Vec<StepRecord>,
    /// State after the last sample.
    pub final_state: Vec<f64>,
    /// Samples whose solve did not converge.
    pub failures: usize,
}

/// Phase of the demand mismatch for a seed, in `[0, 2π)`.
pub fn demand_phase(seed: u64) -> f64 {
    ChaCha8Rng::seed_from_u64(seed).random_range(0.0..2.0 * PI)
}

/// Distance of a record's state from the model's reference. The pendulum
/// compares the whole state with `(0, 0, setpoint, 0)`; the water network
/// compares the H5 and H6 heads with their targets.
pub fn tracking_error(cfg: &SimConfig, record: &StepRecord) -> f64 {
    match cfg.model {
        Model::Pendulum => {
            let r = cfg.pendulum.reference(record.t);
            record.state.iter().zip(r).map(|(x, r)| (x - r).powi(2)).sum::<f64>().sqrt()
        }
        Model::Wdn => {
            let r = cfg.wdn.spec.level_reference;
            ((record.state[1] - r[0]).powi(2) + (record.state[2] - r[1]).powi(2)).sqrt()
        }
    }
}

pub fn run_closed_loop(cfg: &SimConfig) -> Result<SimRun> {
    run_closed_loop_with(cfg, |_| {})
}

/// Runs the closed loop and hands every solve to `observe`.
pub fn run_closed_loop_with(cfg: &SimConfig, mut observe: impl FnMut(&Sample<'_>)) -> Result<SimRun> {
    cfg.validate()?;
    let solver = cfg.effective_solver();
    match cfg.model {
        Model::Pendulum => run_pendulum(cfg, &solver, &mut observe),
        Model::Wdn => run_wdn(cfg, &solver, &mut observe),
    }
}

struct Step {
    report: SolveReport,
    wall_time: f64,
}

fn solve<P: NlpProblem>(problem: &P, x: &[f64], guess: &Trajectory, solver: &PsSqpConfig, timed: bool) -> Result<Step> {
    let start = Instant::now();
    let report = ps_sqp_solve(problem, x, guess, solver)?;
    let wall_time = if timed { start.elapsed().as_secs_f64() } else { 0.0 };
    Ok(Step { report, wall_time })
}

fn record(k: usize, t: f64, x: &[f64], input: &[f64], step: &Step) -> StepRecord {
    let r = &step.report;
    StepRecord {
        k,
        t,
        state: x.to_vec(),
        input: input.to_vec(),
        sqp_iters: r.outer_iters,
        phase2: r.phase2_entered_at.is_some(),
        best_shot: r.best_index(),
        wall_time: step.wall_time,
        converged: r.status == SolveStatus::Converged,
    }
}

/// Picks the trajectory to act on. A failed solve falls back to the guess.
fn accepted(step: &Step, guess: &Trajectory, k: usize) -> Trajectory {
    match step.report.status {
        SolveStatus::Converged => step.report.solution.clone(),
        SolveStatus::IterLimit => {
            warn!("sample {k}: iteration limit, applying best iterate");
            step.report.solution.clone()
        }
        SolveStatus::AllShotsFailed => {
            warn!("sample {k}: every QP failed, applying the warm start");
            guess.clone()
        }
    }
}

fn run_pendulum(cfg: &SimConfig, solver: &PsSqpConfig, observe: &mut dyn FnMut(&Sample<'_>)) -> Result<SimRun> {
    let setup = &cfg.pendulum;
    let ts = setup.params.ts;
    let mut problem = build_pendulum_problem(setup.params, setup.spec.clone(), setup.reference(0.0))?;
    let horizon = problem.dims().horizon();
    let mut x = setup.initial_state.to_vec();
    let mut guess = rollout(&problem, &x, &vec![0.0; horizon])?;
    let mut run = SimRun {
        records: Vec::with_capacity(cfg.n_samples()),
        final_state: x.clone(),
        failures: 0,
    };

    for k in 0..cfg.n_samples() {
        let t = k as f64 * ts;
        problem.set_reference(setup.reference(t));
        let step = solve(&problem, &x, &guess, solver, cfg.wall_time)?;
        observe(&Sample {
            k,
            x_now: &x,
            problem: &problem,
            report: &step.report,
            solver,
        });
        let plan = accepted(&step, &guess, k);
        let u = plan.input(0).to_vec();
        let rec = record(k, t, &x, &u, &step);
        debug!("k={k} iters={} phase2={} u={:.4}", rec.sqp_iters, rec.phase2, u[0]);
        if !rec.converged {
            run.failures += 1;
        }
        run.records.push(rec);

        x = integrate_plant(&setup.params, &x, u[0], ts)?;
        guess = shift_warm_start(&problem, &plan)?;
    }
    run.final_state = x;
    Ok(run)
}

fn run_wdn(cfg: &SimConfig, solver: &PsSqpConfig, observe: &mut dyn FnMut(&Sample<'_>)) -> Result<SimRun> {
    let spec = &cfg.wdn.spec;
    let dt_hours = spec.ts / 3600.0;
    let phase = demand_phase(solver.seed);
    let mut x = cfg.wdn.initial_heads.to_vec();
    let first = build_wdn_problem(spec.clone(), 0.0)?;
    let d0 = first.predicted_demand(0);
    let flow = d0[0] + d0[1];
    let mut guess = first.consistent_guess(&x, [flow, flow])?;
    let mut run = SimRun {
        records: Vec::with_capacity(cfg.n_samples()),
        final_state: x.clone(),
        failures: 0,
    };

    for k in 0..cfg.n_samples() {
        let t = k as f64 * dt_hours;
        let problem = build_wdn_problem(spec.clone(), t)?;
        let step = solve(&problem, &x, &guess, solver, cfg.wall_time)?;
        observe(&Sample {
            k,
            x_now: &x,
            problem: &problem,
            report: &step.report,
            solver,
        });
        let plan = accepted(&step, &guess, k);
        // The stage input block also carries the algebraic flows and heads.
        let input = plan.input(0)[..2].to_vec();
        let rec = record(k, t, &x, &input, &step);
        debug!("k={k} iters={} phase2={} u=({:.4}, {:.4})", rec.sqp_iters, rec.phase2, input[0], input[1]);
        if !rec.converged {
            run.failures += 1;
        }
        run.records.push(rec);

        let demand = spec.realized_demand(t, phase);
        x = spec.plant_step(&x, [input[0], input[1]], demand)?.to_vec();
        guess = shift_warm_start(&problem, &plan)?;
    }
    run.final_state = x;
    Ok(run)
}
