//! Small water distribution network: a source reservoir H1, two storage
//! tanks H5 and H6, two pumps and three junctions.
//!
//! ```text
//!  H1 ──P1(u1)──> J2 ──q1──> H5 <──q4── J3 <──q3── J4 <──q2── H6
//!                  └──P2(u2)──────────────────────────────────> H6
//!                                        d2 ↓        d1 ↓
//! ```
//!
//! Units: heads in m, flows in L/s, time in s, tank areas in m², density in
//! kg/L. Every numeric default below is a modelling choice for this instance.
//!
//! Stage block layout (12 values):
//! `[h1, h5, h6 | u1, u2 | q1, q2, q3, q4 | h2, h3, h4]`, states first. The
//! junction heads and pipe flows are algebraic inputs tied down by seven
//! equality rows per stage:
//!
//! ```text
//! 0 = G_q q + G_u u + G_d d        (flow balance at J2, J4, J3)
//! 0 = F_h [h; h_j] + c∘q∘|q|       (head loss along q1..q4)
//! ```

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::nlp::{ConstraintEval, CostDerivatives, Dims, NlpProblem, Trajectory};

pub const H1: usize = 0;
pub const H5: usize = 1;
pub const H6: usize = 2;
pub const U1: usize = 3;
pub const U2: usize = 4;
pub const Q1: usize = 5;
pub const J2: usize = 9;
pub const J3: usize = 10;
pub const J4: usize = 11;
const WIDTH: usize = 12;
const N_ALG: usize = 7;

/// Heads raised by each pump: `(upstream, downstream)` block indices.
const PUMP_HEADS: [(usize, usize); 2] = [(H1, J2), (J2, H6)];

#[derive(Debug, Clone, PartialEq)]
pub struct WdnSpec {
    /// s
    pub ts: f64,
    pub horizon: usize,
    /// Surface areas of H1, H5, H6.
    pub tank_areas: [f64; 3],
    /// Head-loss coefficients of q1..q4, m/(L/s)².
    pub pipe_coeffs: [f64; 4],
    /// Maximum head of each pump.
    pub pump_max_head: [f64; 2],
    /// Pump curve `Δh ≤ Δh_max − a·u²`.
    pub pump_curve: [f64; 2],
    pub pump_max_flow: [f64; 2],
    /// `(min, max)` heads of H5 and H6.
    pub level_bounds: [(f64, f64); 2],
    pub level_reference: [f64; 2],
    pub level_weight: f64,
    pub terminal_level_weight: f64,
    /// kg/L
    pub density: f64,
    pub gravity: f64,
    /// Mean demand at J4 and J3.
    pub demand_mean: [f64; 2],
    /// Relative amplitude of the daily demand cycle.
    pub demand_swing: f64,
    /// Hour of peak demand.
    pub demand_peak_hour: f64,
    pub tariff_night: f64,
    pub tariff_day: f64,
    /// Day tariff applies on `[start, end)` hours.
    pub day_hours: (f64, f64),
    /// Relative size of the realized-vs-predicted demand mismatch.
    pub demand_mismatch: f64,
}

impl Default for WdnSpec {
    fn default() -> Self {
        Self {
            ts: 3600.0,
            horizon: 24,
            tank_areas: [1.0e4, 400.0, 300.0],
            pipe_coeffs: [0.002, 0.025, 0.02, 0.01],
            pump_max_head: [40.0, 30.0],
            pump_curve: [0.005, 0.008],
            pump_max_flow: [60.0, 40.0],
            level_bounds: [(26.0, 30.0), (41.0, 45.0)],
            level_reference: [28.0, 43.0],
            level_weight: 1.0,
            terminal_level_weight: 10.0,
            density: 1.0,
            gravity: 9.81,
            demand_mean: [12.0, 8.0],
            demand_swing: 0.5,
            demand_peak_hour: 13.0,
            tariff_night: 0.1,
            tariff_day: 0.25,
            day_hours: (7.0, 23.0),
            demand_mismatch: 0.05,
        }
    }
}

/// Matrices of the network equations, tank state `h = [h1, h5, h6]`,
/// junction heads `[h2, h3, h4]`, pump flows `u`, pipe flows `q`, demands `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkMatrices {
    /// 3×4, head change per unit pipe flow over one sample.
    pub a_q: DMatrix<f64>,
    /// 3×2
    pub b_q: DMatrix<f64>,
    /// 3×4
    pub g_q: DMatrix<f64>,
    /// 3×2
    pub g_u: DMatrix<f64>,
    /// 3×2
    pub g_d: DMatrix<f64>,
    /// 4×6 acting on `[h1, h5, h6, h2, h3, h4]`
    pub f_h: DMatrix<f64>,
}

/// Flows and junction heads that satisfy the network equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hydraulics {
    pub q: [f64; 4],
    /// `[h2, h3, h4]`
    pub junction_heads: [f64; 3],
}

impl WdnSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.ts, self.density, self.gravity, self.level_weight]
            .iter()
            .chain(&self.tank_areas)
            .chain(&self.pipe_coeffs)
            .chain(&self.pump_max_head)
            .chain(&self.pump_max_flow)
            .all(|v| v.is_finite() && *v > 0.0);
        let bounds_ok = self.level_bounds.iter().all(|(lo, hi)| lo < hi);
        if !positive || !bounds_ok || self.pump_curve.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::InvalidConfig("invalid water network parameters".into()));
        }
        if self.horizon < 2 {
            return Err(Error::InvalidConfig("horizon must be at least 2".into()));
        }
        Ok(())
    }

    pub fn matrices(&self) -> NetworkMatrices {
        let k = self.tank_areas.map(|a| self.ts / (1000.0 * a));
        NetworkMatrices {
            a_q: DMatrix::from_row_slice(3, 4, &[0.0, 0.0, 0.0, 0.0, k[1], 0.0, 0.0, k[1], 0.0, -k[2], 0.0, 0.0]),
            b_q: DMatrix::from_row_slice(3, 2, &[-k[0], 0.0, 0.0, 0.0, 0.0, k[2]]),
            g_q: DMatrix::from_row_slice(3, 4, &[-1.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, 1.0, -1.0]),
            g_u: DMatrix::from_row_slice(3, 2, &[1.0, -1.0, 0.0, 0.0, 0.0, 0.0]),
            g_d: DMatrix::from_row_slice(3, 2, &[0.0, 0.0, -1.0, 0.0, 0.0, -1.0]),
            #[rustfmt::skip]
            f_h: DMatrix::from_row_slice(4, 6, &[
                0.0, 1.0, 0.0, -1.0, 0.0, 0.0,
                0.0, 0.0, -1.0, 0.0, 0.0, 1.0,
                0.0, 0.0, 0.0, 0.0, 1.0, -1.0,
                0.0, 1.0, 0.0, 0.0, -1.0, 0.0,
            ]),
        }
    }

    /// Predicted demand at J4 and J3 at hour `t`.
    pub fn demand(&self, t: f64) -> [f64; 2] {
        let phase = 2.0 * PI * (t - self.demand_peak_hour + 6.0) / 24.0;
        self.demand_mean.map(|d| d * (1.0 + self.demand_swing * phase.sin()))
    }

    /// Demand the plant actually sees: the prediction perturbed by a daily
    /// sinusoid of relative size `demand_mismatch` and the given phase.
    pub fn realized_demand(&self, t: f64, phase: f64) -> [f64; 2] {
        let f = 1.0 + self.demand_mismatch * (2.0 * PI * t / 24.0 + phase).sin();
        self.demand(t).map(|d| d * f)
    }

    pub fn tariff(&self, t: f64) -> f64 {
        let hour = t.rem_euclid(24.0);
        if hour >= self.day_hours.0 && hour < self.day_hours.1 {
            self.tariff_day
        } else {
            self.tariff_night
        }
    }

    /// Pump cost weight `(ρ g ε / 850)²`.
    pub fn energy_weight(&self, tariff: f64) -> f64 {
        (self.density * self.gravity * tariff / 850.0).powi(2)
    }

    /// Solves the network equations for given tank heads, pump flows and
    /// demands. The balance rows fix every flow in terms of `q2`, and the
    /// head loss along H6 → J4 → J3 → H5 is monotone in `q2`.
    pub fn solve_hydraulics(&self, h: &[f64], u: [f64; 2], d: [f64; 2]) -> Result<Hydraulics> {
        let c = self.pipe_coeffs;
        let drop = h[H6] - h[H5];
        let loss = |q2: f64| {
            let (q3, q4) = (q2 - d[0], q2 - d[0] - d[1]);
            c[1] * q2 * q2.abs() + c[2] * q3 * q3.abs() + c[3] * q4 * q4.abs() - drop
        };
        let mut lo = -1.0;
        let mut hi = 1.0;
        while loss(lo) > 0.0 {
            lo *= 2.0;
            if lo < -1e12 {
                return Err(Error::Integration("no hydraulic solution".into()));
            }
        }
        while loss(hi) < 0.0 {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::Integration("no hydraulic solution".into()));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if loss(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let q2 = 0.5 * (lo + hi);
        let q = [u[0] - u[1], q2, q2 - d[0], q2 - d[0] - d[1]];
        let h2 = h[H5] + c[0] * q[0] * q[0].abs();
        let h4 = h[H6] - c[1] * q[1] * q[1].abs();
        let h3 = h4 - c[2] * q[2] * q[2].abs();
        Ok(Hydraulics {
            q,
            junction_heads: [h2, h3, h4],
        })
    }

    /// One plant sample: hydraulics for the realized demand, then the tank
    /// update.
    pub fn plant_step(&self, h: &[f64], u: [f64; 2], d: [f64; 2]) -> Result<[f64; 3]> {
        let hyd = self.solve_hydraulics(h, u, d)?;
        let mats = self.matrices();
        let dh = &mats.a_q * DVector::from_column_slice(&hyd.q) + &mats.b_q * DVector::from_column_slice(&u);
        Ok([h[0] + dh[0], h[1] + dh[1], h[2] + dh[2]])
    }

    /// Stored volume in H5 and H6 above the datum, m³.
    pub fn storage_volume(&self, h: &[f64]) -> f64 {
        self.tank_areas[1] * h[H5] + self.tank_areas[2] * h[H6]
    }
}

/// Steady flow through a single pipe with head loss `c·q·|q| = Δh`.
pub fn pipe_flow(c: f64, dh: f64) -> f64 {
    dh.signum() * (dh.abs() / c).sqrt()
}

/// NMPC problem over the day starting at hour `start_hour`.
#[derive(Debug, Clone)]
pub struct WdnProblem {
    pub spec: WdnSpec,
    pub start_hour: f64,
    mats: NetworkMatrices,
    demand: Vec<[f64; 2]>,
    weight: Vec<f64>,
    dims: Dims,
}

pub fn build_wdn_problem(spec: WdnSpec, start_hour: f64) -> Result<WdnProblem> {
    spec.validate()?;
    let dims = Dims::new(3, 9, spec.horizon)?;
    let hours: Vec<f64> = (0..spec.horizon).map(|i| start_hour + i as f64 * spec.ts / 3600.0).collect();
    Ok(WdnProblem {
        mats: spec.matrices(),
        demand: hours.iter().map(|&t| spec.demand(t)).collect(),
        weight: hours.iter().map(|&t| spec.energy_weight(spec.tariff(t))).collect(),
        spec,
        start_hour,
        dims,
    })
}

impl WdnProblem {
    pub fn predicted_demand(&self, stage: usize) -> [f64; 2] {
        self.demand[stage]
    }

    /// Pump cost of a stage block with its gradient and Hessian.
    pub fn pump_cost(&self, stage: usize, z: &[f64]) -> (f64, CostDerivatives) {
        let kappa = self.weight[stage];
        let mut cost = 0.0;
        let mut g = DVector::zeros(WIDTH);
        let mut h = DMatrix::zeros(WIDTH, WIDTH);
        for (p, &(up, down)) in PUMP_HEADS.iter().enumerate() {
            let ui = U1 + p;
            let u = z[ui];
            let dh = z[down] - z[up];
            let m2 = 3.0 * self.spec.pump_max_head[p].powi(2);
            cost += kappa * (dh * dh + m2) * u * u;
            let g_d = 2.0 * kappa * dh * u * u;
            let g_u = 2.0 * kappa * (dh * dh + m2) * u;
            let h_dd = 2.0 * kappa * u * u;
            let h_du = 4.0 * kappa * dh * u;
            let h_uu = 2.0 * kappa * (dh * dh + m2);
            let sides = [(down, 1.0), (up, -1.0)];
            for &(a, sa) in &sides {
                g[a] += sa * g_d;
                h[(a, ui)] += sa * h_du;
                h[(ui, a)] += sa * h_du;
                for &(b, sb) in &sides {
                    h[(a, b)] += sa * sb * h_dd;
                }
            }
            g[ui] += g_u;
            h[(ui, ui)] += h_uu;
        }
        (cost, CostDerivatives { gradient: g, hessian: h })
    }

    fn level_cost(&self, weight: f64, x: &[f64], width: usize) -> (f64, CostDerivatives) {
        let r = self.spec.level_reference;
        let mut g = DVector::zeros(width);
        let mut h = DMatrix::zeros(width, width);
        let mut cost = 0.0;
        for (k, idx) in [H5, H6].into_iter().enumerate() {
            let d = x[idx] - r[k];
            cost += 0.5 * weight * d * d;
            g[idx] = weight * d;
            h[(idx, idx)] = weight;
        }
        (cost, CostDerivatives { gradient: g, hessian: h })
    }

    fn level_rows(&self, x: &[f64], width: usize, rows: &mut Vec<(DVector<f64>, f64)>) {
        for (k, idx) in [H5, H6].into_iter().enumerate() {
            let (lo, hi) = self.spec.level_bounds[k];
            let mut up = DVector::zeros(width);
            up[idx] = 1.0;
            rows.push((up.clone(), x[idx] - hi));
            rows.push((-up, lo - x[idx]));
        }
    }

    /// Trajectory holding the pump flows at `u`, with flows and junction
    /// heads solved from the network equations at every stage.
    pub fn consistent_guess(&self, h0: &[f64], u: [f64; 2]) -> Result<Trajectory> {
        let mut traj = Trajectory::zeros(self.dims);
        traj.set_state(0, h0);
        for i in 0..self.dims.horizon() {
            let h = traj.state(i).to_vec();
            let hyd = self.spec.solve_hydraulics(&h, u, self.demand[i])?;
            let mut input = vec![u[0], u[1]];
            input.extend_from_slice(&hyd.q);
            input.extend_from_slice(&hyd.junction_heads);
            traj.set_input(i, &input);
            let next = self.dynamics(i, traj.stage(i))?;
            traj.set_state(i + 1, next.as_slice());
        }
        Ok(traj)
    }
}

fn rows_to_eval(rows: Vec<(DVector<f64>, f64)>, width: usize) -> ConstraintEval {
    let mut jac = DMatrix::zeros(rows.len(), width);
    let mut value = DVector::zeros(rows.len());
    for (k, (grad, v)) in rows.into_iter().enumerate() {
        jac.set_row(k, &grad.transpose());
        value[k] = v;
    }
    ConstraintEval { value, jacobian: jac }
}

impl NlpProblem for WdnProblem {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn stage_cost(&self, stage: usize, z: &[f64]) -> f64 {
        self.pump_cost(stage, z).0 + self.level_cost(self.spec.level_weight, z, WIDTH).0
    }

    fn terminal_cost(&self, x: &[f64]) -> f64 {
        self.level_cost(self.spec.terminal_level_weight, x, 3).0
    }

    fn stage_cost_derivatives(&self, stage: usize, z: &[f64]) -> CostDerivatives {
        let (_, pump) = self.pump_cost(stage, z);
        let (_, level) = self.level_cost(self.spec.level_weight, z, WIDTH);
        CostDerivatives {
            gradient: pump.gradient + level.gradient,
            hessian: pump.hessian + level.hessian,
        }
    }

    fn terminal_cost_derivatives(&self, x: &[f64]) -> CostDerivatives {
        self.level_cost(self.spec.terminal_level_weight, x, 3).1
    }

    fn dynamics(&self, _: usize, z: &[f64]) -> Result<DVector<f64>> {
        let h = DVector::from_column_slice(&z[..3]);
        let u = DVector::from_column_slice(&z[U1..U1 + 2]);
        let q = DVector::from_column_slice(&z[Q1..Q1 + 4]);
        Ok(h + &self.mats.a_q * q + &self.mats.b_q * u)
    }

    fn dynamics_jacobian(&self, _: usize, _: &[f64]) -> Result<DMatrix<f64>> {
        let mut jac = DMatrix::zeros(3, WIDTH);
        jac.view_mut((0, 0), (3, 3)).fill_with_identity();
        jac.view_mut((0, U1), (3, 2)).copy_from(&self.mats.b_q);
        jac.view_mut((0, Q1), (3, 4)).copy_from(&self.mats.a_q);
        Ok(jac)
    }

    fn stage_constraints(&self, stage: usize, z: &[f64]) -> ConstraintEval {
        let mut rows = Vec::with_capacity(10);
        if stage > 0 {
            self.level_rows(z, WIDTH, &mut rows);
        }
        for p in 0..2 {
            let ui = U1 + p;
            let mut e = DVector::zeros(WIDTH);
            e[ui] = 1.0;
            rows.push((e.clone(), z[ui] - self.spec.pump_max_flow[p]));
            rows.push((-e, -z[ui]));
        }
        for (p, &(up, down)) in PUMP_HEADS.iter().enumerate() {
            let ui = U1 + p;
            let a = self.spec.pump_curve[p];
            let mut grad = DVector::zeros(WIDTH);
            grad[down] += 1.0;
            grad[up] -= 1.0;
            grad[ui] += 2.0 * a * z[ui];
            let v = z[down] - z[up] - self.spec.pump_max_head[p] + a * z[ui] * z[ui];
            rows.push((grad, v));
        }
        rows_to_eval(rows, WIDTH)
    }

    fn terminal_constraints(&self, x: &[f64]) -> ConstraintEval {
        let mut rows = Vec::with_capacity(4);
        self.level_rows(x, 3, &mut rows);
        rows_to_eval(rows, 3)
    }

    fn stage_algebraic(&self, stage: usize, z: &[f64]) -> Option<ConstraintEval> {
        let m = &self.mats;
        let c = self.spec.pipe_coeffs;
        let u = DVector::from_column_slice(&z[U1..U1 + 2]);
        let q = DVector::from_column_slice(&z[Q1..Q1 + 4]);
        let d = DVector::from_column_slice(&self.demand[stage]);
        let heads = DVector::from_column_slice(&[z[H1], z[H5], z[H6], z[J2], z[J3], z[J4]]);
        let balance = &m.g_q * &q + &m.g_u * &u + &m.g_d * d;
        let phi = DVector::from_fn(4, |k, _| c[k] * q[k] * q[k].abs());
        let energy = &m.f_h * heads + phi;

        let mut jac = DMatrix::zeros(N_ALG, WIDTH);
        jac.view_mut((0, U1), (3, 2)).copy_from(&m.g_u);
        jac.view_mut((0, Q1), (3, 4)).copy_from(&m.g_q);
        let head_cols = [H1, H5, H6, J2, J3, J4];
        for r in 0..4 {
            for (k, &col) in head_cols.iter().enumerate() {
                jac[(3 + r, col)] = m.f_h[(r, k)];
            }
            jac[(3 + r, Q1 + r)] = 2.0 * c[r] * q[r].abs();
        }
        let mut value = DVector::zeros(N_ALG);
        value.rows_mut(0, 3).copy_from(&balance);
        value.rows_mut(3, 4).copy_from(&energy);
        Some(ConstraintEval { value, jacobian: jac })
    }
}
