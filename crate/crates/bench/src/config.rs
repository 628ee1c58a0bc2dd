//! Plain-text `key = value` configuration.
//!
//! One key per line, `#` starts a comment, blank lines are ignored. `model`
//! is required; everything else has a default. Vector values are
//! comma-separated.

use std::path::{Path, PathBuf};

use pssqp::models::{PendulumParams, PendulumSpec, WdnSpec};
use pssqp::qp::KktBackend;
use pssqp::shoot::{PsSqpConfig, ShotMethod, TriggerMode};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Pendulum,
    Wdn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumSetup {
    pub params: PendulumParams,
    pub spec: PendulumSpec,
    /// Initial state, angle first. Hangs straight down by default.
    pub initial_state: [f64; 4],
    /// Cart setpoint magnitude, m.
    pub reference_amplitude: f64,
    /// Period of the square-wave setpoint, s.
    pub reference_period: f64,
}

impl Default for PendulumSetup {
    fn default() -> Self {
        Self {
            params: PendulumParams::default(),
            spec: PendulumSpec::default(),
            initial_state: [std::f64::consts::PI, 0.0, 0.0, 0.0],
            reference_amplitude: 3.0,
            reference_period: 5.0,
        }
    }
}

impl PendulumSetup {
    /// Cart setpoint at time `t`: `+A` during the first half of each period,
    /// `−A` during the second.
    pub fn setpoint(&self, t: f64) -> f64 {
        let phase = (t / self.reference_period).fract();
        if phase < 0.5 {
            self.reference_amplitude
        } else {
            -self.reference_amplitude
        }
    }

    pub fn reference(&self, t: f64) -> [f64; 4] {
        [0.0, 0.0, self.setpoint(t), 0.0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WdnSetup {
    pub spec: WdnSpec,
    /// Initial heads of H1, H5, H6.
    pub initial_heads: [f64; 3],
}

impl Default for WdnSetup {
    fn default() -> Self {
        Self {
            spec: WdnSpec::default(),
            initial_heads: [10.0, 28.0, 43.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: Model,
    /// Seconds for the pendulum, hours for the water network.
    pub sim_duration: f64,
    pub solver: PsSqpConfig,
    /// Forces a single shot without Phase 2.
    pub baseline: bool,
    pub output_path: Option<PathBuf>,
    pub log_level: String,
    /// Record wall-clock solve times. Off by default so output files are
    /// reproducible byte for byte.
    pub wall_time: bool,
    pub pendulum: PendulumSetup,
    pub wdn: WdnSetup,
}

impl SimConfig {
    /// Defaults for a model: δ = 0.5 and 10 s for the pendulum, δ = 10⁻⁴
    /// and 48 h for the water network.
    pub fn new(model: Model) -> Self {
        let (delta, duration) = match model {
            Model::Pendulum => (0.5, 10.0),
            Model::Wdn => (1e-4, 48.0),
        };
        Self {
            model,
            sim_duration: duration,
            solver: PsSqpConfig {
                delta,
                ..PsSqpConfig::default()
            },
            baseline: false,
            output_path: None,
            log_level: "warn".into(),
            wall_time: false,
            pendulum: PendulumSetup::default(),
            wdn: WdnSetup::default(),
        }
    }

    /// The solver settings actually used, with the baseline flag applied.
    pub fn effective_solver(&self) -> PsSqpConfig {
        if self.baseline {
            self.solver.clone().baseline()
        } else {
            self.solver.clone()
        }
    }

    /// Sampling period in the model's time unit.
    pub fn sample_time(&self) -> f64 {
        match self.model {
            Model::Pendulum => self.pendulum.params.ts,
            Model::Wdn => self.wdn.spec.ts / 3600.0,
        }
    }

    pub fn n_samples(&self) -> usize {
        (self.sim_duration / self.sample_time() + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(BenchError::Invalid(msg));
        if !(self.sim_duration >= 0.0) || !self.sim_duration.is_finite() {
            return invalid("sim_duration must be non-negative".into());
        }
        self.solver.validate().map_err(|e| BenchError::Invalid(e.to_string()))?;
        match self.model {
            Model::Pendulum => {
                self.pendulum.params.validate().map_err(|e| BenchError::Invalid(e.to_string()))?;
                if !(self.pendulum.reference_period > 0.0) {
                    return invalid("pendulum.ref_period must be positive".into());
                }
            }
            Model::Wdn => self.wdn.spec.validate().map_err(|e| BenchError::Invalid(e.to_string()))?,
        }
        Ok(())
    }
}

pub fn parse_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<SimConfig> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(BenchError::Parse {
                line,
                msg: format!("expected `key = value`, got `{content}`"),
            });
        };
        let key = key.trim().to_string();
        if entries.iter().any(|(_, k, _): &(usize, String, String)| *k == key) {
            return Err(BenchError::Parse {
                line,
                msg: format!("duplicate key `{key}`"),
            });
        }
        entries.push((line, key, value.trim().to_string()));
    }

    let model = match entries.iter().find(|(_, k, _)| k == "model") {
        None => return Err(BenchError::MissingKey("model".into())),
        Some((line, _, v)) => match v.as_str() {
            "pendulum" => Model::Pendulum,
            "wdn" => Model::Wdn,
            other => {
                return Err(BenchError::Parse {
                    line: *line,
                    msg: format!("unknown model `{other}` (expected pendulum or wdn)"),
                })
            }
        },
    };

    let mut cfg = SimConfig::new(model);
    for (line, key, value) in &entries {
        apply(&mut cfg, key, value).map_err(|msg| BenchError::Parse { line: *line, msg })?;
    }
    cfg.validate()?;
    Ok(cfg)
}

type Apply = std::result::Result<(), String>;

fn num(v: &str) -> std::result::Result<f64, String> {
    v.parse::<f64>().map_err(|_| format!("`{v}` is not a number"))
}

fn count(v: &str) -> std::result::Result<usize, String> {
    v.parse::<usize>().map_err(|_| format!("`{v}` is not a non-negative integer"))
}

fn flag(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("`{v}` is not a boolean")),
    }
}

fn array<const K: usize>(v: &str) -> std::result::Result<[f64; K], String> {
    let parts: Vec<f64> = v.split(',').map(|p| num(p.trim())).collect::<std::result::Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|p: Vec<f64>| format!("expected {K} comma-separated values, got {}", p.len()))
}

fn pair(v: &str) -> std::result::Result<(f64, f64), String> {
    let [a, b] = array::<2>(v)?;
    Ok((a, b))
}

fn apply(cfg: &mut SimConfig, key: &str, v: &str) -> Apply {
    let s = &mut cfg.solver;
    match key {
        "model" => {}
        "sim_duration" => cfg.sim_duration = num(v)?,
        "baseline" => cfg.baseline = flag(v)?,
        "output" => cfg.output_path = Some(PathBuf::from(v)),
        "log_level" => cfg.log_level = v.to_string(),
        "wall_time" => cfg.wall_time = flag(v)?,
        "m" => s.m = count(v)?,
        "delta" => s.delta = num(v)?,
        "gamma" => s.gamma = num(v)?,
        "max_outer_iters" => s.max_outer_iters = count(v)?,
        "seed" => s.seed = v.parse().map_err(|_| format!("`{v}` is not a seed"))?,
        "shot_method" => {
            s.shot_method = match v {
                "nullspace" => ShotMethod::NullSpace,
                "rollout" => ShotMethod::InputRollout,
                _ => return Err(format!("unknown shot_method `{v}` (nullspace or rollout)")),
            }
        }
        "shot_scale" => s.shot_scale = num(v)?,
        "eq_tol" => s.eq_tol = num(v)?,
        "cyc_tol" => s.cyc_tol = num(v)?,
        "trigger_mode" => {
            s.trigger_mode = match v {
                "any" => TriggerMode::AnyIncrease,
                "all" => TriggerMode::AllIncrease,
                _ => return Err(format!("unknown trigger_mode `{v}` (any or all)")),
            }
        }
        "phase2" => s.phase2_enabled = flag(v)?,
        "qp_tol" => s.qp.tol = num(v)?,
        "qp_max_iter" => s.qp.max_iter = count(v)?,
        "qp_backend" => {
            s.qp.backend = match v {
                "banded" => KktBackend::Banded,
                "dense" => KktBackend::Dense,
                _ => return Err(format!("unknown qp_backend `{v}` (banded or dense)")),
            }
        }
        _ => {
            if let Some(k) = key.strip_prefix("pendulum.") {
                return apply_pendulum(&mut cfg.pendulum, k, v);
            }
            if let Some(k) = key.strip_prefix("wdn.") {
                return apply_wdn(&mut cfg.wdn, k, v);
            }
            return Err(format!("unknown key `{key}`"));
        }
    }
    Ok(())
}

fn apply_pendulum(p: &mut PendulumSetup, key: &str, v: &str) -> Apply {
    match key {
        "cart_mass" => p.params.cart_mass = num(v)?,
        "pend_mass" => p.params.pend_mass = num(v)?,
        "length" => p.params.length = num(v)?,
        "gravity" => p.params.gravity = num(v)?,
        "ts" => p.params.ts = num(v)?,
        "horizon" => p.spec.horizon = count(v)?,
        "q" => p.spec.state_weights = array(v)?,
        "r" => p.spec.input_weight = num(v)?,
        "q_terminal" => p.spec.terminal_weights = array(v)?,
        "position_bound" => p.spec.position_bound = num(v)?,
        "input_bound" => p.spec.input_bound = num(v)?,
        "initial_state" => p.initial_state = array(v)?,
        "ref_amplitude" => p.reference_amplitude = num(v)?,
        "ref_period" => p.reference_period = num(v)?,
        _ => return Err(format!("unknown key `pendulum.{key}`")),
    }
    Ok(())
}

fn apply_wdn(w: &mut WdnSetup, key: &str, v: &str) -> Apply {
    let s = &mut w.spec;
    match key {
        "ts" => s.ts = num(v)?,
        "horizon" => s.horizon = count(v)?,
        "tank_areas" => s.tank_areas = array(v)?,
        "pipe_coeffs" => s.pipe_coeffs = array(v)?,
        "pump_max_head" => s.pump_max_head = array(v)?,
        "pump_curve" => s.pump_curve = array(v)?,
        "pump_max_flow" => s.pump_max_flow = array(v)?,
        "h5_bounds" => s.level_bounds[0] = pair(v)?,
        "h6_bounds" => s.level_bounds[1] = pair(v)?,
        "level_reference" => s.level_reference = array(v)?,
        "level_weight" => s.level_weight = num(v)?,
        "terminal_level_weight" => s.terminal_level_weight = num(v)?,
        "density" => s.density = num(v)?,
        "gravity" => s.gravity = num(v)?,
        "demand_mean" => s.demand_mean = array(v)?,
        "demand_swing" => s.demand_swing = num(v)?,
        "demand_peak_hour" => s.demand_peak_hour = num(v)?,
        "tariff_night" => s.tariff_night = num(v)?,
        "tariff_day" => s.tariff_day = num(v)?,
        "day_hours" => s.day_hours = pair(v)?,
        "demand_mismatch" => s.demand_mismatch = num(v)?,
        "initial_heads" => w.initial_heads = array(v)?,
        _ => return Err(format!("unknown key `wdn.{key}`")),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = parse_config_str("model=pendulum\n").unwrap();
        assert_eq!(cfg.model, Model::Pendulum);
        assert_eq!(cfg.solver.delta, 0.5);
        assert_eq!(cfg.solver.gamma, 1.0);
        assert_eq!(cfg.n_samples(), 500);
        let cfg = parse_config_str("model = wdn").unwrap();
        assert_eq!(cfg.solver.delta, 1e-4);
        assert_eq!(cfg.n_samples(), 48);
    }

    #[test]
    fn values_and_comments() {
        let text = "# pendulum run\nmodel = pendulum\ndelta=0.5 # as published\nm = 4\n\npendulum.q = 1, 2, 3, 4\nwdn.h5_bounds = 25, 31\n";
        let cfg = parse_config_str(text).unwrap();
        assert_eq!(cfg.solver.delta, 0.5);
        assert_eq!(cfg.solver.m, 4);
        assert_eq!(cfg.pendulum.spec.state_weights, [1.0, 2.0, 3.0, 4.0]);
        assert_eq!(cfg.wdn.spec.level_bounds[0], (25.0, 31.0));
    }

    #[test]
    fn errors_carry_line_numbers() {
        match parse_config_str("model=pendulum\n\nbogus = 1\n") {
            Err(BenchError::Parse { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("bogus"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_config_str("model=pendulum\ndelta\n"), Err(BenchError::Parse { line: 2, .. })));
        assert!(matches!(parse_config_str("m = 4\n"), Err(BenchError::MissingKey(_))));
        assert!(matches!(parse_config_str("model=pendulum\nm=0\n"), Err(BenchError::Invalid(_))));
        assert!(matches!(parse_config_str("model=pendulum\nm=2\nm=3\n"), Err(BenchError::Parse { line: 3, .. })));
    }

    #[test]
    fn square_wave_reference() {
        let p = PendulumSetup::default();
        assert_eq!(p.setpoint(0.0), 3.0);
        assert_eq!(p.setpoint(2.49), 3.0);
        assert_eq!(p.setpoint(2.5), -3.0);
        assert_eq!(p.setpoint(5.1), 3.0);
    }
}
