//! Benchmark problems: an inverted pendulum on a cart and a small water
//! distribution network.

pub mod ode;
pub mod pendulum;
pub mod wdn;

pub use pendulum::{
    build_pendulum_problem, integrate_plant, pendulum_discrete, pendulum_ode, PendulumParams, PendulumProblem,
    PendulumSpec,
};
pub use wdn::{build_wdn_problem, WdnProblem, WdnSpec};
