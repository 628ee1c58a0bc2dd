//! Closed-loop benchmark harness for the PS-SQP solver: config files,
//! receding-horizon simulation of the shipped models, CSV records and run
//! comparison.

pub mod compare;
pub mod config;
pub mod error;
pub mod records;
pub mod sim;

pub use compare::{compare_runs, Comparison};
pub use config::{parse_config, parse_config_str, Model, SimConfig};
pub use error::{BenchError, Result};
pub use records::{read_results, write_results};
pub use sim::{run_closed_loop, run_closed_loop_with, SimRun, StepRecord};

/// State and input sizes of a model's records.
pub fn record_dims(model: Model) -> (usize, usize) {
    match model {
        Model::Pendulum => (4, 1),
        Model::Wdn => (3, 2),
    }
}
