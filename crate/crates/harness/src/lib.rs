//! Reproducible experiments on tabular preference games: scenario files in,
//! JSON/CSV reports out.

pub mod analyze;
pub mod config;
pub mod error;
pub mod report;
pub mod run;
pub mod sweep;

pub use analyze::{analyze, analyze_file, Analysis};
pub use config::{bundled, ScenarioConfig};
pub use error::{Diagnostic, HarnessError, Result};
pub use report::{RunReport, Status};
pub use run::run_scenario;
pub use sweep::{parse_grid, sweep, Axis, SweepRow};
