//! Run configuration, scenario presets, the simulation driver and artifact formats.
//!
//! A run directory contains:
//!
//! - `config.json`: the fully defaulted configuration.
//! - `series.csv`: one row per output step, columns from [`series::columns`].
//! - `step_NNNNNN/`: snapshot sets `rho`, `u`, `eta`, `T` (`.bin` payload, `.json` header) and `params.json`.
//! - `status.json`: `status`, `steps_completed`, `wall_time`, and on failure `error` and `exit_code`.

pub mod config;
pub mod driver;
pub mod presets;
pub mod series;
pub mod snapshot;

pub use config::{parse_config, parse_config_with_overrides, ForcingSpec, GridSpec, RunConfig, Scenario};
pub use driver::{run, run_in, twin_config, RunOutcome, RunStatus, Simulation};
pub use presets::{forcing, preset};
pub use series::{columns, read_series, SeriesRow, SeriesWriter};
pub use snapshot::{read_snapshot, read_state, write_snapshot, write_state, SnapshotHeader};
