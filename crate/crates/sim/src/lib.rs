//! Scenario runner for fleets of simulated koboshi units.
//!
//! [`scenario`] loads and validates scenario files, [`engine`] steps every
//! unit and the shared radio at a fixed rate, [`telemetry`] reads and writes
//! the per-tick record files, and [`serve`] runs the engine in real time for
//! attached consoles.
//!
//! ```
//! use koboshi::dynamics::BodyState;
//! use koboshi_sim::engine::run_collect;
//! use koboshi_sim::scenario::Scenario;
//!
//! let mut sc = Scenario::single(1);
//! sc.globals.duration_s = 2.0;
//! sc.units[0].initial = BodyState::at_rest(0.2, 0.0);
//! let (records, summary) = run_collect(&sc).unwrap();
//! assert_eq!(records.len(), 100);
//! assert!(summary.units[0].final_state.pitch_rad.abs() < 0.2);
//! ```

pub mod engine;
pub mod scenario;
pub mod serve;
pub mod telemetry;

pub use engine::{run_collect, run_headless, Engine, Summary, UnitSummary};
pub use scenario::{load_scenario, parse_scenario, Scenario, ScenarioError, UnitSpec};
pub use serve::{serve_live, ServeHandle, ServeOptions};
pub use telemetry::{read_telemetry, write_telemetry, TelemetryError};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
    #[doc = include_str!("../../../book/src/serve.md")]
    mod serve {}
}
