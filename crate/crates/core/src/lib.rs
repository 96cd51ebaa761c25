//! AK growth with finite-memory habits: spectral analysis of the habit delay equation,
//! feasibility of initial data, closed-loop optimal paths and a brute-force optimality oracle.

pub mod dde;
pub mod error;
pub mod hjb;
pub mod model;
pub mod oracle;
pub mod path;
pub mod pipeline;
pub mod scenario;
pub mod simulate;
pub mod spectral;

pub use error::{Error, RegimeCondition, Result};
pub use model::{habit_of_history, validate, DerivedConstants, HistoryGrid, InitialState, ModelParams};
pub use path::{ConsumptionPath, TimeSeries};
pub use pipeline::{run_scenario, RunReport};
pub use scenario::Scenario;
