pub mod analysis;
pub mod config;
pub mod expr;
pub mod output;
pub mod scenarios;

pub use config::{Scenario, ScenarioConfig};
pub use output::{write_bundle, ResultBundle};
pub use scenarios::run_scenario;
