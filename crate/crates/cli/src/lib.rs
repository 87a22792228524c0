//! Scenario configuration, closed-loop orchestration, file emission and
//! log-level diagnostics for the load-population simulator.

pub mod output;
pub mod report;
pub mod runner;
pub mod scenario;
