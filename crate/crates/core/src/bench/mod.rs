//! Closed-loop episodes, infraction detection and route-weighted scoring.

mod episode;
mod infractions;
mod metrics;
mod suite;

use serde::{Deserialize, Serialize};

pub use episode::{
    AdvisorSpec, Episode, EpisodeError, EpisodeOptions, Termination, Variant,
};
pub use infractions::{detect_infractions, InfractionDetector, InfractionEvent, InfractionKind, StopRule};
pub use metrics::{
    aggregate, penalty_multiplier, route_completion, weighted_mean, BenchmarkReport, Coefficients, Completion,
    ReportError, RouteResult,
};
pub use suite::{ablate, load_suite, render_report, replay_trace, run_suite, Ablation, SuiteError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Stopped this long (s) ends the episode as blocked.
    pub immobilization: f64,
    /// Simulated time limit (s); derived from the route length when absent.
    pub time_limit: Option<f64>,
    /// Ego speed below which it counts as immobile (m/s).
    pub immobile_speed: f64,
    /// The route counts as finished within this distance of its end (m).
    pub goal_tolerance: f64,
    pub coefficients: Coefficients,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            immobilization: 90.0,
            time_limit: None,
            immobile_speed: 0.1,
            goal_tolerance: 0.0,
            coefficients: Coefficients::default(),
        }
    }
}

impl BenchConfig {
    /// Time limit, defaulting to 60 s plus the route driven at 1 m/s.
    pub fn time_limit_for(&self, route_length: f64) -> f64 {
        self.time_limit.unwrap_or(60.0 + route_length)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.immobilization > 0.0) {
            return Err("immobilization must be positive".into());
        }
        if let Some(t) = self.time_limit {
            if !(t > 0.0) {
                return Err("time_limit must be positive".into());
            }
        }
        self.coefficients.validate()
    }
}
