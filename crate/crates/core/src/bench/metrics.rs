use serde::{Deserialize, Serialize};

use super::{InfractionEvent, InfractionKind};
use crate::geometry::{Pose, Vec2};
use crate::world::{RoadNetwork, Route};

/// Per-infraction multipliers applied to the driving score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Coefficients {
    pub collision_pedestrian: f64,
    pub collision_vehicle: f64,
    pub collision_static: f64,
    pub red_light: f64,
    pub stop_sign: f64,
}

impl Default for Coefficients {
    fn default() -> Self {
        Coefficients {
            collision_pedestrian: 0.50,
            collision_vehicle: 0.60,
            collision_static: 0.65,
            red_light: 0.70,
            stop_sign: 0.80,
        }
    }
}

impl Coefficients {
    pub fn of(&self, kind: InfractionKind) -> f64 {
        match kind {
            InfractionKind::CollisionPedestrian => self.collision_pedestrian,
            InfractionKind::CollisionVehicle => self.collision_vehicle,
            InfractionKind::CollisionStatic => self.collision_static,
            InfractionKind::RedLight => self.red_light,
            InfractionKind::StopSign => self.stop_sign,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for k in InfractionKind::ALL {
            let c = self.of(k);
            if !(0.0..=1.0).contains(&c) {
                return Err(format!("coefficient for {k:?} must lie in [0, 1], got {c}"));
            }
        }
        Ok(())
    }
}

/// Completion percentage and off-road arc length deducted (m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Completion {
    pub percent: f64,
    pub off_road: f64,
    pub max_s: f64,
}

/// Credits the furthest route position reached, minus distance driven off-road.
///
/// Projection is windowed around the running maximum so that a route doubling
/// back near itself cannot be shortcut.
pub fn route_completion(trajectory: &[Vec2], route: &Route, net: &RoadNetwork) -> Completion {
    let pl = route.polyline();
    let total = pl.length();
    let mut max_s: f64 = 0.0;
    let mut off_road = 0.0;
    let mut prev: Option<Vec2> = None;
    for &p in trajectory {
        let proj = pl.project_window(p, max_s - 5.0, max_s + 20.0);
        max_s = max_s.max(proj.s);
        if let Some(q) = prev {
            // a segment is off-road if its midpoint is
            let mid = Pose::new(0.5 * (p.x + q.x), 0.5 * (p.y + q.y), (p - q).angle());
            if net.locate(&mid).is_off_road() {
                off_road += p.distance(q);
            }
        }
        prev = Some(p);
    }
    let credited = (max_s - off_road).max(0.0);
    let percent = if total > 0.0 {
        (100.0 * credited / total).clamp(0.0, 100.0)
    } else {
        0.0
    };
    Completion { percent, off_road, max_s }
}

/// Product of per-event coefficients, floored at zero.
pub fn penalty_multiplier(infractions: &[InfractionEvent], coeffs: &Coefficients) -> f64 {
    infractions
        .iter()
        .fold(1.0, |pm, e| pm * coeffs.of(e.kind))
        .max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResult {
    pub route_id: String,
    pub route_length: f64,
    /// Percent of route arc length credited, in [0, 100].
    pub completion: f64,
    pub off_road_deducted: f64,
    pub infractions: Vec<InfractionEvent>,
    pub penalty_multiplier: f64,
    pub driving_score: f64,
    pub timed_out: bool,
    pub blocked: bool,
    pub ticks: u64,
    /// Simulated seconds until the episode ended.
    pub duration: f64,
}

impl RouteResult {
    /// Fills in the derived score fields.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        route_id: impl Into<String>,
        route_length: f64,
        completion: Completion,
        infractions: Vec<InfractionEvent>,
        coeffs: &Coefficients,
        timed_out: bool,
        blocked: bool,
        ticks: u64,
        duration: f64,
    ) -> Self {
        let penalty_multiplier = penalty_multiplier(&infractions, coeffs);
        RouteResult {
            route_id: route_id.into(),
            route_length,
            completion: completion.percent,
            off_road_deducted: completion.off_road,
            infractions,
            penalty_multiplier,
            driving_score: completion.percent * penalty_multiplier,
            timed_out,
            blocked,
            ticks,
            duration,
        }
    }

    pub fn collisions(&self) -> usize {
        self.infractions.iter().filter(|e| e.kind.is_collision()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub variant: String,
    pub config_digest: String,
    pub routes: Vec<RouteResult>,
    /// Route-length-weighted means.
    pub driving_score: f64,
    pub route_completion: f64,
    pub infraction_penalty: f64,
    pub mean_duration: f64,
    /// Percent of routes ending in timeout / immobilization.
    pub timeouts: f64,
    pub blocked: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("cannot aggregate an empty result set")]
    Empty,
    #[error("total route length must be positive")]
    ZeroLength,
}

pub fn weighted_mean(pairs: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let (num, den) = pairs
        .into_iter()
        .fold((0.0, 0.0), |(n, d), (w, x)| (n + w * x, d + w));
    num / den
}

pub fn aggregate(
    routes: Vec<RouteResult>,
    variant: impl Into<String>,
    config_digest: impl Into<String>,
) -> Result<BenchmarkReport, ReportError> {
    if routes.is_empty() {
        return Err(ReportError::Empty);
    }
    if routes.iter().map(|r| r.route_length).sum::<f64>() <= 0.0 {
        return Err(ReportError::ZeroLength);
    }
    let by = |f: fn(&RouteResult) -> f64| weighted_mean(routes.iter().map(|r| (r.route_length, f(r))));
    let pct = |f: fn(&RouteResult) -> bool| 100.0 * routes.iter().filter(|r| f(r)).count() as f64 / routes.len() as f64;
    Ok(BenchmarkReport {
        variant: variant.into(),
        config_digest: config_digest.into(),
        driving_score: by(|r| r.driving_score),
        route_completion: by(|r| r.completion),
        infraction_penalty: by(|r| r.penalty_multiplier),
        mean_duration: routes.iter().map(|r| r.duration).sum::<f64>() / routes.len() as f64,
        timeouts: pct(|r| r.timed_out),
        blocked: pct(|r| r.blocked),
        routes,
    })
}
