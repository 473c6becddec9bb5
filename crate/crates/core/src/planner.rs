//! Rule-based waypoint planner standing in for a learned planning head.
//!
//! The planner samples the route centerline ahead of the ego and shapes a lateral
//! offset profile on top of it: residual offsets blend back toward the route, a
//! lane-change override follows a two-arc constant-curvature S-curve, and an ego
//! that already sits in a parallel lane holds that lane while the route lane next
//! to it is occupied.
//!
//! Anything producing a [`WaypointPlan`] from the same inputs can replace it.

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Vec2};
use crate::perception::PerceptionFrame;
use crate::world::{LaneId, LaneLocation, Location, RoadNetwork, Route};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Waypoint spacing (m).
    pub spacing: f64,
    pub horizon: f64,
    /// Distance over which a lateral offset blends back to its target (m).
    pub rejoin_length: f64,
    /// Max distance from the route at which an off-road ego can still be planned for.
    pub recovery_radius: f64,
    /// Route-lane window (behind, ahead of the rejoin) that must be free before merging back.
    pub merge_clear_behind: f64,
    pub merge_clear_ahead: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            spacing: 1.0,
            horizon: 30.0,
            rejoin_length: 15.0,
            recovery_radius: 10.0,
            merge_clear_behind: 10.0,
            merge_clear_ahead: 10.0,
        }
    }
}

/// Trajectory parameters bound to a discrete decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManeuverPrimitive {
    /// Signed arc curvature (1/m), left positive; zero for straight primitives.
    pub curvature: f64,
    pub target_speed: f64,
    /// Execution time (s); infinite for open-ended holds.
    #[serde(with = "open_ended")]
    pub duration: f64,
}

/// Infinite durations travel as JSON `null`.
mod open_ended {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// A primitive pinned to the route position where it started.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManeuverOverride {
    pub primitive: ManeuverPrimitive,
    pub anchor_s: f64,
    pub anchor_offset: f64,
    pub anchor_lane: LaneId,
    /// Permits lane changes into opposite-direction lanes.
    pub allow_opposite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointPlan {
    /// Ego frame (x forward, y left), first point at the ego.
    pub waypoints: Vec<Vec2>,
    pub spacing: f64,
    pub horizon: f64,
    pub speeds: Option<Vec<f64>>,
}

impl WaypointPlan {
    /// Cumulative arc length from the ego origin to each waypoint.
    pub fn arc_lengths(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut prev = Vec2::ZERO;
        self.waypoints
            .iter()
            .map(|&w| {
                acc += w.distance(prev);
                prev = w;
                acc
            })
            .collect()
    }

    pub fn suggested_speed(&self) -> Option<f64> {
        self.speeds.as_ref().and_then(|s| s.first().copied())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("ego is {distance:.1} m from the route, beyond the recovery radius")]
    Unavailable { distance: f64 },
    #[error("maneuver targets lane {target:?} next to lane {lane}, which is not a permitted same-direction lane")]
    ForbiddenTarget { lane: LaneId, target: Option<LaneId> },
}

/// Inputs available to the planner each tick.
pub struct PlanContext<'a> {
    pub ego: Pose,
    pub route_s: f64,
    pub location: &'a Location,
    pub route: &'a Route,
    pub network: &'a RoadNetwork,
    pub frame: &'a PerceptionFrame,
}

/// Curvature of a two-arc S-curve of path length `length` whose lateral
/// displacement equals `width`. Returns `None` if no such curve exists.
pub fn lane_change_curvature(width: f64, length: f64) -> Option<f64> {
    // displacement(phi) = (L / phi)(1 - cos phi) with phi = kappa L / 2, increasing on (0, pi/2]
    let disp = |phi: f64| length / phi * (1.0 - phi.cos());
    let hi_phi = std::f64::consts::FRAC_PI_2;
    if !(width > 0.0 && length > 0.0) || disp(hi_phi) < width {
        return None;
    }
    let (mut lo, mut hi) = (1e-12, hi_phi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if disp(mid) < width {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(2.0 * 0.5 * (lo + hi) / length)
}

/// Lateral offset along an S-curve of curvature magnitude `kappa` and path length `length`,
/// as a function of longitudinal distance `x` from its start.
#[derive(Debug, Clone, Copy)]
struct SCurve {
    radius: f64,
    half_x: f64,
    total_y: f64,
}

impl SCurve {
    fn new(kappa: f64, length: f64) -> Self {
        let radius = 1.0 / kappa;
        let phi = kappa * length / 2.0;
        SCurve {
            radius,
            half_x: radius * phi.sin(),
            total_y: 2.0 * radius * (1.0 - phi.cos()),
        }
    }

    fn first_arc(&self, x: f64) -> f64 {
        let r = self.radius;
        r - (r * r - x * x).max(0.0).sqrt()
    }

    fn lateral(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x <= self.half_x {
            self.first_arc(x)
        } else if x < 2.0 * self.half_x {
            self.total_y - self.first_arc(2.0 * self.half_x - x)
        } else {
            self.total_y
        }
    }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Point on the route at arc `s` with lateral offset `d`; extrapolates past the end.
fn route_point(route: &Route, s: f64, d: f64) -> Vec2 {
    let pl = route.polyline();
    pl.point_at(s) + pl.tangent_at(s).perp() * d
}

fn route_lane_occupied(ctx: &PlanContext, s_e: f64, cfg: &PlannerConfig, half_width: f64) -> bool {
    let pl = ctx.route.polyline();
    let lo = s_e - cfg.merge_clear_behind;
    let hi = s_e + cfg.rejoin_length + cfg.merge_clear_ahead;
    ctx.frame.objects.iter().any(|o| {
        let world = ctx.frame.ego_pose.to_world(o.position);
        let proj = pl.project_window(world, lo - 5.0, hi + 5.0);
        proj.s >= lo && proj.s <= hi && proj.lateral.abs() < half_width + 0.5 * o.bbox.width
    })
}

/// Plans waypoints along the route, optionally shaped by a maneuver override.
pub fn plan(
    ctx: &PlanContext,
    maneuver: Option<&ManeuverOverride>,
    cfg: &PlannerConfig,
) -> Result<WaypointPlan, PlanError> {
    let pl = ctx.route.polyline();
    let proj = pl.project_window(ctx.ego.position, ctx.route_s - 5.0, ctx.route_s + 20.0);
    if ctx.location.is_off_road() && proj.distance > cfg.recovery_radius {
        return Err(PlanError::Unavailable {
            distance: proj.distance,
        });
    }
    let s_e = proj.s;
    let d_e = proj.lateral;

    let lane_width = match ctx.location {
        Location::OnRoad(LaneLocation { lane, .. }) => ctx.network.lane(*lane).map_or(3.5, |l| l.width),
        Location::OffRoad { nearest_lane, .. } => ctx.network.lane(*nearest_lane).map_or(3.5, |l| l.width),
    };

    // Base offset profile as a function of route arc length.
    let profile: Box<dyn Fn(f64) -> f64> = match maneuver {
        Some(m) if m.primitive.curvature != 0.0 => {
            check_lane_change(ctx.network, m)?;
            let kappa = m.primitive.curvature.abs();
            let length = m.primitive.target_speed * m.primitive.duration;
            let curve = SCurve::new(kappa, length);
            let sign = m.primitive.curvature.signum();
            let (a_s, a_d) = (m.anchor_s, m.anchor_offset);
            Box::new(move |s| a_d + sign * curve.lateral(s - a_s))
        }
        _ => {
            let hold = match ctx.location {
                Location::OnRoad(loc) if d_e.abs() > 0.5 * lane_width => {
                    route_lane_occupied(ctx, s_e, cfg, 0.5 * lane_width).then_some(d_e - loc.lateral)
                }
                _ => None,
            };
            let target = hold.unwrap_or(0.0);
            Box::new(move |_| target)
        }
    };

    let residual = d_e - profile(s_e);
    let n = (cfg.horizon / cfg.spacing).round().max(3.0) as usize;
    let waypoints: Vec<Vec2> = (0..=n)
        .map(|i| {
            let u = i as f64 * cfg.spacing;
            let s = s_e + u;
            let d = profile(s) + residual * (1.0 - smoothstep(u / cfg.rejoin_length));
            ctx.ego.to_local(route_point(ctx.route, s, d))
        })
        .collect();
    let speeds = maneuver.map(|m| vec![m.primitive.target_speed; waypoints.len()]);
    Ok(WaypointPlan {
        waypoints,
        spacing: cfg.spacing,
        horizon: n as f64 * cfg.spacing,
        speeds,
    })
}

fn check_lane_change(net: &RoadNetwork, m: &ManeuverOverride) -> Result<(), PlanError> {
    let lane = net.lane(m.anchor_lane);
    let nb = lane.and_then(|l| if m.primitive.curvature > 0.0 { l.left } else { l.right });
    match nb {
        Some(n) if n.same_direction || m.allow_opposite => Ok(()),
        _ => Err(PlanError::ForbiddenTarget {
            lane: m.anchor_lane,
            target: nb.map(|n| n.lane),
        }),
    }
}
