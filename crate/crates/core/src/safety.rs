//! Constraint-based controller turning waypoint plans into actuation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::geometry::{Obb, Vec2};
use crate::perception::{PerceptionFrame, SignalDetection, SignalKind};
use crate::planner::WaypointPlan;
use crate::world::{BBox, ParticipantId, VehicleLimits};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdmParams {
    /// Desired speed (m/s).
    pub v0: f64,
    /// Time headway (s).
    pub headway: f64,
    pub a_max: f64,
    pub b_comf: f64,
    /// Jam distance (m).
    pub s0: f64,
    pub delta: f64,
    /// Lower clamp of the returned acceleration (positive number, m/s²).
    pub b_emergency: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        IdmParams {
            v0: 10.0,
            headway: 1.5,
            a_max: 1.5,
            b_comf: 2.0,
            s0: 2.0,
            delta: 4.0,
            b_emergency: 8.0,
        }
    }
}

/// Intelligent-driver-model acceleration for bumper gap `gap` to a leader moving at `leader_v`.
///
/// Free road is `gap = +inf`. A non-positive gap returns full emergency braking.
pub fn idm_acceleration(gap: f64, v: f64, leader_v: f64, p: &IdmParams) -> f64 {
    if !(gap > 0.0) {
        return -p.b_emergency;
    }
    let free = if p.v0 > 0.0 {
        (v / p.v0).powf(p.delta)
    } else if v > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    let interaction = if gap.is_finite() {
        let dv = v - leader_v;
        let dynamic = v * p.headway + v * dv / (2.0 * (p.a_max * p.b_comf).sqrt());
        let s_star = p.s0 + dynamic.max(0.0);
        (s_star / gap).powi(2)
    } else {
        0.0
    };
    (p.a_max * (1.0 - free - interaction)).clamp(-p.b_emergency, p.a_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Fast,
    Degraded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub integral_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        PidGains {
            kp: 0.8,
            ki: 0.0,
            kd: 0.1,
            integral_limit: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyConfig {
    pub profile: Profile,
    pub idm: IdmParams,
    /// Preview distance is max(lookahead_min, lookahead_gain * v).
    pub lookahead_min: f64,
    pub lookahead_gain: f64,
    pub pid: PidGains,
    pub signal_confidence_threshold: f64,
    /// Constant-velocity prediction horizon for other objects (s).
    pub prediction_horizon: f64,
    pub degraded_speed_cap: f64,
    /// Lateral corridor inflation per side in the FAST profile (m).
    pub corridor_margin: f64,
    /// Extra distance kept to stationary blockers in the FAST profile (m).
    pub protective_standoff: f64,
    /// Added to the comfortable stopping distance for the traffic-rule envelope (m).
    pub stop_margin: f64,
    /// Time-to-collision below which the hard gate brakes (s).
    pub ttc_gate: f64,
    pub stop_latch_speed: f64,
    pub stop_latch_time: f64,
    pub stop_latch_radius: f64,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        SafetyConfig {
            profile: Profile::Fast,
            idm: IdmParams::default(),
            lookahead_min: 4.0,
            lookahead_gain: 0.5,
            pid: PidGains::default(),
            signal_confidence_threshold: 0.6,
            prediction_horizon: 2.0,
            degraded_speed_cap: 4.0,
            corridor_margin: 0.6,
            protective_standoff: 8.0,
            stop_margin: 3.0,
            ttc_gate: 1.0,
            stop_latch_speed: 0.1,
            stop_latch_time: 0.5,
            stop_latch_radius: 5.0,
        }
    }
}

impl SafetyConfig {
    pub fn degraded(&self) -> SafetyConfig {
        SafetyConfig {
            profile: Profile::Degraded,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let i = &self.idm;
        let positive = [
            ("idm.v0", i.v0),
            ("idm.headway", i.headway),
            ("idm.a_max", i.a_max),
            ("idm.b_comf", i.b_comf),
            ("idm.s0", i.s0),
            ("idm.delta", i.delta),
            ("idm.b_emergency", i.b_emergency),
            ("lookahead_min", self.lookahead_min),
            ("prediction_horizon", self.prediction_horizon),
            ("degraded_speed_cap", self.degraded_speed_cap),
            ("ttc_gate", self.ttc_gate),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(format!("safety.{name} must be > 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.signal_confidence_threshold) {
            return Err("safety.signal_confidence_threshold must be in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrakeCause {
    /// Predicted overlap too close for the current speed.
    Collision,
    /// Stationary blocker inside the protective clearance.
    Protective,
    TrafficRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    /// [-1, 1]; negative brakes.
    pub longitudinal: f64,
    pub steering: f64,
    pub emergency_brake: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brake_cause: Option<BrakeCause>,
}

impl ControlCommand {
    pub fn coast() -> Self {
        ControlCommand {
            longitudinal: 0.0,
            steering: 0.0,
            emergency_brake: false,
            brake_cause: None,
        }
    }

    /// Full service brake, wheels straight.
    pub fn hold() -> Self {
        ControlCommand {
            longitudinal: -1.0,
            ..Self::coast()
        }
    }

    pub fn emergency(cause: BrakeCause, steering: f64) -> Self {
        ControlCommand {
            longitudinal: -1.0,
            steering,
            emergency_brake: true,
            brake_cause: Some(cause),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Leader {
    pub id: ParticipantId,
    pub gap: f64,
    /// Speed component along the plan direction.
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancyAssessment {
    pub min_clear_distance: f64,
    pub blocking_object: Option<ParticipantId>,
    pub blocking_speed: f64,
    pub leader: Option<Leader>,
}

/// Ego footprint positions along a plan, starting at the ego origin.
struct Corridor {
    points: Vec<Vec2>,
    cumulative: Vec<f64>,
}

impl Corridor {
    fn new(plan: &WaypointPlan) -> Self {
        let mut points = vec![Vec2::ZERO];
        for &w in &plan.waypoints {
            if w.distance(*points.last().expect("non-empty")) > 1e-9 {
                points.push(w);
            }
        }
        if points.len() == 1 {
            points.push(Vec2::new(1e-6, 0.0));
        }
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            let last = *cumulative.last().expect("non-empty");
            cumulative.push(last + w[0].distance(w[1]));
        }
        Corridor { points, cumulative }
    }

    fn length(&self) -> f64 {
        *self.cumulative.last().expect("non-empty")
    }

    fn pose_at(&self, s: f64) -> (Vec2, f64) {
        let n = self.points.len();
        let i = match self.cumulative.iter().position(|&c| c > s) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => n - 2,
        }
        .min(n - 2);
        let a = self.points[i];
        let b = self.points[i + 1];
        let len = self.cumulative[i + 1] - self.cumulative[i];
        let t = ((s - self.cumulative[i]) / len).clamp(0.0, 1.0);
        (a + (b - a) * t, (b - a).angle())
    }

    fn footprint(&self, s: f64, ego: BBox, margin: f64) -> Obb {
        let (p, h) = self.pose_at(s);
        Obb::new(p, h, ego.length, ego.width + 2.0 * margin)
    }

    /// First arc position where the footprint overlaps `obstacle`, refined by bisection.
    fn first_overlap(&self, obstacle: &Obb, ego: BBox, margin: f64) -> Option<f64> {
        // cheap reject: obstacle farther than the corridor's reach
        let reach = 0.5 * ego.length.hypot(ego.width + 2.0 * margin) + obstacle.half_length.hypot(obstacle.half_width);
        let near = self
            .points
            .windows(2)
            .any(|w| segment_point_distance(w[0], w[1], obstacle.center) <= reach);
        if !near {
            return None;
        }
        const STEP: f64 = 0.25;
        let total = self.length();
        let mut prev = 0.0;
        let mut s = 0.0;
        loop {
            if self.footprint(s, ego, margin).overlaps(obstacle) {
                if s == 0.0 {
                    return Some(0.0);
                }
                let (mut lo, mut hi) = (prev, s);
                while hi - lo > 1e-5 {
                    let mid = 0.5 * (lo + hi);
                    if self.footprint(mid, ego, margin).overlaps(obstacle) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Some(lo);
            }
            if s >= total {
                return None;
            }
            prev = s;
            s = (s + STEP).min(total);
        }
    }
}

fn segment_point_distance(a: Vec2, b: Vec2, p: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 > 0.0 { ((p - a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    p.distance(a + ab * t)
}

/// Sweeps the ego footprint along the plan against each object's constant-velocity
/// swept box over `prediction_horizon`; `margin` inflates the corridor laterally.
pub fn assess_occupancy(
    plan: &WaypointPlan,
    frame: &PerceptionFrame,
    ego: BBox,
    cfg: &SafetyConfig,
    margin: f64,
) -> OccupancyAssessment {
    let corridor = Corridor::new(plan);
    let horizon = corridor.length();
    let mut out = OccupancyAssessment {
        min_clear_distance: horizon,
        blocking_object: None,
        blocking_speed: 0.0,
        leader: None,
    };
    for o in &frame.objects {
        let travel = o.speed * cfg.prediction_horizon;
        let dir = Vec2::from_angle(o.heading);
        // motion is along the heading, so the swept volume is the box stretched by its travel
        let swept = Obb::new(o.position + dir * (0.5 * travel), o.heading, o.bbox.length + travel, o.bbox.width);
        let now = Obb::new(o.position, o.heading, o.bbox.length, o.bbox.width);
        if let Some(s) = corridor.first_overlap(&swept, ego, margin) {
            if s < out.min_clear_distance {
                out.min_clear_distance = s;
                out.blocking_object = Some(o.id);
                out.blocking_speed = along_speed(&corridor, s, o.heading, o.speed);
            }
        }
        if let Some(s) = corridor.first_overlap(&now, ego, margin) {
            if out.leader.is_none_or(|l| s < l.gap) {
                out.leader = Some(Leader {
                    id: o.id,
                    gap: s,
                    speed: along_speed(&corridor, s, o.heading, o.speed),
                });
            }
        }
    }
    out
}

fn along_speed(corridor: &Corridor, s: f64, heading: f64, speed: f64) -> f64 {
    let (_, h) = corridor.pose_at(s);
    speed * (heading - h).cos()
}

/// PID memory threaded between ticks by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PidState {
    pub integral: f64,
    pub prev_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringOutput {
    pub steering: f64,
    pub heading_error: f64,
    pub pid: PidState,
    /// The plan was shorter than the preview distance; the last waypoint was used.
    pub short_plan: bool,
}

/// Heading-error PID on the first waypoint at least the preview distance away.
pub fn preview_steering(
    plan: &WaypointPlan,
    speed: f64,
    cfg: &SafetyConfig,
    pid: PidState,
    dt: f64,
    max_steer: f64,
) -> SteeringOutput {
    let lookahead = cfg.lookahead_min.max(cfg.lookahead_gain * speed);
    let arcs = plan.arc_lengths();
    let (target, short_plan) = match arcs.iter().position(|&a| a >= lookahead) {
        Some(i) => (plan.waypoints[i], false),
        None => (plan.waypoints.last().copied().unwrap_or(Vec2::new(1.0, 0.0)), true),
    };
    let err = target.y.atan2(target.x);
    let g = &cfg.pid;
    let integral = (pid.integral + err * dt).clamp(-g.integral_limit, g.integral_limit);
    let derivative = pid.prev_error.map_or(0.0, |p| (err - p) / dt);
    let u = g.kp * err + g.ki * integral + g.kd * derivative;
    SteeringOutput {
        steering: u.clamp(-max_steer, max_steer),
        heading_error: err,
        pid: PidState {
            integral,
            prev_error: Some(err),
        },
        short_plan,
    }
}

/// Full-stop bookkeeping for stop signs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StopLatch {
    pub sign: Option<u32>,
    pub still_time: f64,
    pub satisfied: BTreeSet<u32>,
}

impl StopLatch {
    pub fn update(&mut self, signals: &[SignalDetection], speed: f64, cfg: &SafetyConfig, dt: f64) {
        let near = signals
            .iter()
            .filter(|d| d.kind == SignalKind::StopSign && d.governs_ego_lane && d.distance <= cfg.stop_latch_radius)
            .min_by(|a, b| a.distance.total_cmp(&b.distance));
        match near {
            Some(d) if speed < cfg.stop_latch_speed => {
                if self.sign != Some(d.source_id) {
                    self.sign = Some(d.source_id);
                    self.still_time = 0.0;
                }
                self.still_time += dt;
                if self.still_time >= cfg.stop_latch_time - 1e-9 {
                    self.satisfied.insert(d.source_id);
                }
            }
            _ => {
                self.sign = None;
                self.still_time = 0.0;
            }
        }
    }
}

/// Returns the detection that demands an emergency stop, if any.
pub fn traffic_rule_gate<'a>(
    signals: &'a [SignalDetection],
    speed: f64,
    latch: &StopLatch,
    cfg: &SafetyConfig,
) -> Option<&'a SignalDetection> {
    let envelope = speed * speed / (2.0 * cfg.idm.b_comf) + cfg.stop_margin;
    signals.iter().find(|d| {
        d.governs_ego_lane
            && d.confidence > cfg.signal_confidence_threshold
            && d.distance < envelope
            && match d.kind {
                SignalKind::RedLight => true,
                SignalKind::StopSign => !latch.satisfied.contains(&d.source_id),
                SignalKind::GreenLight | SignalKind::YellowLight => false,
            }
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerState {
    pub pid: PidState,
    pub stop_latch: StopLatch,
}

/// Ego quantities the controller needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoInput {
    pub speed: f64,
    pub bbox: BBox,
    pub limits: VehicleLimits,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub command: ControlCommand,
    pub state: ControllerState,
    pub assessment: OccupancyAssessment,
    pub target_accel: f64,
    pub short_plan: bool,
}

fn accel_to_longitudinal(a: f64, limits: &VehicleLimits) -> f64 {
    if a >= 0.0 {
        (a / limits.max_accel).min(1.0)
    } else {
        (a / limits.max_brake).max(-1.0)
    }
}

/// One controller tick. FAST applies the protective standoff, the inflated corridor and the
/// traffic-rule gate; DEGRADED keeps only the time-to-collision gate and caps speed.
pub fn control(
    plan: &WaypointPlan,
    frame: &PerceptionFrame,
    cfg: &SafetyConfig,
    ego: &EgoInput,
    state: &ControllerState,
) -> ControlOutput {
    let v = ego.speed;
    let degraded = cfg.profile == Profile::Degraded;
    let margin = if degraded { 0.0 } else { cfg.corridor_margin };
    let assessment = assess_occupancy(plan, frame, ego.bbox, cfg, margin);
    let steer = preview_steering(plan, v, cfg, state.pid, ego.dt, ego.limits.max_steer);

    let mut next = ControllerState {
        pid: steer.pid,
        stop_latch: state.stop_latch.clone(),
    };

    let mut v0 = cfg.idm.v0;
    if let Some(s) = plan.suggested_speed() {
        v0 = v0.min(s);
    }
    if degraded {
        v0 = v0.min(cfg.degraded_speed_cap);
    }
    let idm = IdmParams { v0, ..cfg.idm };

    let clear = assessment.min_clear_distance;
    let has_blocker = assessment.blocking_object.is_some();
    let stationary_blocker = has_blocker && assessment.blocking_speed.abs() < 0.5;
    let leader_v = match (assessment.leader, assessment.blocking_object) {
        (Some(l), Some(b)) if l.id == b => l.speed.max(0.0),
        _ => 0.0,
    };

    let (gap, gate) = if !has_blocker {
        (f64::INFINITY, None)
    } else if degraded {
        let hit = clear <= 0.0 || clear < v * cfg.ttc_gate;
        (clear, hit.then_some(BrakeCause::Collision))
    } else {
        let standoff = if stationary_blocker { cfg.protective_standoff } else { 0.0 };
        let cause = if clear < cfg.idm.s0 || clear < v * cfg.ttc_gate {
            Some(BrakeCause::Collision)
        } else if stationary_blocker && clear < cfg.idm.s0 + cfg.protective_standoff + 0.5 {
            Some(BrakeCause::Protective)
        } else {
            None
        };
        (clear - standoff, cause)
    };
    let accel = idm_acceleration(gap, v, leader_v, &idm);

    let mut cause = gate;
    if !degraded {
        next.stop_latch.update(&frame.signals, v, cfg, ego.dt);
        if cause.is_none() && traffic_rule_gate(&frame.signals, v, &next.stop_latch, cfg).is_some() {
            cause = Some(BrakeCause::TrafficRule);
        }
    }

    let command = match cause {
        Some(c) => ControlCommand::emergency(c, steer.steering),
        None => ControlCommand {
            longitudinal: accel_to_longitudinal(accel, &ego.limits),
            steering: steer.steering,
            emergency_brake: false,
            brake_cause: None,
        },
    };
    ControlOutput {
        command,
        state: next,
        assessment,
        target_accel: accel,
        short_plan: steer.short_plan,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::perception::TrackedObject;
    use crate::world::ParticipantClass;

    const CAR: BBox = BBox {
        length: 4.0,
        width: 2.0,
    };

    fn straight_plan() -> WaypointPlan {
        WaypointPlan {
            waypoints: (0..=30).map(|i| Vec2::new(i as f64, 0.0)).collect(),
            spacing: 1.0,
            horizon: 30.0,
            speeds: None,
        }
    }

    fn frame(objects: Vec<TrackedObject>) -> PerceptionFrame {
        PerceptionFrame {
            tick: 0,
            ego_speed: 0.0,
            ego_pose: Pose::default(),
            objects,
            signals: vec![],
        }
    }

    fn obj(id: u32, x: f64, y: f64, heading: f64, speed: f64) -> TrackedObject {
        TrackedObject {
            id,
            class: ParticipantClass::Car,
            position: Vec2::new(x, y),
            speed,
            heading,
            bbox: CAR,
        }
    }

    fn ego(speed: f64) -> EgoInput {
        EgoInput {
            speed,
            bbox: CAR,
            limits: VehicleLimits::default(),
            dt: 0.05,
        }
    }

    /// Direct IDM evaluation, written independently of `idm_acceleration`.
    #[allow(clippy::too_many_arguments)]
    fn idm_oracle(gap: f64, v: f64, lv: f64, v0: f64, t: f64, a: f64, b: f64, s0: f64, delta: f64) -> f64 {
        let s_star = s0 + v * t + v * (v - lv) / (2.0 * (a * b).sqrt());
        a * (1.0 - (v / v0).powf(delta) - (s_star / gap).powi(2))
    }

    #[test]
    fn idm_free_road_fixed_point() {
        let p = IdmParams {
            v0: 13.0,
            ..IdmParams::default()
        };
        assert!(idm_acceleration(f64::INFINITY, 13.0, 0.0, &p).abs() < 1e-12);
    }

    #[test]
    fn idm_does_not_creep_into_jam_gap() {
        let p = IdmParams::default();
        assert!(idm_acceleration(p.s0, 0.0, 0.0, &p) <= 0.0);
        assert_eq!(idm_acceleration(0.0, 3.0, 0.0, &p), -p.b_emergency);
        assert_eq!(idm_acceleration(-1.0, 3.0, 0.0, &p), -p.b_emergency);
    }

    #[test]
    fn idm_matches_independent_formula() {
        let p = IdmParams {
            v0: 15.0,
            headway: 1.5,
            a_max: 1.5,
            b_comf: 2.0,
            s0: 2.0,
            delta: 4.0,
            b_emergency: 8.0,
        };
        let expected = idm_oracle(20.0, 10.0, 10.0, 15.0, 1.5, 1.5, 2.0, 2.0, 4.0);
        // frozen value: 1.5 * (1 - (2/3)^4 - (17/20)^2)
        assert!((expected - 0.119_953_703_703_703_7).abs() < 1e-12);
        assert!((idm_acceleration(20.0, 10.0, 10.0, &p) - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_frame_is_fully_clear() {
        let a = assess_occupancy(&straight_plan(), &frame(vec![]), CAR, &SafetyConfig::default(), 0.0);
        assert_eq!(a.min_clear_distance, 30.0);
        assert!(a.blocking_object.is_none());
        assert!(a.leader.is_none());
    }

    #[test]
    fn stationary_vehicle_clear_distance_closed_form() {
        let f = frame(vec![obj(1, 12.0, 0.0, 0.0, 0.0)]);
        let a = assess_occupancy(&straight_plan(), &f, CAR, &SafetyConfig::default(), 0.0);
        // rectangles touch when centers are half-lengths apart: 12 - 2 - 2
        assert!((a.min_clear_distance - 8.0).abs() < 1e-3);
        assert_eq!(a.blocking_object, Some(1));
        assert!((a.leader.unwrap().gap - 8.0).abs() < 1e-3);
    }

    /// Brute-force oracle: step time at 0.01 s, moving the object, and scan the corridor at 0.01 m.
    fn brute_force_clear(plan: &WaypointPlan, o: &TrackedObject, horizon: f64) -> Option<f64> {
        let corridor = Corridor::new(plan);
        let steps = (horizon / 0.01).round() as usize;
        let mut best: Option<f64> = None;
        let dir = Vec2::from_angle(o.heading);
        let n = (corridor.length() / 0.01).round() as usize;
        for k in 0..=steps {
            let t = k as f64 * 0.01;
            let b = Obb::new(o.position + dir * (o.speed * t), o.heading, o.bbox.length, o.bbox.width);
            for i in 0..=n {
                let s = i as f64 * 0.01;
                if best.is_some_and(|bs| s >= bs) {
                    break;
                }
                if corridor.footprint(s, CAR, 0.0).overlaps(&b) {
                    best = Some(s);
                    break;
                }
            }
        }
        best
    }

    #[test]
    fn crossing_vehicle_is_reported_before_it_arrives() {
        // crossing from the right at 4 m/s; its near edge reaches the corridor edge at t = 1 s
        let o = obj(7, 15.0, -6.0, std::f64::consts::FRAC_PI_2, 4.0);
        let f = frame(vec![o.clone()]);
        let cfg = SafetyConfig::default();
        let now = assess_occupancy(&straight_plan(), &frame(vec![obj(7, 15.0, -6.0, 0.0, 0.0)]), CAR, &cfg, 0.0);
        assert!(now.blocking_object.is_none());
        let a = assess_occupancy(&straight_plan(), &f, CAR, &cfg, 0.0);
        assert_eq!(a.blocking_object, Some(7));
        let oracle = brute_force_clear(&straight_plan(), &o, cfg.prediction_horizon).unwrap();
        assert!((a.min_clear_distance - oracle).abs() < 0.02, "{} vs {oracle}", a.min_clear_distance);
        assert!(a.leader.is_none());
    }

    #[test]
    fn preview_zero_error_on_straight_plan() {
        let out = preview_steering(&straight_plan(), 5.0, &SafetyConfig::default(), PidState::default(), 0.05, 0.6);
        assert_eq!(out.steering, 0.0);
        assert!(!out.short_plan);
    }

    #[test]
    fn preview_p_only_diagonal_target() {
        let plan = WaypointPlan {
            waypoints: vec![Vec2::ZERO, Vec2::new(1.0, 1.0), Vec2::new(2.0, 2.0), Vec2::new(10.0, 10.0)],
            spacing: 1.0,
            horizon: 14.0,
            speeds: None,
        };
        let cfg = SafetyConfig {
            lookahead_min: 14.0,
            pid: PidGains {
                kp: 1.0,
                ki: 0.0,
                kd: 0.0,
                integral_limit: 1.0,
            },
            ..SafetyConfig::default()
        };
        let out = preview_steering(&plan, 0.0, &cfg, PidState::default(), 0.05, 10.0);
        assert!((out.heading_error - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        assert!((out.steering - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        let clamped = preview_steering(&plan, 0.0, &cfg, PidState::default(), 0.05, 0.6);
        assert_eq!(clamped.steering, 0.6);
        let short = preview_steering(&plan, 0.0, &SafetyConfig { lookahead_min: 50.0, ..cfg }, PidState::default(), 0.05, 10.0);
        assert!(short.short_plan);
    }

    fn det(kind: SignalKind, confidence: f64, distance: f64, governs: bool) -> SignalDetection {
        SignalDetection {
            kind,
            confidence,
            distance,
            governs_ego_lane: governs,
            source_id: 1,
        }
    }

    #[test]
    fn gate_brakes_on_confident_red() {
        let cfg = SafetyConfig::default();
        let l = StopLatch::default();
        assert!(traffic_rule_gate(&[det(SignalKind::RedLight, 0.9, 10.0, true)], 8.0, &l, &cfg).is_some());
        assert!(traffic_rule_gate(&[det(SignalKind::RedLight, 0.4, 10.0, true)], 8.0, &l, &cfg).is_none());
        assert!(traffic_rule_gate(&[det(SignalKind::RedLight, 0.9, 10.0, false)], 8.0, &l, &cfg).is_none());
        assert!(traffic_rule_gate(&[det(SignalKind::GreenLight, 1.0, 1.0, true)], 8.0, &l, &cfg).is_none());
        // outside the stopping envelope 8^2/4 + 3 = 19
        assert!(traffic_rule_gate(&[det(SignalKind::RedLight, 0.9, 25.0, true)], 8.0, &l, &cfg).is_none());
    }

    #[test]
    fn stop_sign_latch_releases_after_full_stop() {
        let cfg = SafetyConfig::default();
        let sig = [det(SignalKind::StopSign, 0.95, 2.0, true)];
        let mut l = StopLatch::default();
        assert!(traffic_rule_gate(&sig, 0.0, &l, &cfg).is_some());
        for _ in 0..9 {
            l.update(&sig, 0.05, &cfg, 0.05);
        }
        assert!(traffic_rule_gate(&sig, 0.0, &l, &cfg).is_some());
        l.update(&sig, 0.05, &cfg, 0.05);
        assert!(traffic_rule_gate(&sig, 0.0, &l, &cfg).is_none());
    }

    #[test]
    fn fast_clear_road_accelerates_straight() {
        let out = control(&straight_plan(), &frame(vec![]), &SafetyConfig::default(), &ego(5.0), &ControllerState::default());
        assert!(out.command.longitudinal > 0.0);
        assert!(out.command.steering.abs() < 1e-12);
        assert!(!out.command.emergency_brake);
    }

    #[test]
    fn fast_brakes_for_close_blocker() {
        let f = frame(vec![obj(1, 3.0, 0.0, 0.0, 0.0)]);
        let out = control(&straight_plan(), &f, &SafetyConfig::default(), &ego(2.0), &ControllerState::default());
        assert!(out.command.emergency_brake);
        assert_eq!(out.command.brake_cause, Some(BrakeCause::Collision));
    }

    #[test]
    fn degraded_ignores_standoff_but_keeps_ttc_gate() {
        // stationary blocker 12 m ahead (8 m clear): FAST protective stop, DEGRADED creeps
        let f = frame(vec![obj(1, 12.0, 0.0, 0.0, 0.0)]);
        let cfg = SafetyConfig::default();
        let fast = control(&straight_plan(), &f, &cfg, &ego(0.5), &ControllerState::default());
        assert_eq!(fast.command.brake_cause, Some(BrakeCause::Protective));
        let deg = control(&straight_plan(), &f, &cfg.degraded(), &ego(0.5), &ControllerState::default());
        assert!(!deg.command.emergency_brake);
        let deg_fast = control(&straight_plan(), &f, &cfg.degraded(), &ego(9.0), &ControllerState::default());
        assert!(deg_fast.command.emergency_brake);
    }

    #[test]
    fn degraded_respects_speed_cap() {
        let cfg = SafetyConfig::default().degraded();
        let at_cap = control(&straight_plan(), &frame(vec![]), &cfg, &ego(cfg.degraded_speed_cap), &ControllerState::default());
        assert!(at_cap.target_accel <= 1e-12);
    }
}
