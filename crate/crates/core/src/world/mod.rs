//! Deterministic 2D road world: network, participants, signals and geofenced triggers.

mod network;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use network::{
    Junction, Lane, LaneId, LaneLocation, Location, Neighbor, NetworkError, RoadNetwork, Route, Signal,
    SignalColor, SignalSchedule, StopSign,
};

use crate::geometry::{point_in_polygon, Obb, Pose, Vec2};
use crate::safety::{idm_acceleration, ControlCommand, IdmParams};

pub type ParticipantId = u32;

/// Id reserved for the ego vehicle.
pub const EGO_ID: ParticipantId = 0;

/// Fixed simulation tick (s).
pub const DEFAULT_DT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticipantClass {
    Car,
    Truck,
    Bicycle,
    Pedestrian,
    StaticObstacle,
}

impl ParticipantClass {
    pub fn wheelbase(self) -> f64 {
        match self {
            ParticipantClass::Car => 2.7,
            ParticipantClass::Truck => 4.5,
            ParticipantClass::Bicycle => 1.1,
            ParticipantClass::Pedestrian | ParticipantClass::StaticObstacle => 0.5,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ParticipantClass::Car => "car",
            ParticipantClass::Truck => "truck",
            ParticipantClass::Bicycle => "bicycle",
            ParticipantClass::Pedestrian => "pedestrian",
            ParticipantClass::StaticObstacle => "static obstacle",
        }
    }

    pub const ALL: [ParticipantClass; 5] = [
        ParticipantClass::Car,
        ParticipantClass::Truck,
        ParticipantClass::Bicycle,
        ParticipantClass::Pedestrian,
        ParticipantClass::StaticObstacle,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct BBox {
    pub length: f64,
    pub width: f64,
}

impl From<[f64; 2]> for BBox {
    fn from(v: [f64; 2]) -> Self {
        BBox {
            length: v[0],
            width: v[1],
        }
    }
}

impl From<BBox> for [f64; 2] {
    fn from(b: BBox) -> Self {
        [b.length, b.width]
    }
}

/// A scripted trajectory sample: position at time `t` after activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct TimedPoint {
    pub position: Vec2,
    pub t: f64,
}

impl From<[f64; 3]> for TimedPoint {
    fn from(v: [f64; 3]) -> Self {
        TimedPoint {
            position: Vec2::new(v[0], v[1]),
            t: v[2],
        }
    }
}

impl From<TimedPoint> for [f64; 3] {
    fn from(p: TimedPoint) -> Self {
        [p.position.x, p.position.y, p.t]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Behavior {
    Stationary,
    /// Follows `lane` and its first successors, IDM on the nearest agent ahead.
    LaneFollow { lane: LaneId, s: f64, v0: f64 },
    ScriptedTrajectory { points: Vec<TimedPoint>, elapsed: f64 },
    /// Driven by external control commands (the ego).
    Controlled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantState {
    pub id: ParticipantId,
    pub class: ParticipantClass,
    pub pose: Pose,
    pub speed: f64,
    pub bbox: BBox,
    pub behavior: Behavior,
    /// Dormant participants hold their pose until a trigger activates them.
    #[serde(default)]
    pub dormant: bool,
}

impl ParticipantState {
    pub fn footprint(&self) -> Obb {
        Obb::new(self.pose.position, self.pose.heading, self.bbox.length, self.bbox.width)
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::from_angle(self.pose.heading) * self.speed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub vehicle: ParticipantState,
    pub steering: f64,
    /// Progress along the route polyline (m).
    pub route_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TriggerEvent {
    /// Insert a copy of the named participant template.
    Spawn { template: ParticipantId },
    /// Wake a dormant participant.
    Activate { participant: ParticipantId },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeofenceTrigger {
    pub id: u32,
    pub region: Vec<Vec2>,
    pub event: TriggerEvent,
    pub one_shot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub tick: u64,
    pub sim_time: f64,
    pub ego: EgoState,
    /// Non-ego participants, sorted by id.
    pub participants: Vec<ParticipantState>,
    /// (signal id, color), in network order.
    pub signal_phases: Vec<(u32, SignalColor)>,
    pub fired_triggers: BTreeSet<u32>,
    /// Triggers whose region contained the ego last tick (edge detection).
    #[serde(default)]
    pub inside_triggers: BTreeSet<u32>,
}

impl WorldState {
    pub fn participant(&self, id: ParticipantId) -> Option<&ParticipantState> {
        self.participants.iter().find(|p| p.id == id)
    }

    /// Inserts or replaces a participant, keeping id order.
    pub fn insert_participant(&mut self, p: ParticipantState) {
        match self.participants.binary_search_by_key(&p.id, |q| q.id) {
            Ok(i) => self.participants[i] = p,
            Err(i) => self.participants.insert(i, p),
        }
    }
}

/// Actuation limits of the ego vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleLimits {
    pub max_accel: f64,
    pub max_brake: f64,
    pub max_steer: f64,
    pub max_speed: f64,
}

impl Default for VehicleLimits {
    fn default() -> Self {
        VehicleLimits {
            max_accel: 3.0,
            max_brake: 8.0,
            max_steer: 0.6,
            max_speed: 20.0,
        }
    }
}

/// Static part of a scenario; `step` is a pure function of this and a [`WorldState`].
#[derive(Debug, Clone)]
pub struct World {
    pub network: RoadNetwork,
    pub route: Route,
    pub triggers: Vec<GeofenceTrigger>,
    pub templates: Vec<ParticipantState>,
    pub dt: f64,
    pub limits: VehicleLimits,
    /// IDM parameters for lane-following traffic (v0 comes from each participant).
    pub traffic_idm: IdmParams,
}

impl World {
    pub fn signal_phases_at(&self, t: f64) -> Vec<(u32, SignalColor)> {
        self.network
            .signals
            .iter()
            .map(|s| (s.id, s.schedule.color_at(t)))
            .collect()
    }

    pub fn ego_wheelbase(&self, state: &WorldState) -> f64 {
        state.ego.vehicle.class.wheelbase()
    }

    /// Advances the world by one tick. `dt` must equal the configured tick.
    pub fn step(&self, state: &WorldState, cmd: &ControlCommand, dt: f64) -> WorldState {
        debug_assert!(dt > 0.0 && (dt - self.dt).abs() < 1e-12, "dt must equal the fixed tick");
        let mut next = state.clone();
        next.tick = state.tick + 1;
        next.sim_time = next.tick as f64 * self.dt;

        self.step_ego(&mut next.ego, cmd, dt);
        next.participants = self.step_participants(state, dt);
        next.signal_phases = self.signal_phases_at(next.sim_time);
        self.fire_triggers(&mut next);
        next
    }

    fn step_ego(&self, ego: &mut EgoState, cmd: &ControlCommand, dt: f64) {
        let lim = &self.limits;
        let lon = cmd.longitudinal.clamp(-1.0, 1.0);
        let steer = cmd.steering.clamp(-lim.max_steer, lim.max_steer);
        if lon != cmd.longitudinal || steer != cmd.steering {
            log::debug!("clamped control {cmd:?} to ({lon}, {steer})");
        }
        let accel = if cmd.emergency_brake {
            -lim.max_brake
        } else if lon >= 0.0 {
            lon * lim.max_accel
        } else {
            lon * lim.max_brake
        };
        let v = ego.vehicle.speed;
        let pose = &mut ego.vehicle.pose;
        let (s, c) = pose.heading.sin_cos();
        pose.position.x += v * c * dt;
        pose.position.y += v * s * dt;
        pose.heading += v * steer.tan() / ego.vehicle.class.wheelbase() * dt;
        ego.vehicle.speed = (v + accel * dt).clamp(0.0, lim.max_speed);
        ego.steering = steer;
        let hint = ego.route_s;
        let poly = self.route.polyline();
        let proj = poly.project_window(pose.position, hint - 5.0, hint + 20.0);
        ego.route_s = proj.s.max(hint).min(poly.length());
    }

    fn step_participants(&self, state: &WorldState, dt: f64) -> Vec<ParticipantState> {
        let mut out = Vec::with_capacity(state.participants.len());
        for p in &state.participants {
            if p.dormant {
                out.push(p.clone());
                continue;
            }
            match &p.behavior {
                Behavior::Stationary | Behavior::Controlled => out.push(p.clone()),
                Behavior::LaneFollow { lane, s, v0 } => {
                    if let Some(q) = self.step_lane_follow(state, p, *lane, *s, *v0, dt) {
                        out.push(q);
                    }
                }
                Behavior::ScriptedTrajectory { points, elapsed } => {
                    let mut q = p.clone();
                    let t = elapsed + dt;
                    let (pos, heading, speed) = sample_script(points, t, p.pose.heading);
                    q.pose = Pose {
                        position: pos,
                        heading,
                    };
                    q.speed = speed;
                    q.behavior = Behavior::ScriptedTrajectory {
                        points: points.clone(),
                        elapsed: t,
                    };
                    out.push(q);
                }
            }
        }
        out
    }

    fn step_lane_follow(
        &self,
        state: &WorldState,
        p: &ParticipantState,
        lane: LaneId,
        s: f64,
        v0: f64,
        dt: f64,
    ) -> Option<ParticipantState> {
        let leader = self.lane_leader(state, p.id, lane, s, p.bbox.length);
        let params = IdmParams { v0, ..self.traffic_idm };
        let accel = match leader {
            Some((gap, lv)) => idm_acceleration(gap, p.speed, lv, &params),
            None => idm_acceleration(f64::INFINITY, p.speed, 0.0, &params),
        };
        let mut s_new = s + p.speed * dt;
        let speed = (p.speed + accel * dt).max(0.0);
        let mut lane_id = lane;
        loop {
            let l = self.network.lane(lane_id)?;
            let len = l.centerline.length();
            if s_new <= len {
                break;
            }
            // chain ends: the participant leaves the world
            let next = *l.successors.first()?;
            s_new -= len;
            lane_id = next;
        }
        let l = self.network.lane(lane_id)?;
        let mut q = p.clone();
        q.pose = Pose {
            position: l.centerline.point_at(s_new),
            heading: l.centerline.heading_at(s_new),
        };
        q.speed = speed;
        q.behavior = Behavior::LaneFollow {
            lane: lane_id,
            s: s_new,
            v0,
        };
        Some(q)
    }

    /// Bumper gap and along-lane speed of the nearest agent ahead on the lane chain.
    fn lane_leader(
        &self,
        state: &WorldState,
        self_id: ParticipantId,
        lane: LaneId,
        s: f64,
        self_len: f64,
    ) -> Option<(f64, f64)> {
        const LOOKAHEAD: f64 = 80.0;
        let mut chain: Vec<(&Lane, f64)> = Vec::new();
        let mut offset = 0.0;
        let mut cur = self.network.lane(lane);
        while let Some(l) = cur {
            chain.push((l, offset));
            offset += l.centerline.length();
            if offset - s > LOOKAHEAD || chain.len() > 8 {
                break;
            }
            cur = l.successors.first().and_then(|&id| self.network.lane(id));
        }
        let agents = std::iter::once(&state.ego.vehicle).chain(state.participants.iter());
        let mut best: Option<(f64, f64)> = None;
        for a in agents.filter(|a| a.id != self_id) {
            for &(l, off) in &chain {
                let proj = l.centerline.project_window(a.pose.position, 0.0, l.centerline.length());
                if proj.distance > 0.5 * l.width || proj.s < 0.0 || proj.s > l.centerline.length() {
                    continue;
                }
                let ahead = off + proj.s - s;
                if ahead <= 0.0 || ahead > LOOKAHEAD {
                    continue;
                }
                let gap = ahead - 0.5 * (self_len + a.bbox.length);
                let along = a.speed * (a.pose.heading - l.centerline.heading_at(proj.s)).cos();
                if best.is_none_or(|(g, _)| gap < g) {
                    best = Some((gap, along.max(0.0)));
                }
                break;
            }
        }
        best
    }

    fn fire_triggers(&self, state: &mut WorldState) {
        let c = state.ego.vehicle.pose.position;
        let mut inside_now = BTreeSet::new();
        for trig in &self.triggers {
            if !point_in_polygon(c, &trig.region) {
                continue;
            }
            inside_now.insert(trig.id);
            let entering = !state.inside_triggers.contains(&trig.id);
            let spent = trig.one_shot && state.fired_triggers.contains(&trig.id);
            if !entering || spent {
                continue;
            }
            state.fired_triggers.insert(trig.id);
            match &trig.event {
                TriggerEvent::Spawn { template } => {
                    if let Some(t) = self.templates.iter().find(|t| t.id == *template) {
                        if state.participant(t.id).is_none() {
                            let mut p = t.clone();
                            p.dormant = false;
                            state.insert_participant(p);
                        }
                    }
                }
                TriggerEvent::Activate { participant } => {
                    if let Some(p) = state.participants.iter_mut().find(|p| p.id == *participant) {
                        p.dormant = false;
                    }
                }
            }
        }
        state.inside_triggers = inside_now;
    }
}

fn sample_script(points: &[TimedPoint], t: f64, fallback_heading: f64) -> (Vec2, f64, f64) {
    match points {
        [] => (Vec2::ZERO, fallback_heading, 0.0),
        [only] => (only.position, fallback_heading, 0.0),
        _ => {
            if t <= points[0].t {
                let d = points[1].position - points[0].position;
                return (points[0].position, d.angle(), 0.0);
            }
            for w in points.windows(2) {
                let (a, b) = (w[0], w[1]);
                if t <= b.t {
                    let span = (b.t - a.t).max(1e-9);
                    let u = (t - a.t) / span;
                    let d = b.position - a.position;
                    let heading = if d.norm() > 0.0 { d.angle() } else { fallback_heading };
                    return (a.position + d * u, heading, d.norm() / span);
                }
            }
            let n = points.len();
            let d = points[n - 1].position - points[n - 2].position;
            let heading = if d.norm() > 0.0 { d.angle() } else { fallback_heading };
            (points[n - 1].position, heading, 0.0)
        }
    }
}
