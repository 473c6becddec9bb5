//! Ego-relative perception frames emulating a learned detector's outputs.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, Pose, Vec2};
use crate::world::{BBox, LaneId, ParticipantClass, ParticipantId, RoadNetwork, SignalColor, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub position: f64,
    pub speed: f64,
    pub heading: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SenseConfig {
    pub range: f64,
    /// Full field-of-view angle (rad), centered on the ego heading.
    pub fov: f64,
    pub noise: NoiseConfig,
    pub seed: u64,
}

impl Default for SenseConfig {
    fn default() -> Self {
        SenseConfig {
            range: 50.0,
            fov: TAU,
            noise: NoiseConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedObject {
    pub id: ParticipantId,
    pub class: ParticipantClass,
    /// Ego frame: x forward, y left (m).
    pub position: Vec2,
    pub speed: f64,
    /// Heading relative to the ego heading, (-pi, pi], counter-clockwise positive.
    pub heading: f64,
    pub bbox: BBox,
}

impl TrackedObject {
    pub fn range(&self) -> f64 {
        self.position.norm()
    }

    /// Velocity in the ego frame.
    pub fn velocity(&self) -> Vec2 {
        Vec2::from_angle(self.heading) * self.speed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    RedLight,
    YellowLight,
    GreenLight,
    StopSign,
}

impl From<SignalColor> for SignalKind {
    fn from(c: SignalColor) -> Self {
        match c {
            SignalColor::Red => SignalKind::RedLight,
            SignalColor::Yellow => SignalKind::YellowLight,
            SignalColor::Green => SignalKind::GreenLight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalDetection {
    pub kind: SignalKind,
    pub confidence: f64,
    /// From the ego front bumper to the stop line (m); euclidean for signals not on the ego path.
    pub distance: f64,
    pub governs_ego_lane: bool,
    /// Signal or stop-sign id in the road network.
    pub source_id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionFrame {
    pub tick: u64,
    pub ego_speed: f64,
    pub ego_pose: Pose,
    /// Sorted by ascending range, ties by id.
    pub objects: Vec<TrackedObject>,
    pub signals: Vec<SignalDetection>,
}

#[derive(Clone, Copy)]
enum Channel {
    X = 1,
    Y,
    Speed,
    Heading,
    Confidence,
}

/// Deterministic noise sample keyed on (seed, tick, entity, channel).
fn noise(cfg: &SenseConfig, tick: u64, entity: u64, channel: Channel, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    let mut h = cfg.seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [tick, entity, channel as u64] {
        h = (h ^ v).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(h);
    Normal::new(0.0, sigma).map(|n| n.sample(&mut rng)).unwrap_or(0.0)
}

fn in_view(local: Vec2, cfg: &SenseConfig) -> bool {
    let r = local.norm();
    if r > cfg.range {
        return false;
    }
    cfg.fov >= TAU || r == 0.0 || local.angle().abs() <= 0.5 * cfg.fov
}

/// Produces the perception frame for the current world snapshot. Pure in (state, network, cfg).
pub fn sense(state: &WorldState, net: &RoadNetwork, cfg: &SenseConfig) -> PerceptionFrame {
    let ego = &state.ego.vehicle;
    let ego_pose = ego.pose;
    let tick = state.tick;
    let sig = cfg.noise;

    let mut objects: Vec<TrackedObject> = state
        .participants
        .iter()
        .filter_map(|p| {
            let local = ego_pose.to_local(p.pose.position);
            if !in_view(local, cfg) {
                return None;
            }
            let id = u64::from(p.id);
            let position = local
                + Vec2::new(
                    noise(cfg, tick, id, Channel::X, sig.position),
                    noise(cfg, tick, id, Channel::Y, sig.position),
                );
            let speed = (p.speed + noise(cfg, tick, id, Channel::Speed, sig.speed)).max(0.0);
            let heading = normalize_angle(
                p.pose.heading - ego_pose.heading + noise(cfg, tick, id, Channel::Heading, sig.heading),
            );
            Some(TrackedObject {
                id: p.id,
                class: p.class,
                position,
                speed,
                heading,
                bbox: p.bbox,
            })
        })
        .collect();
    objects.sort_by(|a, b| a.range().total_cmp(&b.range()).then(a.id.cmp(&b.id)));

    let signals = detect_signals(state, net, cfg);

    PerceptionFrame {
        tick,
        ego_speed: ego.speed,
        ego_pose,
        objects,
        signals,
    }
}

/// Distance along the ego path from the front bumper to a stop line on `lane`, if ahead.
fn distance_along_path(net: &RoadNetwork, ego_lane: LaneId, ego_front_s: f64, lane: LaneId, p: Vec2) -> Option<f64> {
    let el = net.lane(ego_lane)?;
    if lane == ego_lane {
        let s = el.centerline.project(p).s;
        return (s >= ego_front_s).then_some(s - ego_front_s);
    }
    if el.successors.contains(&lane) {
        let s = net.lane(lane)?.centerline.project(p).s;
        return Some((el.centerline.length() - ego_front_s).max(0.0) + s);
    }
    None
}

fn detect_signals(state: &WorldState, net: &RoadNetwork, cfg: &SenseConfig) -> Vec<SignalDetection> {
    let ego = &state.ego.vehicle;
    let loc = net.locate(&ego.pose);
    let ego_lane = loc.on_road().map(|l| (l.lane, l.s + 0.5 * ego.bbox.length));
    let tick = state.tick;

    let confidence = |d: f64, entity: u64| {
        let base = (1.0 - d / cfg.range).clamp(0.0, 1.0);
        (base + noise(cfg, tick, entity, Channel::Confidence, cfg.noise.confidence)).clamp(0.0, 1.0)
    };

    let mut out = Vec::new();
    for (i, s) in net.signals.iter().enumerate() {
        let local = ego.pose.to_local(s.position);
        if !in_view(local, cfg) {
            continue;
        }
        let color = state
            .signal_phases
            .get(i)
            .filter(|(id, _)| *id == s.id)
            .map(|(_, c)| *c)
            .unwrap_or_else(|| s.schedule.color_at(state.sim_time));
        let along = ego_lane.and_then(|(lane, front_s)| {
            s.lanes
                .iter()
                .filter_map(|&l| distance_along_path(net, lane, front_s, l, s.position))
                .min_by(f64::total_cmp)
        });
        let governs = along.is_some();
        let distance = along.unwrap_or_else(|| local.norm());
        if governs && distance > cfg.range {
            continue;
        }
        out.push(SignalDetection {
            kind: color.into(),
            confidence: confidence(distance, 1_000_000 + u64::from(s.id)),
            distance,
            governs_ego_lane: governs,
            source_id: s.id,
        });
    }
    for st in &net.stop_signs {
        let local = ego.pose.to_local(st.position);
        if !in_view(local, cfg) {
            continue;
        }
        let along = ego_lane.and_then(|(lane, front_s)| distance_along_path(net, lane, front_s, st.lane, st.position));
        let governs = along.is_some();
        let distance = along.unwrap_or_else(|| local.norm());
        if governs && distance > cfg.range {
            continue;
        }
        out.push(SignalDetection {
            kind: SignalKind::StopSign,
            confidence: confidence(distance, 2_000_000 + u64::from(st.id)),
            distance,
            governs_ego_lane: governs,
            source_id: st.id,
        });
    }
    out.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.source_id.cmp(&b.source_id)));
    out
}
