//! Scene description rendering and decision parsing.

mod decision;

pub use decision::*;

use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, TAU};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geometry::{Pose, Vec2};
use crate::perception::{PerceptionFrame, SignalDetection, SignalKind, TrackedObject};
use crate::world::{Lane, LaneId, LaneLocation, Location, Neighbor, ParticipantClass, RoadNetwork};

/// Bumped whenever rendered text changes.
pub const TEMPLATE_VERSION: u32 = 1;

/// Participants listed individually in the text.
pub const MAX_LISTED: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoadContext {
    RegularLane,
    Intersection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjacency {
    None,
    SameDir,
    OppositeDir,
}

impl From<Option<&Neighbor>> for Adjacency {
    fn from(n: Option<&Neighbor>) -> Self {
        match n {
            None => Adjacency::None,
            Some(n) if n.same_direction => Adjacency::SameDir,
            Some(_) => Adjacency::OppositeDir,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalAhead {
    None,
    Red,
    Yellow,
    Green,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoadContextDesc {
    pub context: RoadContext,
    pub left: Adjacency,
    pub right: Adjacency,
    pub signal_ahead: SignalAhead,
    pub stop_sign_ahead: bool,
    /// Ego could not be placed on a lane.
    pub off_road: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Heading8 {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl Heading8 {
    pub const ALL: [Heading8; 8] = [
        Heading8::N,
        Heading8::NE,
        Heading8::E,
        Heading8::SE,
        Heading8::S,
        Heading8::SW,
        Heading8::W,
        Heading8::NW,
    ];

    pub fn word(self) -> &'static str {
        match self {
            Heading8::N => "north",
            Heading8::NE => "north-east",
            Heading8::E => "east",
            Heading8::SE => "south-east",
            Heading8::S => "south",
            Heading8::SW => "south-west",
            Heading8::W => "west",
            Heading8::NW => "north-west",
        }
    }

    fn is_southward(self) -> bool {
        matches!(self, Heading8::S | Heading8::SW | Heading8::SE)
    }
}

/// Sector of a compass bearing (clockwise from the ego travel direction).
pub fn discretize_heading(bearing: f64) -> Heading8 {
    let shifted = (bearing + FRAC_PI_8).rem_euclid(TAU);
    let k = ((shifted / FRAC_PI_4).floor() as usize).min(7);
    Heading8::ALL[k]
}

/// Compass sector of an object heading given counter-clockwise relative to the ego.
pub fn heading_of(obj: &TrackedObject) -> Heading8 {
    discretize_heading(-obj.heading)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionBucket {
    AheadInLane,
    AheadLeftLane,
    AheadRightLane,
    Oncoming,
    Behind,
    CrossingLeft,
    CrossingRight,
}

impl PositionBucket {
    fn phrase(self) -> &'static str {
        match self {
            PositionBucket::AheadInLane => "ahead in your lane",
            PositionBucket::AheadLeftLane => "ahead in the left lane",
            PositionBucket::AheadRightLane => "ahead in the right lane",
            PositionBucket::Oncoming => "oncoming",
            PositionBucket::Behind => "behind you",
            PositionBucket::CrossingLeft => "crossing from the left",
            PositionBucket::CrossingRight => "crossing from the right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    Stationary,
    Slow,
    Moving,
}

impl Motion {
    pub fn of(speed: f64) -> Motion {
        if speed < 0.5 {
            Motion::Stationary
        } else if speed < 3.0 {
            Motion::Slow
        } else {
            Motion::Moving
        }
    }

    fn word(self) -> &'static str {
        match self {
            Motion::Stationary => "stationary",
            Motion::Slow => "slow-moving",
            Motion::Moving => "moving",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantDesc {
    pub position_bucket: PositionBucket,
    pub heading_8: Heading8,
    pub class: ParticipantClass,
    pub motion: Motion,
    /// Bucketed by geometry because the object was not on a related lane.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredScene {
    pub road: RoadContextDesc,
    pub participants: Vec<ParticipantDesc>,
    pub ego_speed: Motion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneDescription {
    pub structured: StructuredScene,
    pub text: String,
    /// Short hash of the structured form; equal scenes share a digest.
    pub digest: String,
}

fn nearest_governing(signals: &[SignalDetection], pred: impl Fn(SignalKind) -> bool) -> Option<&SignalDetection> {
    signals
        .iter()
        .filter(|d| d.governs_ego_lane && pred(d.kind))
        .min_by(|a, b| a.distance.total_cmp(&b.distance))
}

pub fn encode_topology(location: &Location, net: &RoadNetwork, signals: &[SignalDetection]) -> RoadContextDesc {
    let light = nearest_governing(signals, |k| k != SignalKind::StopSign);
    let signal_ahead = match light.map(|d| d.kind) {
        Some(SignalKind::RedLight) => SignalAhead::Red,
        Some(SignalKind::YellowLight) => SignalAhead::Yellow,
        Some(SignalKind::GreenLight) => SignalAhead::Green,
        _ => SignalAhead::None,
    };
    let stop_sign_ahead = nearest_governing(signals, |k| k == SignalKind::StopSign).is_some();
    let mut desc = RoadContextDesc {
        context: RoadContext::RegularLane,
        left: Adjacency::None,
        right: Adjacency::None,
        signal_ahead,
        stop_sign_ahead,
        off_road: true,
    };
    if let Some(loc) = location.on_road() {
        if let Some(lane) = net.lane(loc.lane) {
            desc.off_road = false;
            desc.context = if loc.in_junction {
                RoadContext::Intersection
            } else {
                RoadContext::RegularLane
            };
            desc.left = lane.left.as_ref().into();
            desc.right = lane.right.as_ref().into();
        }
    }
    desc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Relation {
    Ego,
    Left(bool),
    Right(bool),
}

/// How `lane` relates to the ego lane, looking one successor hop along each candidate.
fn relation(ego: &Lane, lane: LaneId, net: &RoadNetwork) -> Option<Relation> {
    let matches = |root: LaneId| {
        root == lane || net.lane(root).is_some_and(|l| l.successors.contains(&lane) || net_predecessor(net, root, lane))
    };
    if matches(ego.id) {
        return Some(Relation::Ego);
    }
    if let Some(n) = &ego.left {
        if matches(n.lane) {
            return Some(Relation::Left(n.same_direction));
        }
    }
    if let Some(n) = &ego.right {
        if matches(n.lane) {
            return Some(Relation::Right(n.same_direction));
        }
    }
    None
}

fn net_predecessor(net: &RoadNetwork, root: LaneId, lane: LaneId) -> bool {
    net.lane(lane).is_some_and(|l| l.successors.contains(&root))
}

/// Returns the bucket and whether the geometric fallback was used.
pub fn bucket_position(
    obj: &TrackedObject,
    ego_pose: &Pose,
    ego: &LaneLocation,
    net: &RoadNetwork,
) -> (PositionBucket, bool) {
    let h8 = heading_of(obj);
    let p = obj.position;
    let ego_lane = net.lane(ego.lane);
    let half_width = ego_lane.map_or(1.75, |l| 0.5 * l.width);

    if matches!(h8, Heading8::E | Heading8::W) && p.x > 0.0 {
        let end = p + obj.velocity() * 5.0;
        let (lo, hi) = if p.y < end.y { (p.y, end.y) } else { (end.y, p.y) };
        if lo <= half_width && hi >= -half_width && (obj.speed >= 0.5 || p.y.abs() <= half_width) {
            let from_left = if p.y.abs() > half_width { p.y > 0.0 } else { h8 == Heading8::E };
            let b = if from_left {
                PositionBucket::CrossingLeft
            } else {
                PositionBucket::CrossingRight
            };
            return (b, false);
        }
    }

    let world = Pose {
        position: ego_pose.to_world(p),
        heading: ego_pose.heading + obj.heading,
    };
    let rel = match (ego_lane, net.locate(&world)) {
        (Some(l), Location::OnRoad(o)) => relation(l, o.lane, net),
        _ => None,
    };
    let behind = p.x < 0.0;
    let bucket = match rel {
        Some(Relation::Ego) if behind => PositionBucket::Behind,
        Some(Relation::Ego) => PositionBucket::AheadInLane,
        Some(Relation::Left(same)) | Some(Relation::Right(same)) if !same && h8.is_southward() => {
            PositionBucket::Oncoming
        }
        Some(_) if behind => PositionBucket::Behind,
        Some(Relation::Left(_)) => PositionBucket::AheadLeftLane,
        Some(Relation::Right(_)) => PositionBucket::AheadRightLane,
        None => return (geometric_bucket(p, h8, half_width), true),
    };
    (bucket, false)
}

fn geometric_bucket(p: Vec2, h8: Heading8, half_width: f64) -> PositionBucket {
    if p.x < 0.0 {
        PositionBucket::Behind
    } else if p.y > half_width {
        if h8.is_southward() {
            PositionBucket::Oncoming
        } else {
            PositionBucket::AheadLeftLane
        }
    } else if p.y < -half_width {
        if h8.is_southward() {
            PositionBucket::Oncoming
        } else {
            PositionBucket::AheadRightLane
        }
    } else {
        PositionBucket::AheadInLane
    }
}

pub fn encode_scene(frame: &PerceptionFrame, location: &Location, net: &RoadNetwork) -> SceneDescription {
    let road = encode_topology(location, net, &frame.signals);
    let mut objects: Vec<&TrackedObject> = frame.objects.iter().collect();
    objects.sort_by(|a, b| a.range().total_cmp(&b.range()).then(a.id.cmp(&b.id)));
    let fallback_loc = LaneLocation {
        lane: match location {
            Location::OnRoad(l) => l.lane,
            Location::OffRoad { nearest_lane, .. } => *nearest_lane,
        },
        s: 0.0,
        lateral: 0.0,
        in_junction: false,
    };
    let ego_loc = location.on_road().copied().unwrap_or(fallback_loc);
    let participants = objects
        .into_iter()
        .map(|o| {
            let (position_bucket, fallback) = bucket_position(o, &frame.ego_pose, &ego_loc, net);
            ParticipantDesc {
                position_bucket,
                heading_8: heading_of(o),
                class: o.class,
                motion: Motion::of(o.speed),
                fallback,
            }
        })
        .collect();
    let structured = StructuredScene {
        road,
        participants,
        ego_speed: Motion::of(frame.ego_speed),
    };
    SceneDescription::from_structured(structured)
}

impl SceneDescription {
    pub fn from_structured(structured: StructuredScene) -> Self {
        let text = render(&structured);
        let digest = digest(&structured);
        SceneDescription {
            structured,
            text,
            digest,
        }
    }
}

pub fn digest(structured: &StructuredScene) -> String {
    let bytes = serde_json::to_vec(&(TEMPLATE_VERSION, structured)).expect("scene serializes");
    let hash = Sha256::digest(&bytes);
    hex::encode(&hash[..8])
}

fn adjacency_sentence(side: &str, a: Adjacency) -> String {
    match a {
        Adjacency::None => format!("No lane on your {side}."),
        Adjacency::SameDir => format!("There is a same-direction lane on your {side}."),
        Adjacency::OppositeDir => format!("There is an opposite-direction lane on your {side}."),
    }
}

pub fn render(s: &StructuredScene) -> String {
    let r = &s.road;
    let mut out = String::new();
    out.push_str(match r.context {
        RoadContext::RegularLane => "You are driving in a regular lane.",
        RoadContext::Intersection => "You are driving inside an intersection.",
    });
    if r.left == Adjacency::None && r.right == Adjacency::None {
        out.push_str(" No adjacent lanes.");
    } else {
        out.push(' ');
        out.push_str(&adjacency_sentence("left", r.left));
        out.push(' ');
        out.push_str(&adjacency_sentence("right", r.right));
    }
    out.push_str(match r.signal_ahead {
        SignalAhead::None => " No traffic signal ahead.",
        SignalAhead::Red => " The traffic light ahead is red.",
        SignalAhead::Yellow => " The traffic light ahead is yellow.",
        SignalAhead::Green => " The traffic light ahead is green.",
    });
    if r.stop_sign_ahead {
        out.push_str(" There is a stop sign ahead.");
    }
    let n = s.participants.len();
    match n {
        0 => out.push_str(" No other traffic participants detected."),
        1 => out.push_str(" 1 other traffic participant detected"),
        _ if n <= MAX_LISTED => {
            let _ = write!(out, " {n} other traffic participants detected");
        }
        _ => {
            let _ = write!(out, " More than {MAX_LISTED} other traffic participants detected, nearest first");
        }
    }
    if n > 0 {
        out.push_str(" (headings relative to your travel direction, which is north):");
        for (i, p) in s.participants.iter().take(MAX_LISTED).enumerate() {
            let _ = write!(
                out,
                "\n{}. A {} {} {}, heading {}.",
                i + 1,
                p.motion.word(),
                p.class.label(),
                p.position_bucket.phrase(),
                p.heading_8.word()
            );
        }
    }
    out
}

#[cfg(test)]
mod tests;
