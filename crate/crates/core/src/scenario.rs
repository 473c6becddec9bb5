//! TOML scenario documents.
//!
//! ```toml
//! schema_version = 1
//! name = "straight"
//!
//! [[lanes]]
//! id = 1
//! centerline = [[0.0, 0.0], [100.0, 0.0]]
//! width = 3.5
//!
//! [route]
//! lanes = [1]
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arbiter::ArbiterConfig;
use crate::bench::BenchConfig;
use crate::codec::Vocabulary;
use crate::geometry::{polygon_is_convex, Polyline, Pose, Vec2};
use crate::perception::SenseConfig;
use crate::planner::PlannerConfig;
use crate::safety::{IdmParams, SafetyConfig};
use crate::world::{
    BBox, Behavior, EgoState, GeofenceTrigger, Junction, Lane, LaneId, Neighbor, NetworkError, ParticipantClass,
    ParticipantId, ParticipantState, RoadNetwork, Route, Signal, SignalSchedule, StopSign, TimedPoint, TriggerEvent,
    VehicleLimits, World, WorldState, DEFAULT_DT, EGO_ID,
};

pub const SCHEMA_VERSION: u32 = 1;

type Point = [f64; 2];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct LaneDoc {
    id: LaneId,
    centerline: Vec<Point>,
    width: f64,
    #[serde(default)]
    successors: Vec<LaneId>,
    left: Option<Neighbor>,
    right: Option<Neighbor>,
    #[serde(default = "default_speed_limit")]
    speed_limit: f64,
}

fn default_speed_limit() -> f64 {
    10.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct JunctionDoc {
    id: u32,
    polygon: Vec<Point>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SignalDoc {
    id: u32,
    position: Point,
    lanes: Vec<LaneId>,
    green: f64,
    yellow: f64,
    red: f64,
    #[serde(default)]
    offset: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct StopSignDoc {
    id: u32,
    position: Point,
    lane: LaneId,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RouteDoc {
    lanes: Vec<LaneId>,
    /// Informational goal points; the route follows the lane centerlines.
    #[serde(default)]
    waypoints: Vec<Point>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct EgoDoc {
    #[serde(default = "default_class")]
    class: ParticipantClass,
    #[serde(default = "default_bbox")]
    bbox: [f64; 2],
    #[serde(default)]
    speed: f64,
}

impl Default for EgoDoc {
    fn default() -> Self {
        EgoDoc {
            class: default_class(),
            bbox: default_bbox(),
            speed: 0.0,
        }
    }
}

fn default_class() -> ParticipantClass {
    ParticipantClass::Car
}

fn default_bbox() -> [f64; 2] {
    [4.6, 2.0]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum BehaviorDoc {
    Stationary,
    LaneFollow { lane: LaneId, v0: f64 },
    /// Points are `[x, y, t]` with t relative to activation.
    ScriptedTrajectory { points: Vec<[f64; 3]> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParticipantDoc {
    id: ParticipantId,
    class: ParticipantClass,
    /// `[x, y, heading]`.
    pose: [f64; 3],
    #[serde(default)]
    speed: f64,
    bbox: [f64; 2],
    #[serde(default = "stationary")]
    behavior: BehaviorDoc,
    #[serde(default)]
    dormant: bool,
}

fn stationary() -> BehaviorDoc {
    BehaviorDoc::Stationary
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TriggerDoc {
    id: u32,
    region: Vec<Point>,
    event: TriggerEvent,
    #[serde(default = "yes")]
    one_shot: bool,
}

fn yes() -> bool {
    true
}

/// How a scripted advisor is wired when none is given on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdvisorSettings {
    /// JSON map of scene digest to reply text, relative to the scenario file.
    pub script: Option<PathBuf>,
    /// Simulated reply latency in fast ticks.
    pub latency_ticks: u64,
}

impl Default for AdvisorSettings {
    fn default() -> Self {
        AdvisorSettings {
            script: None,
            latency_ticks: 10,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    schema_version: u32,
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default = "default_dt")]
    dt: f64,
    #[serde(default = "default_margin")]
    off_road_margin: f64,
    lanes: Vec<LaneDoc>,
    #[serde(default)]
    junctions: Vec<JunctionDoc>,
    #[serde(default)]
    signals: Vec<SignalDoc>,
    #[serde(default)]
    stop_signs: Vec<StopSignDoc>,
    route: RouteDoc,
    #[serde(default)]
    ego: EgoDoc,
    #[serde(default)]
    participants: Vec<ParticipantDoc>,
    #[serde(default)]
    templates: Vec<ParticipantDoc>,
    #[serde(default)]
    triggers: Vec<TriggerDoc>,
    #[serde(default)]
    sense: SenseConfig,
    #[serde(default)]
    safety: SafetyConfig,
    #[serde(default)]
    arbiter: ArbiterConfig,
    #[serde(default)]
    planner: PlannerConfig,
    #[serde(default)]
    limits: VehicleLimits,
    #[serde(default)]
    traffic_idm: IdmParams,
    #[serde(default)]
    bench: BenchConfig,
    #[serde(default)]
    vocabulary: Vocabulary,
    #[serde(default)]
    advisor: AdvisorSettings,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_margin() -> f64 {
    1.0
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("schema: {0}")]
    Schema(String),
    #[error("unsupported schema_version {0}, expected {SCHEMA_VERSION}")]
    Version(u32),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("validation: {0}")]
    Network(#[from] NetworkError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

/// A loaded, validated scenario with its initial state and stack configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub source: Option<PathBuf>,
    /// Hex prefix of the SHA-256 of the document text.
    pub digest: String,
    pub world: World,
    pub initial: WorldState,
    pub sense: SenseConfig,
    pub safety: SafetyConfig,
    pub arbiter: ArbiterConfig,
    pub planner: PlannerConfig,
    pub bench: BenchConfig,
    pub vocabulary: Vocabulary,
    pub advisor: AdvisorSettings,
}

impl Scenario {
    /// Advisor script path resolved against the scenario's directory.
    pub fn advisor_script(&self) -> Option<PathBuf> {
        let script = self.advisor.script.as_ref()?;
        Some(match self.source.as_deref().and_then(Path::parent) {
            Some(dir) if script.is_relative() => dir.join(script),
            _ => script.clone(),
        })
    }
}

fn vec2(p: Point) -> Vec2 {
    Vec2::new(p[0], p[1])
}

fn polyline(field: String, pts: &[Point]) -> Result<Polyline, ScenarioError> {
    Polyline::new(pts.iter().copied().map(vec2).collect()).map_err(|e| invalid(field, e.to_string()))
}

fn bbox(field: &str, b: [f64; 2]) -> Result<BBox, ScenarioError> {
    if !(b[0] > 0.0 && b[1] > 0.0) {
        return Err(invalid(field, "bbox dimensions must be positive"));
    }
    Ok(BBox::from(b))
}

fn participant(field: &str, d: &ParticipantDoc, net: &RoadNetwork) -> Result<ParticipantState, ScenarioError> {
    if d.id == EGO_ID {
        return Err(invalid(format!("{field}.id"), format!("id {EGO_ID} is reserved for the ego")));
    }
    let pose = Pose::new(d.pose[0], d.pose[1], d.pose[2]);
    if !(pose.position.is_finite() && pose.heading.is_finite() && d.speed.is_finite() && d.speed >= 0.0) {
        return Err(invalid(format!("{field}.pose"), "pose and speed must be finite, speed non-negative"));
    }
    let behavior = match &d.behavior {
        BehaviorDoc::Stationary => Behavior::Stationary,
        BehaviorDoc::LaneFollow { lane, v0 } => {
            let s = net
                .lane_s(*lane, pose.position)
                .ok_or_else(|| invalid(format!("{field}.behavior.lane"), format!("unknown lane {lane}")))?;
            Behavior::LaneFollow { lane: *lane, s, v0: *v0 }
        }
        BehaviorDoc::ScriptedTrajectory { points } => {
            if points.is_empty() || points.windows(2).any(|w| !(w[1][2] > w[0][2])) {
                return Err(invalid(
                    format!("{field}.behavior.points"),
                    "needs at least one point with strictly increasing times",
                ));
            }
            Behavior::ScriptedTrajectory {
                points: points.iter().copied().map(TimedPoint::from).collect(),
                elapsed: 0.0,
            }
        }
    };
    Ok(ParticipantState {
        id: d.id,
        class: d.class,
        pose,
        speed: d.speed,
        bbox: bbox(&format!("{field}.bbox"), d.bbox)?,
        behavior,
        dormant: d.dormant,
    })
}

fn text_digest(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDoc = toml::from_str(text).map_err(|e| ScenarioError::Schema(e.to_string()))?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(ScenarioError::Version(doc.schema_version));
    }
    if !(doc.dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }

    let lanes = doc
        .lanes
        .iter()
        .enumerate()
        .map(|(i, l)| {
            Ok(Lane {
                id: l.id,
                centerline: polyline(format!("lanes[{i}].centerline"), &l.centerline)?,
                width: l.width,
                successors: l.successors.clone(),
                left: l.left,
                right: l.right,
                speed_limit: l.speed_limit,
            })
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    let junctions = doc
        .junctions
        .iter()
        .map(|j| Junction {
            id: j.id,
            polygon: j.polygon.iter().copied().map(vec2).collect(),
        })
        .collect();
    let signals = doc
        .signals
        .iter()
        .map(|s| Signal {
            id: s.id,
            position: vec2(s.position),
            lanes: s.lanes.clone(),
            schedule: SignalSchedule {
                green: s.green,
                yellow: s.yellow,
                red: s.red,
                offset: s.offset,
            },
        })
        .collect();
    let stop_signs = doc
        .stop_signs
        .iter()
        .map(|s| StopSign {
            id: s.id,
            position: vec2(s.position),
            lane: s.lane,
        })
        .collect();
    let network = RoadNetwork::new(lanes, junctions, signals, stop_signs, doc.off_road_margin)?;
    let route = Route::new(
        doc.route.lanes.clone(),
        doc.route.waypoints.iter().copied().map(vec2).collect(),
        &network,
    )?;

    let mut ids = BTreeSet::new();
    let mut participants = Vec::new();
    for (i, d) in doc.participants.iter().enumerate() {
        let field = format!("participants[{i}]");
        if !ids.insert(d.id) {
            return Err(invalid(format!("{field}.id"), format!("duplicate id {}", d.id)));
        }
        participants.push(participant(&field, d, &network)?);
    }
    participants.sort_by_key(|p| p.id);
    let mut templates = Vec::new();
    for (i, d) in doc.templates.iter().enumerate() {
        let field = format!("templates[{i}]");
        if ids.contains(&d.id) || templates.iter().any(|t: &ParticipantState| t.id == d.id) {
            return Err(invalid(format!("{field}.id"), format!("duplicate id {}", d.id)));
        }
        templates.push(participant(&field, d, &network)?);
    }

    let mut triggers = Vec::new();
    for (i, t) in doc.triggers.iter().enumerate() {
        let field = format!("triggers[{i}]");
        let region: Vec<Vec2> = t.region.iter().copied().map(vec2).collect();
        if region.len() < 3 || !polygon_is_convex(&region) {
            return Err(invalid(format!("{field}.region"), "must be a convex polygon"));
        }
        match t.event {
            TriggerEvent::Spawn { template } if !templates.iter().any(|p| p.id == template) => {
                return Err(invalid(format!("{field}.event"), format!("unknown template {template}")));
            }
            TriggerEvent::Activate { participant } if !ids.contains(&participant) => {
                return Err(invalid(format!("{field}.event"), format!("unknown participant {participant}")));
            }
            _ => {}
        }
        triggers.push(GeofenceTrigger {
            id: t.id,
            region,
            event: t.event.clone(),
            one_shot: t.one_shot,
        });
    }

    doc.safety.validate().map_err(|m| invalid("safety", m))?;
    doc.arbiter.validate().map_err(|m| invalid("arbiter", m))?;
    doc.vocabulary.validate().map_err(|m| invalid("vocabulary", m))?;
    doc.bench.validate().map_err(|m| invalid("bench", m))?;

    let world = World {
        network,
        route,
        triggers,
        templates,
        dt: doc.dt,
        limits: doc.limits,
        traffic_idm: doc.traffic_idm,
    };
    let ego = ParticipantState {
        id: EGO_ID,
        class: doc.ego.class,
        pose: world.route.origin(),
        speed: doc.ego.speed,
        bbox: bbox("ego.bbox", doc.ego.bbox)?,
        behavior: Behavior::Controlled,
        dormant: false,
    };
    let initial = WorldState {
        tick: 0,
        sim_time: 0.0,
        ego: EgoState {
            vehicle: ego,
            steering: 0.0,
            route_s: 0.0,
        },
        participants,
        signal_phases: world.signal_phases_at(0.0),
        fired_triggers: BTreeSet::new(),
        inside_triggers: BTreeSet::new(),
    };

    Ok(Scenario {
        name: doc.name,
        description: doc.description,
        source: None,
        digest: text_digest(text),
        world,
        initial,
        sense: doc.sense,
        safety: doc.safety,
        arbiter: doc.arbiter,
        planner: doc.planner,
        bench: doc.bench,
        vocabulary: doc.vocabulary,
        advisor: doc.advisor,
    })
}

pub fn load_scenario_file(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut s = load_scenario(&text)?;
    s.source = Some(path.to_path_buf());
    Ok(s)
}
