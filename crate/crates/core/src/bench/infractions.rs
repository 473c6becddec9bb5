use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::safety::SafetyConfig;
use crate::trace::TickRecord;
use crate::world::{LaneId, ParticipantClass, ParticipantId, ParticipantState, RoadNetwork, SignalColor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfractionKind {
    CollisionPedestrian,
    CollisionVehicle,
    CollisionStatic,
    RedLight,
    StopSign,
}

impl InfractionKind {
    pub const ALL: [InfractionKind; 5] = [
        InfractionKind::CollisionPedestrian,
        InfractionKind::CollisionVehicle,
        InfractionKind::CollisionStatic,
        InfractionKind::RedLight,
        InfractionKind::StopSign,
    ];

    pub fn is_collision(self) -> bool {
        matches!(
            self,
            InfractionKind::CollisionPedestrian | InfractionKind::CollisionVehicle | InfractionKind::CollisionStatic
        )
    }

    pub fn collision_with(class: ParticipantClass) -> Self {
        match class {
            ParticipantClass::Pedestrian => InfractionKind::CollisionPedestrian,
            ParticipantClass::StaticObstacle => InfractionKind::CollisionStatic,
            ParticipantClass::Car | ParticipantClass::Truck | ParticipantClass::Bicycle => {
                InfractionKind::CollisionVehicle
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfractionEvent {
    pub kind: InfractionKind,
    pub tick: u64,
    /// Ego position when the event was recorded.
    pub position: Vec2,
    /// Participant, signal or stop-sign id involved.
    pub other: u32,
}

/// Stop-sign full-stop requirement, mirroring the controller's latch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub speed: f64,
    pub time: f64,
    pub radius: f64,
}

impl From<&SafetyConfig> for StopRule {
    fn from(c: &SafetyConfig) -> Self {
        StopRule {
            speed: c.stop_latch_speed,
            time: c.stop_latch_time,
            radius: c.stop_latch_radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Control {
    Signal(u32),
    StopSign(u32),
}

#[derive(Debug, Clone)]
struct StopLine {
    control: Control,
    point: Vec2,
    tangent: Vec2,
    half_width: f64,
}

impl StopLine {
    fn on(net: &RoadNetwork, control: Control, lane: LaneId, p: Vec2) -> Option<Self> {
        let l = net.lane(lane)?;
        let s = l.centerline.project(p).s;
        Some(StopLine {
            control,
            point: l.centerline.point_at(s),
            tangent: l.centerline.tangent_at(s),
            half_width: 0.5 * l.width,
        })
    }

    /// (along, lateral) of `p` relative to the line; along is negative before it.
    fn relative(&self, p: Vec2) -> (f64, f64) {
        let d = p - self.point;
        (d.dot(self.tangent), d.dot(self.tangent.perp()))
    }
}

fn front_bumper(ego: &ParticipantState) -> Vec2 {
    ego.pose.position + Vec2::from_angle(ego.pose.heading) * (0.5 * ego.bbox.length)
}

/// Incremental infraction detector; feeding it a trace tick by tick yields
/// the same events as [`detect_infractions`] on the whole trace.
#[derive(Debug, Clone)]
pub struct InfractionDetector {
    lines: Vec<StopLine>,
    rule: StopRule,
    contacts: BTreeSet<ParticipantId>,
    still: BTreeMap<usize, f64>,
    satisfied: BTreeSet<usize>,
    prev: Option<(Vec2, Vec<(u32, SignalColor)>)>,
}

impl InfractionDetector {
    pub fn new(net: &RoadNetwork, rule: StopRule) -> Self {
        let mut lines = Vec::new();
        for s in &net.signals {
            for &lane in &s.lanes {
                lines.extend(StopLine::on(net, Control::Signal(s.id), lane, s.position));
            }
        }
        for st in &net.stop_signs {
            lines.extend(StopLine::on(net, Control::StopSign(st.id), st.lane, st.position));
        }
        InfractionDetector {
            lines,
            rule,
            contacts: BTreeSet::new(),
            still: BTreeMap::new(),
            satisfied: BTreeSet::new(),
            prev: None,
        }
    }

    pub fn observe(&mut self, rec: &TickRecord, dt: f64) -> Vec<InfractionEvent> {
        let mut out = Vec::new();
        let ego = &rec.ego;
        let at = ego.pose.position;

        let fp = ego.footprint();
        let mut touching = BTreeSet::new();
        for p in &rec.participants {
            if fp.overlaps(&p.footprint()) {
                touching.insert(p.id);
                if !self.contacts.contains(&p.id) {
                    out.push(InfractionEvent {
                        kind: InfractionKind::collision_with(p.class),
                        tick: rec.tick,
                        position: at,
                        other: p.id,
                    });
                }
            }
        }
        self.contacts = touching;

        let front = front_bumper(ego);
        for (i, line) in self.lines.iter().enumerate() {
            let (along, lateral) = line.relative(front);
            let in_lane = lateral.abs() <= line.half_width;
            if let Control::StopSign(_) = line.control {
                let still = self.still.entry(i).or_insert(0.0);
                if in_lane && (-self.rule.radius..=0.0).contains(&along) && ego.speed <= self.rule.speed {
                    *still += dt;
                    if *still >= self.rule.time - 1e-9 {
                        self.satisfied.insert(i);
                    }
                } else {
                    *still = 0.0;
                }
            }
            let Some((prev_front, prev_phases)) = &self.prev else {
                continue;
            };
            let (prev_along, _) = line.relative(*prev_front);
            if !(prev_along < 0.0 && along >= 0.0 && in_lane) {
                continue;
            }
            match line.control {
                Control::Signal(id) => {
                    let red = prev_phases.iter().any(|&(s, c)| s == id && c == SignalColor::Red);
                    if red {
                        out.push(InfractionEvent {
                            kind: InfractionKind::RedLight,
                            tick: rec.tick,
                            position: at,
                            other: id,
                        });
                    }
                }
                Control::StopSign(id) => {
                    if !self.satisfied.remove(&i) {
                        out.push(InfractionEvent {
                            kind: InfractionKind::StopSign,
                            tick: rec.tick,
                            position: at,
                            other: id,
                        });
                    }
                }
            }
        }
        self.prev = Some((front, rec.signal_phases.clone()));
        out
    }
}

/// All infractions in a trace. Pure in its inputs.
pub fn detect_infractions(ticks: &[TickRecord], net: &RoadNetwork, rule: StopRule, dt: f64) -> Vec<InfractionEvent> {
    let mut det = InfractionDetector::new(net, rule);
    ticks.iter().flat_map(|t| det.observe(t, dt)).collect()
}
