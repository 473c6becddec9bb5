use serde::{Deserialize, Serialize};

use crate::geometry::{point_in_polygon, polygon_is_simple, Polyline, Pose, Vec2};

pub type LaneId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Neighbor {
    pub lane: LaneId,
    pub same_direction: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub id: LaneId,
    pub centerline: Polyline,
    pub width: f64,
    pub successors: Vec<LaneId>,
    pub left: Option<Neighbor>,
    pub right: Option<Neighbor>,
    pub speed_limit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Junction {
    pub id: u32,
    pub polygon: Vec<Vec2>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalColor {
    Green,
    Yellow,
    Red,
}

/// Fixed-cycle phase plan: green, then yellow, then red, shifted by `offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSchedule {
    pub green: f64,
    pub yellow: f64,
    pub red: f64,
    #[serde(default)]
    pub offset: f64,
}

impl SignalSchedule {
    pub fn cycle(&self) -> f64 {
        self.green + self.yellow + self.red
    }

    pub fn color_at(&self, t: f64) -> SignalColor {
        let phase = (t + self.offset).rem_euclid(self.cycle());
        if phase < self.green {
            SignalColor::Green
        } else if phase < self.green + self.yellow {
            SignalColor::Yellow
        } else {
            SignalColor::Red
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub id: u32,
    /// Stop-line point on the controlled lanes.
    pub position: Vec2,
    pub lanes: Vec<LaneId>,
    pub schedule: SignalSchedule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopSign {
    pub id: u32,
    pub position: Vec2,
    pub lane: LaneId,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetworkError {
    #[error("duplicate lane id {0}")]
    DuplicateLane(LaneId),
    #[error("lane {lane}: {field} references unknown lane {target}")]
    DanglingLane {
        lane: LaneId,
        field: &'static str,
        target: LaneId,
    },
    #[error("lane {0}: width must be strictly positive")]
    BadWidth(LaneId),
    #[error("lane {lane}: neighbor relation with lane {other} is not symmetric")]
    AsymmetricNeighbor { lane: LaneId, other: LaneId },
    #[error("junction {0}: polygon is not simple")]
    BadJunction(u32),
    #[error("{kind} {id}: references unknown lane {lane}")]
    DanglingControl {
        kind: &'static str,
        id: u32,
        lane: LaneId,
    },
    #[error("signal {0}: phase durations must be positive")]
    BadSchedule(u32),
    #[error("route: {0}")]
    Route(String),
}

/// Lane-level position of a pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneLocation {
    pub lane: LaneId,
    pub s: f64,
    /// Signed offset from the centerline, left positive.
    pub lateral: f64,
    pub in_junction: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Location {
    OnRoad(LaneLocation),
    OffRoad { nearest_lane: LaneId, distance: f64 },
}

impl Location {
    pub fn on_road(&self) -> Option<&LaneLocation> {
        match self {
            Location::OnRoad(l) => Some(l),
            Location::OffRoad { .. } => None,
        }
    }

    pub fn is_off_road(&self) -> bool {
        matches!(self, Location::OffRoad { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    lanes: Vec<Lane>,
    pub junctions: Vec<Junction>,
    pub signals: Vec<Signal>,
    pub stop_signs: Vec<StopSign>,
    /// Distance beyond a lane's half-width after which a pose counts as off-road.
    pub off_road_margin: f64,
}

impl RoadNetwork {
    pub fn new(
        mut lanes: Vec<Lane>,
        junctions: Vec<Junction>,
        signals: Vec<Signal>,
        stop_signs: Vec<StopSign>,
        off_road_margin: f64,
    ) -> Result<Self, NetworkError> {
        lanes.sort_by_key(|l| l.id);
        let net = RoadNetwork {
            lanes,
            junctions,
            signals,
            stop_signs,
            off_road_margin,
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<(), NetworkError> {
        for w in self.lanes.windows(2) {
            if w[0].id == w[1].id {
                return Err(NetworkError::DuplicateLane(w[0].id));
            }
        }
        for lane in &self.lanes {
            if !(lane.width > 0.0) {
                return Err(NetworkError::BadWidth(lane.id));
            }
            for &succ in &lane.successors {
                if self.lane(succ).is_none() {
                    return Err(NetworkError::DanglingLane {
                        lane: lane.id,
                        field: "successors",
                        target: succ,
                    });
                }
            }
            for (field, nb) in [("left", lane.left), ("right", lane.right)] {
                let Some(nb) = nb else { continue };
                let Some(other) = self.lane(nb.lane) else {
                    return Err(NetworkError::DanglingLane {
                        lane: lane.id,
                        field,
                        target: nb.lane,
                    });
                };
                // Same-direction neighbors mirror sides; opposite-direction neighbors
                // face each other, so each sees the other on the same side.
                let back = match (field, nb.same_direction) {
                    ("left", true) | ("right", false) => other.right,
                    _ => other.left,
                };
                let ok = back.is_some_and(|b| b.lane == lane.id && b.same_direction == nb.same_direction);
                if !ok {
                    return Err(NetworkError::AsymmetricNeighbor {
                        lane: lane.id,
                        other: nb.lane,
                    });
                }
            }
        }
        for j in &self.junctions {
            if !polygon_is_simple(&j.polygon) {
                return Err(NetworkError::BadJunction(j.id));
            }
        }
        for s in &self.signals {
            if !(s.schedule.green > 0.0 && s.schedule.yellow >= 0.0 && s.schedule.red > 0.0) {
                return Err(NetworkError::BadSchedule(s.id));
            }
            for &l in &s.lanes {
                if self.lane(l).is_none() {
                    return Err(NetworkError::DanglingControl {
                        kind: "signal",
                        id: s.id,
                        lane: l,
                    });
                }
            }
        }
        for s in &self.stop_signs {
            if self.lane(s.lane).is_none() {
                return Err(NetworkError::DanglingControl {
                    kind: "stop sign",
                    id: s.id,
                    lane: s.lane,
                });
            }
        }
        Ok(())
    }

    pub fn lanes(&self) -> &[Lane] {
        &self.lanes
    }

    pub fn lane(&self, id: LaneId) -> Option<&Lane> {
        self.lanes
            .binary_search_by_key(&id, |l| l.id)
            .ok()
            .map(|i| &self.lanes[i])
    }

    pub fn in_junction(&self, p: Vec2) -> bool {
        self.junctions.iter().any(|j| point_in_polygon(p, &j.polygon))
    }

    /// Nearest lane by distance to its centerline; ties go to the lowest lane id.
    /// Never fails: poses too far from every lane yield [`Location::OffRoad`].
    pub fn locate(&self, pose: &Pose) -> Location {
        let p = pose.position;
        if !p.is_finite() {
            let nearest_lane = self.lanes.first().map_or(0, |l| l.id);
            return Location::OffRoad {
                nearest_lane,
                distance: f64::INFINITY,
            };
        }
        let mut best: Option<(&Lane, crate::geometry::Projection)> = None;
        for lane in &self.lanes {
            let proj = lane.centerline.project_window(p, 0.0, lane.centerline.length());
            // lanes are iterated in ascending id order, so a strict comparison keeps the lowest id
            if best.is_none_or(|(_, b)| proj.distance < b.distance) {
                best = Some((lane, proj));
            }
        }
        let Some((lane, proj)) = best else {
            return Location::OffRoad {
                nearest_lane: 0,
                distance: f64::INFINITY,
            };
        };
        let in_junction = self.in_junction(p);
        if !in_junction && proj.distance > 0.5 * lane.width + self.off_road_margin {
            return Location::OffRoad {
                nearest_lane: lane.id,
                distance: proj.distance,
            };
        }
        let s = proj.s.clamp(0.0, lane.centerline.length());
        let foot = lane.centerline.point_at(s);
        let lateral = lane.centerline.tangent_at(s).cross(p - foot);
        Location::OnRoad(LaneLocation {
            lane: lane.id,
            s,
            lateral,
            in_junction,
        })
    }

    /// Arc position of a point projected onto a lane's centerline.
    pub fn lane_s(&self, lane: LaneId, p: Vec2) -> Option<f64> {
        self.lane(lane).map(|l| l.centerline.project(p).s)
    }
}

/// Ordered lane sequence the ego must follow, with its concatenated centerline.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub lanes: Vec<LaneId>,
    pub waypoints: Vec<Vec2>,
    polyline: Polyline,
}

impl Route {
    pub fn new(lanes: Vec<LaneId>, waypoints: Vec<Vec2>, net: &RoadNetwork) -> Result<Self, NetworkError> {
        if lanes.is_empty() {
            return Err(NetworkError::Route("route has no lanes".into()));
        }
        let mut pts: Vec<Vec2> = Vec::new();
        for (i, &id) in lanes.iter().enumerate() {
            let lane = net.lane(id).ok_or_else(|| {
                NetworkError::Route(format!("lane {id} at position {i} does not exist"))
            })?;
            if i == 0 {
                pts.extend_from_slice(lane.centerline.points());
                continue;
            }
            let prev = net.lane(lanes[i - 1]).expect("checked above");
            let via_successor = prev.successors.contains(&id);
            let via_neighbor = [prev.left, prev.right]
                .iter()
                .flatten()
                .any(|n| n.lane == id && n.same_direction);
            if !(via_successor || via_neighbor) {
                return Err(NetworkError::Route(format!(
                    "lanes {} and {id} are not connected",
                    prev.id
                )));
            }
            let last = *pts.last().expect("non-empty");
            if via_successor {
                for &q in lane.centerline.points() {
                    if q.distance(last) > 1e-9 && pts.last().is_none_or(|&l| l != q) {
                        pts.push(q);
                    }
                }
            } else {
                // lateral switch: continue on the neighbor ahead of the switch point
                let s0 = lane.centerline.project(last).s;
                let cl = &lane.centerline;
                let mut acc = 0.0;
                let mut prev_pt = cl.points()[0];
                for &q in cl.points() {
                    acc += q.distance(prev_pt);
                    prev_pt = q;
                    if acc > s0 + 1e-9 {
                        pts.push(q);
                    }
                }
            }
        }
        let polyline = Polyline::new(pts).map_err(|e| NetworkError::Route(e.to_string()))?;
        Ok(Route {
            lanes,
            waypoints,
            polyline,
        })
    }

    pub fn polyline(&self) -> &Polyline {
        &self.polyline
    }

    pub fn total_length(&self) -> f64 {
        self.polyline.length()
    }

    pub fn origin(&self) -> Pose {
        let p = self.polyline.point_at(0.0);
        Pose {
            position: p,
            heading: self.polyline.heading_at(0.0),
        }
    }
}
