use std::f64::consts::{FRAC_PI_2, FRAC_PI_8, PI};

use super::*;
use crate::world::tests::three_lane_network;
use crate::world::BBox;

fn obj(id: u32, class: ParticipantClass, x: f64, y: f64, heading: f64, speed: f64) -> TrackedObject {
    TrackedObject {
        id,
        class,
        position: Vec2::new(x, y),
        speed,
        heading,
        bbox: BBox {
            length: 4.5,
            width: 2.0,
        },
    }
}

fn frame(ego: Pose, objects: Vec<TrackedObject>) -> PerceptionFrame {
    PerceptionFrame {
        tick: 0,
        ego_speed: 0.0,
        ego_pose: ego,
        objects,
        signals: vec![],
    }
}

fn single_lane() -> RoadNetwork {
    let (world, _) = crate::world::tests::straight_world(0.05);
    world.network
}

fn on_lane(net: &RoadNetwork, pose: Pose) -> Location {
    let loc = net.locate(&pose);
    assert!(!loc.is_off_road());
    loc
}

#[test]
fn heading_sector_centres_and_boundaries() {
    assert_eq!(discretize_heading(0.0), Heading8::N);
    assert_eq!(discretize_heading(PI), Heading8::S);
    assert_eq!(discretize_heading(FRAC_PI_8), Heading8::NE);
    assert_eq!(discretize_heading(FRAC_PI_2), Heading8::E);
    assert_eq!(discretize_heading(-FRAC_PI_2), Heading8::W);
    assert_eq!(discretize_heading(-FRAC_PI_8), Heading8::N);
}

#[test]
fn plain_lane_topology() {
    let net = single_lane();
    let loc = on_lane(&net, Pose::new(10.0, 0.0, 0.0));
    let d = encode_topology(&loc, &net, &[]);
    assert_eq!(d.context, RoadContext::RegularLane);
    assert_eq!((d.left, d.right), (Adjacency::None, Adjacency::None));
    assert_eq!(d.signal_ahead, SignalAhead::None);
    assert!(!d.stop_sign_ahead);
    assert!(!d.off_road);
}

#[test]
fn fixture_adjacency_follows_lane_links() {
    let net = three_lane_network();
    let loc = on_lane(&net, Pose::new(30.0, 0.0, 0.0));
    let lane = net.lane(1).unwrap();
    let d = encode_topology(&loc, &net, &[]);
    assert_eq!(d.left, Adjacency::from(lane.left.as_ref()));
    assert_eq!(d.right, Adjacency::from(lane.right.as_ref()));
    assert_eq!((d.left, d.right), (Adjacency::OppositeDir, Adjacency::SameDir));
}

#[test]
fn off_road_topology_is_flagged() {
    let net = single_lane();
    let loc = net.locate(&Pose::new(10.0, 40.0, 0.0));
    let d = encode_topology(&loc, &net, &[]);
    assert!(d.off_road);
    assert_eq!((d.context, d.left, d.right), (RoadContext::RegularLane, Adjacency::None, Adjacency::None));
}

#[test]
fn governing_signals_fill_topology() {
    let net = single_lane();
    let loc = on_lane(&net, Pose::new(10.0, 0.0, 0.0));
    let det = |kind, governs, distance| SignalDetection {
        kind,
        confidence: 1.0,
        distance,
        governs_ego_lane: governs,
        source_id: 1,
    };
    let signals = [
        det(SignalKind::GreenLight, false, 5.0),
        det(SignalKind::RedLight, true, 20.0),
        det(SignalKind::StopSign, true, 30.0),
    ];
    let d = encode_topology(&loc, &net, &signals);
    assert_eq!(d.signal_ahead, SignalAhead::Red);
    assert!(d.stop_sign_ahead);
}

#[test]
fn buckets_in_ego_lane() {
    let net = three_lane_network();
    let ego = Pose::new(50.0, 0.0, 0.0);
    let loc = *on_lane(&net, ego).on_road().unwrap();
    let ahead = obj(1, ParticipantClass::Car, 15.0, 0.0, 0.0, 5.0);
    assert_eq!(bucket_position(&ahead, &ego, &loc, &net), (PositionBucket::AheadInLane, false));
    let behind = obj(2, ParticipantClass::Car, -10.0, 0.0, 0.0, 5.0);
    assert_eq!(bucket_position(&behind, &ego, &loc, &net).0, PositionBucket::Behind);
    let right = obj(3, ParticipantClass::Car, 8.0, -3.5, 0.0, 5.0);
    assert_eq!(bucket_position(&right, &ego, &loc, &net).0, PositionBucket::AheadRightLane);
}

#[test]
fn oncoming_in_facing_lane() {
    let net = three_lane_network();
    let ego = Pose::new(50.0, 0.0, 0.0);
    let loc = *on_lane(&net, ego).on_road().unwrap();
    let o = obj(4, ParticipantClass::Car, 30.0, 3.5, PI, 8.0);
    assert_eq!(bucket_position(&o, &ego, &loc, &net), (PositionBucket::Oncoming, false));
    // same lane but driving our way is not oncoming
    let parked = obj(5, ParticipantClass::Car, 30.0, 3.5, 0.0, 0.0);
    assert_eq!(bucket_position(&parked, &ego, &loc, &net).0, PositionBucket::AheadLeftLane);
}

#[test]
fn crossing_pedestrian() {
    let net = three_lane_network();
    let ego = Pose::new(50.0, 0.0, 0.0);
    let loc = *on_lane(&net, ego).on_road().unwrap();
    // walking west-to-east in compass terms means moving to ego's right
    let from_left = obj(6, ParticipantClass::Pedestrian, 12.0, 4.0, -FRAC_PI_2, 1.4);
    assert_eq!(bucket_position(&from_left, &ego, &loc, &net).0, PositionBucket::CrossingLeft);
    let from_right = obj(7, ParticipantClass::Pedestrian, 12.0, -4.0, FRAC_PI_2, 1.4);
    assert_eq!(bucket_position(&from_right, &ego, &loc, &net).0, PositionBucket::CrossingRight);
}

#[test]
fn off_network_object_uses_geometry() {
    let net = single_lane();
    let ego = Pose::new(50.0, 0.0, 0.0);
    let loc = *on_lane(&net, ego).on_road().unwrap();
    let o = obj(8, ParticipantClass::StaticObstacle, 10.0, 20.0, 0.0, 0.0);
    assert_eq!(bucket_position(&o, &ego, &loc, &net), (PositionBucket::AheadLeftLane, true));
}

#[test]
fn empty_scene_golden() {
    let net = single_lane();
    let ego = Pose::new(10.0, 0.0, 0.0);
    let scene = encode_scene(&frame(ego, vec![]), &on_lane(&net, ego), &net);
    assert_eq!(scene.text, include_str!("../../testdata/v1/scene_empty.txt").trim_end());
}

#[test]
fn stopped_car_golden() {
    let net = three_lane_network();
    let ego = Pose::new(50.0, 0.0, 0.0);
    let objects = vec![
        obj(1, ParticipantClass::Car, 40.0, 0.0, 0.0, 0.0),
        obj(2, ParticipantClass::Car, 25.0, 3.5, PI, 8.0),
    ];
    let scene = encode_scene(&frame(ego, objects), &on_lane(&net, ego), &net);
    assert!(scene.text.contains("stationary car ahead in your lane"));
    assert_eq!(scene.text, include_str!("../../testdata/v1/scene_blocked_lane.txt").trim_end());
    // nearest first
    assert_eq!(scene.structured.participants[0].position_bucket, PositionBucket::Oncoming);
}

#[test]
fn many_participants_are_capped() {
    let net = three_lane_network();
    let ego = Pose::new(50.0, 0.0, 0.0);
    let objects = (0..14).map(|i| obj(i, ParticipantClass::Car, 5.0 + 3.0 * i as f64, -3.5, 0.0, 4.0)).collect();
    let scene = encode_scene(&frame(ego, objects), &on_lane(&net, ego), &net);
    assert_eq!(scene.text.lines().count(), 1 + MAX_LISTED);
    assert!(scene.text.contains("More than 10"));
}

#[test]
fn digest_tracks_structure() {
    let net = three_lane_network();
    let ego = Pose::new(50.0, 0.0, 0.0);
    let loc = on_lane(&net, ego);
    let a = encode_scene(&frame(ego, vec![obj(1, ParticipantClass::Car, 40.0, 0.0, 0.0, 0.0)]), &loc, &net);
    // a few centimetres of jitter do not change the description
    let b = encode_scene(&frame(ego, vec![obj(1, ParticipantClass::Car, 40.03, 0.02, 0.01, 0.1)]), &loc, &net);
    let c = encode_scene(&frame(ego, vec![obj(1, ParticipantClass::Truck, 40.0, 0.0, 0.0, 0.0)]), &loc, &net);
    assert_eq!(a.digest, b.digest);
    assert_ne!(a.digest, c.digest);
    assert_eq!(a.digest.len(), 16);
}

#[test]
fn parses_final_decision_line() {
    let v = Vocabulary::default();
    let text = "Phase 1 ... DECISION: HOLD was considered\nreasoning\nDECISION: LANE_CHANGE_RIGHT\n";
    assert_eq!(parse_decision(text, &v).unwrap().kind, CommandKind::LaneChangeRight);
    assert_eq!(parse_decision("DECISION: HOLD", &v).unwrap(), ManeuverCommand::new(CommandKind::Hold));
    assert_eq!(parse_decision("**Decision:** proceed.", &v).unwrap().kind, CommandKind::Proceed);
}

#[test]
fn parse_errors_carry_spans() {
    let v = Vocabulary::default();
    let e = parse_decision("I think you should swerve", &v).unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::NoDecisionLine);
    let src = "DECISION: SWERVE";
    let e = parse_decision(src, &v).unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::UnknownToken);
    assert_eq!(&src[e.span.clone()], "SWERVE");
    let src = "ok\nDECISION: TARGET_SPEED 40 m/s";
    let e = parse_decision(src, &v).unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::OutOfRange);
    assert_eq!(e.text, "40");
    assert_eq!(parse_decision("DECISION: TARGET_SPEED", &v).unwrap_err().kind, ParseErrorKind::MissingSpeed);
    assert_eq!(parse_decision("DECISION: TARGET_SPEED 5 km/h", &v).unwrap_err().kind, ParseErrorKind::BadUnit);
    assert_eq!(parse_decision("DECISION: HOLD now", &v).unwrap_err().kind, ParseErrorKind::Trailing);
}

#[test]
fn target_speed_forms() {
    let v = Vocabulary::default();
    for s in ["DECISION: TARGET_SPEED 5 m/s", "DECISION: target_speed 5", "DECISION: TARGET_SPEED 5m/s"] {
        assert_eq!(parse_decision(s, &v).unwrap(), ManeuverCommand::target_speed(5.0), "{s}");
    }
}

#[test]
fn restricted_vocabulary_rejects_missing_token() {
    let mut v = Vocabulary::default();
    v.entries.retain(|e| e.token != CommandKind::Proceed);
    assert_eq!(parse_decision("DECISION: PROCEED", &v).unwrap_err().kind, ParseErrorKind::UnknownToken);
}

#[test]
fn primitive_table() {
    let v = Vocabulary::default();
    let ctx = PrimitiveContext {
        ego_speed: 5.0,
        lane_width: 3.5,
    };
    let hold = command_to_primitive(&ManeuverCommand::new(CommandKind::Hold), &ctx, &v);
    assert_eq!((hold.curvature, hold.target_speed), (0.0, 0.0));
    assert!(hold.duration.is_infinite());
    let ts = command_to_primitive(&ManeuverCommand::target_speed(5.0), &ctx, &v);
    assert_eq!((ts.curvature, ts.target_speed, ts.duration), (0.0, 5.0, 6.0));
    let dec = command_to_primitive(&ManeuverCommand::new(CommandKind::Decelerate), &ctx, &v);
    assert_eq!((dec.target_speed, dec.duration), (2.0, 3.0));
    let right = command_to_primitive(&ManeuverCommand::new(CommandKind::LaneChangeRight), &ctx, &v);
    let left = command_to_primitive(&ManeuverCommand::new(CommandKind::LaneChangeLeft), &ctx, &v);
    assert!(right.curvature < 0.0 && left.curvature == -right.curvature);
    assert_eq!((right.target_speed, right.duration), (4.0, 4.0));
    // two arcs of length L/2 at curvature k displace by 2(1 - cos(kL/2))/k
    let (k, l) = (left.curvature, 16.0);
    let lateral = 2.0 * (1.0 - (k * l / 2.0).cos()) / k;
    assert!((lateral - 3.5).abs() < 1e-6, "{lateral}");
}
