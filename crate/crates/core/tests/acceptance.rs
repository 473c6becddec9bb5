//! Acceptance criteria 2-10. Each prints one PASS/FAIL line; the process
//! exits nonzero if any fails.

use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, TAU};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use dualdrive::arbiter::{ArbiterEvent, Phase};
use dualdrive::bench::{
    ablate, aggregate, load_suite, Coefficients, Completion, Episode, EpisodeOptions, InfractionEvent, InfractionKind,
    RouteResult, Variant,
};
use dualdrive::codec::*;
use dualdrive::geometry::{Pose, Vec2};
use dualdrive::perception::{PerceptionFrame, SignalDetection, SignalKind};
use dualdrive::planner::WaypointPlan;
use dualdrive::safety::{control, BrakeCause, ControlCommand, ControllerState, EgoInput, SafetyConfig};
use dualdrive::scenario::{load_scenario, load_scenario_file, Scenario};
use dualdrive::world::{BBox, Behavior, ParticipantClass, ParticipantState, VehicleLimits};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    check(t <= limit, format!("took {:.2?}, limit {:.0?}", t, limit))
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn shipped(name: &str) -> Scenario {
    load_scenario_file(scenarios_dir().join(format!("{name}.toml"))).unwrap()
}

// 2 ------------------------------------------------------------------------

fn coefficient(kind: InfractionKind) -> f64 {
    match kind {
        InfractionKind::CollisionPedestrian => 0.50,
        InfractionKind::CollisionVehicle => 0.60,
        InfractionKind::CollisionStatic => 0.65,
        InfractionKind::RedLight => 0.70,
        InfractionKind::StopSign => 0.80,
    }
}

fn metric_identities() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut routes = Vec::new();
    for i in 0..100 {
        let len = rng.random_range(20.0..800.0);
        let pct = rng.random_range(0.0..=100.0);
        let n = rng.random_range(0..5);
        let infractions: Vec<InfractionEvent> = (0..n)
            .map(|t| InfractionEvent {
                kind: InfractionKind::ALL[rng.random_range(0..5)],
                tick: t,
                position: Vec2::new(0.0, 0.0),
                other: 0,
            })
            .collect();
        let c = Completion {
            percent: pct,
            off_road: 0.0,
            max_s: pct * len / 100.0,
        };
        let r = RouteResult::new(format!("r{i}"), len, c, infractions, &Coefficients::default(), false, false, 0, 1.0);
        let mut pm = 1.0;
        for e in &r.infractions {
            pm *= coefficient(e.kind);
        }
        check(r.penalty_multiplier == pm, format!("route {i}: PM {} vs {pm}", r.penalty_multiplier))?;
        check(
            r.driving_score == r.completion * r.penalty_multiplier,
            format!("route {i}: DS {} != RC x PM", r.driving_score),
        )?;
        routes.push(r);
    }
    let (mut num_ds, mut num_rc, mut den) = (0.0, 0.0, 0.0);
    for r in &routes {
        num_ds += r.route_length * r.driving_score;
        num_rc += r.route_length * r.completion;
        den += r.route_length;
    }
    let rep = aggregate(routes, "full", "-").map_err(|e| e.to_string())?;
    check((rep.driving_score - num_ds / den).abs() < 1e-9, "DS aggregate mismatch")?;
    check((rep.route_completion - num_rc / den).abs() < 1e-9, "RC aggregate mismatch")?;
    within(start, Duration::from_secs(1))?;
    Ok(format!("100 routes, aggregate DS {:.4}", rep.driving_score))
}

// 3 ------------------------------------------------------------------------

fn table_consistency() -> Outcome {
    // published aggregates: RC 93.43, infraction penalty 0.76, DS 71.96
    let product: f64 = 93.43 * 0.76;
    let rounded = (product * 100.0).round() / 100.0;
    check(rounded == 71.01, format!("93.43 x 0.76 rounded to {rounded}"))?;
    check((rounded - 71.96f64).abs() > 0.5, "product unexpectedly matches 71.96")?;
    // per-route scoring then averaging differs from multiplying averages
    let c = |p: f64| Completion {
        percent: p,
        off_road: 0.0,
        max_s: 0.0,
    };
    let hit = InfractionEvent {
        kind: InfractionKind::CollisionVehicle,
        tick: 0,
        position: Vec2::new(0.0, 0.0),
        other: 1,
    };
    let k = Coefficients::default();
    let a = RouteResult::new("a", 100.0, c(100.0), vec![hit], &k, false, false, 0, 0.0);
    let b = RouteResult::new("b", 100.0, c(50.0), vec![], &k, false, false, 0, 0.0);
    let rep = aggregate(vec![a, b], "full", "-").map_err(|e| e.to_string())?;
    check((rep.driving_score - 55.0).abs() < 1e-12, format!("DS {}", rep.driving_score))?;
    check(
        (rep.route_completion * rep.infraction_penalty - 60.0).abs() < 1e-12,
        "mean RC x mean PM should be 60",
    )?;
    Ok(format!("93.43 x 0.76 = {product:.4} -> {rounded} != 71.96"))
}

// 6 ------------------------------------------------------------------------

const IDM_ROAD: &str = r#"
schema_version = 1
name = "idm"

[[lanes]]
id = 1
centerline = [[0.0, 0.0], [2000.0, 0.0]]
width = 3.5
speed_limit = 12.0

[route]
lanes = [1]

[ego]
speed = 12.0
"#;

fn follower(id: u32, x: f64) -> ParticipantState {
    ParticipantState {
        id,
        class: ParticipantClass::Car,
        pose: Pose::new(x, 0.0, 0.0),
        speed: 12.0,
        bbox: BBox { length: 4.6, width: 2.0 },
        behavior: Behavior::LaneFollow { lane: 1, s: x, v0: 12.0 },
        dormant: false,
    }
}

fn idm_safety() -> Outcome {
    let start = Instant::now();
    let sc = load_scenario(IDM_ROAD).map_err(|e| e.to_string())?;
    let w = &sc.world;
    // the ego leads and brakes as hard as it can; two IDM cars follow at the
    // equilibrium gap s0 + v T
    let mut st = sc.initial.clone();
    let lead_x = 300.0;
    st.ego.vehicle.pose = Pose::new(lead_x, 0.0, 0.0);
    st.ego.route_s = lead_x;
    let gap0 = w.traffic_idm.s0 + 12.0 * w.traffic_idm.headway;
    st.insert_participant(follower(1, lead_x - 4.6 - gap0));
    st.insert_participant(follower(2, lead_x - 2.0 * (4.6 + gap0)));
    let estop = ControlCommand::emergency(BrakeCause::Collision, 0.0);
    let mut min_gap = f64::INFINITY;
    for _ in 0..10_000 {
        st = w.step(&st, &estop, w.dt);
        let xs = [
            st.ego.vehicle.pose.position.x,
            st.participants[0].pose.position.x,
            st.participants[1].pose.position.x,
        ];
        min_gap = min_gap.min(xs[0] - xs[1] - 4.6).min(xs[1] - xs[2] - 4.6);
    }
    check(min_gap > 0.0, format!("minimum bumper gap {min_gap:.3} m"))?;
    check(st.participants.iter().all(|p| p.speed == 0.0), "followers did not stop")?;

    // lone car from rest on an empty road
    let mut lone = sc.initial.clone();
    lone.ego.vehicle.pose = Pose::new(-100.0, 50.0, 0.0);
    lone.insert_participant(ParticipantState {
        speed: 0.0,
        ..follower(3, 10.0)
    });
    let mut converged = None;
    for i in 1..=1200 {
        lone = w.step(&lone, &ControlCommand::coast(), w.dt);
        if (lone.participants[0].speed - 12.0).abs() < 0.1 {
            converged = Some(i as f64 * w.dt);
            break;
        }
    }
    let t = converged.ok_or("lone car did not reach v0 within 60 s")?;
    within(start, Duration::from_secs(10))?;
    Ok(format!("min gap {min_gap:.2} m over 10000 ticks, |v - v0| < 0.1 after {t:.2} s"))
}

// 4 ------------------------------------------------------------------------

fn run(sc: Scenario, opts: &EpisodeOptions) -> Result<(RouteResult, Vec<dualdrive::trace::TickRecord>), String> {
    Episode::new(sc, opts)
        .and_then(|ep| ep.run())
        .map_err(|e| e.to_string())
}

fn phase_runs(records: &[dualdrive::trace::TickRecord]) -> Vec<Phase> {
    let mut out: Vec<Phase> = Vec::new();
    for r in records {
        if out.last() != Some(&r.phase) {
            out.push(r.phase);
        }
    }
    out
}

fn blocked_lane_ablation() -> Outcome {
    let sc = shipped("blocked_lane");
    let script = std::fs::read_to_string(sc.advisor_script().ok_or("no advisor script")?).map_err(|e| e.to_string())?;
    check(script.contains("DECISION: LANE_CHANGE_RIGHT"), "script does not answer LANE_CHANGE_RIGHT")?;

    let start = Instant::now();
    let (full, records) = run(sc.clone(), &EpisodeOptions::default())?;
    within(start, Duration::from_secs(30))?;
    check(full.completion >= 95.0, format!("full RC {:.2}", full.completion))?;
    check(full.collisions() == 0, format!("{} collisions", full.collisions()))?;
    let phases = phase_runs(&records);
    let want = [
        Phase::E2eActive,
        Phase::ProtectiveStop,
        Phase::LlmPending,
        Phase::LlmExecuting,
        Phase::E2eActive,
    ];
    check(phases == want, format!("phase sequence {phases:?}"))?;
    let decided = records.iter().any(|r| {
        r.events.iter().any(|e| {
            matches!(e, ArbiterEvent::AdvisorResponse { command, .. } if command.kind == CommandKind::LaneChangeRight)
        })
    });
    check(decided, "no LANE_CHANGE_RIGHT response in the trace")?;
    let exec_start = records.iter().position(|r| r.phase == Phase::LlmExecuting).unwrap();
    let exec_ticks = records[exec_start..].iter().take_while(|r| r.phase == Phase::LlmExecuting).count();
    let exec_s = exec_ticks as f64 * sc.world.dt;
    let duration = sc.vocabulary.lane_change.duration;
    check(
        exec_s <= duration + 2.0 + 1e-9,
        format!("handback after {exec_s:.2} s of execution"),
    )?;

    let start = Instant::now();
    let opts = EpisodeOptions {
        variant: Variant::NoLlm,
        ..EpisodeOptions::default()
    };
    let (no_llm, _) = run(sc, &opts)?;
    within(start, Duration::from_secs(30))?;
    check(no_llm.blocked, "no-llm run did not end blocked")?;
    check(no_llm.completion < 60.0, format!("no-llm RC {:.2}", no_llm.completion))?;
    Ok(format!(
        "full RC {:.2}% 0 collisions, executed {exec_s:.2} s; no-llm blocked at RC {:.2}%",
        full.completion, no_llm.completion
    ))
}

// 5 ------------------------------------------------------------------------

fn suite_ablation() -> Outcome {
    let start = Instant::now();
    let scenarios = load_suite(&scenarios_dir()).map_err(|e| e.to_string())?;
    check(scenarios.len() == 5, format!("{} scenarios shipped", scenarios.len()))?;
    let a = ablate(&scenarios, &EpisodeOptions::default()).map_err(|e| e.to_string())?;
    within(start, Duration::from_secs(300))?;
    let (f, n) = (&a.full, &a.no_llm);
    check(
        f.route_completion > n.route_completion,
        format!("RC full {:.2} vs no-llm {:.2}", f.route_completion, n.route_completion),
    )?;
    check(
        f.mean_duration < n.mean_duration,
        format!("time full {:.2} vs no-llm {:.2}", f.mean_duration, n.mean_duration),
    )?;
    Ok(format!(
        "RC {:.2} vs {:.2}, mean time {:.2} s vs {:.2} s",
        f.route_completion, n.route_completion, f.mean_duration, n.mean_duration
    ))
}

// 7 ------------------------------------------------------------------------

fn random_scene(rng: &mut ChaCha8Rng) -> StructuredScene {
    let adj = [Adjacency::None, Adjacency::SameDir, Adjacency::OppositeDir];
    let signals = [SignalAhead::None, SignalAhead::Red, SignalAhead::Yellow, SignalAhead::Green];
    let buckets = [
        PositionBucket::AheadInLane,
        PositionBucket::AheadLeftLane,
        PositionBucket::AheadRightLane,
        PositionBucket::Oncoming,
        PositionBucket::Behind,
        PositionBucket::CrossingLeft,
        PositionBucket::CrossingRight,
    ];
    let road = RoadContextDesc {
        context: if rng.random_bool(0.3) {
            RoadContext::Intersection
        } else {
            RoadContext::RegularLane
        },
        left: adj[rng.random_range(0..3)],
        right: adj[rng.random_range(0..3)],
        signal_ahead: signals[rng.random_range(0..4)],
        stop_sign_ahead: rng.random_bool(0.2),
        off_road: rng.random_bool(0.1),
    };
    let n = rng.random_range(0..16);
    let participants = (0..n)
        .map(|_| ParticipantDesc {
            position_bucket: buckets[rng.random_range(0..buckets.len())],
            heading_8: Heading8::ALL[rng.random_range(0..8)],
            class: ParticipantClass::ALL[rng.random_range(0..ParticipantClass::ALL.len())],
            motion: Motion::of(rng.random_range(0.0..20.0)),
            fallback: rng.random_bool(0.1),
        })
        .collect();
    StructuredScene {
        road,
        participants,
        ego_speed: Motion::of(rng.random_range(0.0..20.0)),
    }
}

fn codec_properties() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    for _ in 0..100_000 {
        let theta: f64 = rng.random_range(-50.0..50.0);
        let h = discretize_heading(theta);
        check(h == discretize_heading(theta + TAU), format!("period broken at {theta}"))?;
        let centre = Heading8::ALL.iter().position(|&x| x == h).unwrap() as f64 * FRAC_PI_4;
        let rel = (theta - centre + FRAC_PI_8).rem_euclid(TAU);
        check(rel < FRAC_PI_4 + 1e-9, format!("{theta} outside sector {h:?}"))?;
    }

    for _ in 0..1000 {
        let s = random_scene(&mut rng);
        let text = render(&s);
        for run in text.split(|c: char| !c.is_ascii_digit()).filter(|r| !r.is_empty()) {
            let n: u32 = run.parse().map_err(|_| format!("digit run {run:?}"))?;
            check(n <= 10, format!("numeral {n} in {text:?}"))?;
        }
    }

    let vocab = Vocabulary::default();
    let alphabet: Vec<char> = "DECISON:_ HOLDARGTSPEmL/s0123456789.\n\r*\u{e9}\u{1F697}".chars().collect();
    let (mut parsed, mut rejected) = (0usize, 0usize);
    for _ in 0..1_000_000 {
        let len = rng.random_range(0..40);
        let s: String = if rng.random_bool(0.1) {
            let kind = CommandKind::ALL[rng.random_range(0..CommandKind::ALL.len())];
            format!("reasoning\nDECISION: {}", kind.token())
        } else if rng.random_bool(0.5) {
            let bytes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
            String::from_utf8_lossy(&bytes).into_owned()
        } else {
            let body: String = (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
            format!("DECISION: {body}")
        };
        match std::panic::catch_unwind(|| parse_decision(&s, &vocab)) {
            Ok(Ok(_)) => parsed += 1,
            Ok(Err(_)) => rejected += 1,
            Err(_) => return Err(format!("parser aborted on {s:?}")),
        }
    }

    for kind in CommandKind::ALL {
        let cmd = if kind == CommandKind::TargetSpeed {
            ManeuverCommand::target_speed(6.0)
        } else {
            ManeuverCommand::new(kind)
        };
        let back = parse_decision(&format!("DECISION: {cmd}"), &vocab).map_err(|e| e.to_string())?;
        check(back == cmd, format!("{cmd} parsed as {back}"))?;
    }
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "1e5 angles, 1000 scenes, 1e6 strings ({parsed} parsed, {rejected} rejected), {} tokens",
        CommandKind::ALL.len()
    ))
}

// 8 ------------------------------------------------------------------------

fn traced_run(sc: &Scenario, opts: &EpisodeOptions, path: &Path) -> Result<Vec<u8>, String> {
    let f = File::create(path).map_err(|e| e.to_string())?;
    let ep = Episode::new(sc.clone(), opts)
        .and_then(|ep| ep.with_trace(Box::new(BufWriter::new(f))))
        .map_err(|e| e.to_string())?;
    ep.run().map_err(|e| e.to_string())?;
    std::fs::read(path).map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenarios = load_suite(&scenarios_dir()).map_err(|e| e.to_string())?;
    let opts = EpisodeOptions {
        seed: Some(11),
        ..EpisodeOptions::default()
    };
    let mut bytes = 0;
    for sc in &scenarios {
        let a = traced_run(sc, &opts, &dir.path().join(format!("{}.a.jsonl", sc.name)))?;
        let b = traced_run(sc, &opts, &dir.path().join(format!("{}.b.jsonl", sc.name)))?;
        check(!a.is_empty() && a == b, format!("{}: traces differ", sc.name))?;
        bytes += a.len();
    }
    within(start, Duration::from_secs(60))?;
    Ok(format!("{} scenarios, {bytes} identical trace bytes", scenarios.len()))
}

// 9 ------------------------------------------------------------------------

fn dual_rate_contract() -> Outcome {
    let start = Instant::now();
    let sc = shipped("blocked_lane");
    let opts = EpisodeOptions {
        latency_ticks: Some(40),
        ..EpisodeOptions::default()
    };
    let mut ep = Episode::new(sc, &opts).map_err(|e| e.to_string())?;
    let mut mutated_at = None;
    let mut stale_at = None;
    loop {
        let done = ep.step_once().map_err(|e| e.to_string())?;
        let last = ep.records().last().unwrap();
        if stale_at.is_none() && last.events.iter().any(|e| matches!(e, ArbiterEvent::StaleDiscard { .. })) {
            stale_at = Some(last.tick);
        }
        if mutated_at.is_none() && ep.phase() == Phase::LlmPending {
            // a parked car appears in the oncoming lane while the query is in flight
            let ego = ep.state().ego.vehicle.pose.position;
            ep.state_mut().insert_participant(ParticipantState {
                id: 90,
                class: ParticipantClass::Car,
                pose: Pose::new(ego.x + 15.0, 3.5, std::f64::consts::PI),
                speed: 0.0,
                bbox: BBox { length: 4.5, width: 2.0 },
                behavior: Behavior::Stationary,
                dormant: false,
            });
            mutated_at = Some(ep.state().tick);
        }
        if done.is_some() {
            break;
        }
    }
    let term = ep.termination();
    let records = ep.records().to_vec();
    within(start, Duration::from_secs(30))?;
    check(records.first().map(|r| r.tick) == Some(1), "trace does not start at tick 1")?;
    check(
        records.windows(2).all(|w| w[1].tick == w[0].tick + 1),
        "tick cadence broken",
    )?;
    check(
        records.iter().all(|r| r.command.longitudinal.is_finite() && r.command.steering.is_finite()),
        "a tick has no actuation",
    )?;
    let mutated = mutated_at.ok_or("advisor was never queried")?;
    let stale = stale_at.ok_or("no staleness discard logged")?;
    check(stale >= mutated + 40, format!("discard at {stale}, mutation at {mutated}"))?;
    let rerequested = records
        .iter()
        .filter(|r| r.tick >= stale)
        .any(|r| r.events.iter().any(|e| matches!(e, ArbiterEvent::AdvisorRequest { .. })));
    check(rerequested, "no re-request after the discard")?;
    Ok(format!(
        "{} consecutive ticks, mutation at tick {mutated}, discard at tick {stale}, ended {term:?}",
        records.len()
    ))
}

// 10 -----------------------------------------------------------------------

fn straight_plan() -> WaypointPlan {
    WaypointPlan {
        waypoints: (0..=30).map(|i| Vec2::new(i as f64, 0.0)).collect(),
        spacing: 1.0,
        horizon: 30.0,
        speeds: None,
    }
}

fn gate_fixture(kind: SignalKind, confidence: f64, governs: bool) -> bool {
    let frame = PerceptionFrame {
        tick: 0,
        ego_speed: 8.0,
        ego_pose: Pose::default(),
        objects: vec![],
        signals: vec![SignalDetection {
            kind,
            confidence,
            distance: 10.0,
            governs_ego_lane: governs,
            source_id: 1,
        }],
    };
    let ego = EgoInput {
        speed: 8.0,
        bbox: BBox { length: 4.6, width: 2.0 },
        limits: VehicleLimits::default(),
        dt: 0.05,
    };
    let out = control(&straight_plan(), &frame, &SafetyConfig::default(), &ego, &ControllerState::default());
    out.command.emergency_brake && out.command.brake_cause == Some(BrakeCause::TrafficRule)
}

fn controlled_road(control: &str) -> Scenario {
    let text = format!(
        r#"
schema_version = 1
name = "gate"

[[lanes]]
id = 1
centerline = [[0.0, 0.0], [150.0, 0.0]]
width = 3.5
right = {{ lane = 2, same_direction = true }}

[[lanes]]
id = 2
centerline = [[0.0, -3.5], [150.0, -3.5]]
width = 3.5
left = {{ lane = 1, same_direction = true }}

[route]
lanes = [1]

[ego]
speed = 8.0

[bench]
time_limit = 40.0

{control}
"#
    );
    load_scenario(&text).unwrap()
}

fn signal(lanes: &str, green: f64, red: f64, offset: f64) -> String {
    format!(
        "[[signals]]\nid = 1\nposition = [60.0, -5.0]\nlanes = {lanes}\ngreen = {green}\nyellow = 0.0\nred = {red}\noffset = {offset}\n"
    )
}

fn gate_brakes(records: &[dualdrive::trace::TickRecord]) -> usize {
    records
        .iter()
        .filter(|r| r.command.brake_cause == Some(BrakeCause::TrafficRule))
        .count()
}

fn traffic_rule_gate_fixtures() -> Outcome {
    let start = Instant::now();
    let threshold = SafetyConfig::default().signal_confidence_threshold;
    let kinds = [
        SignalKind::RedLight,
        SignalKind::StopSign,
        SignalKind::GreenLight,
        SignalKind::YellowLight,
    ];
    let mut cases = 0;
    for kind in kinds {
        for confidence in [0.0, 0.3, threshold - 1e-6, threshold, threshold + 1e-6, 0.8, 1.0] {
            for governs in [true, false] {
                let expect = matches!(kind, SignalKind::RedLight | SignalKind::StopSign) && confidence > threshold && governs;
                let got = gate_fixture(kind, confidence, governs);
                check(
                    got == expect,
                    format!("{kind:?} confidence {confidence} governs {governs}: brake {got}"),
                )?;
                cases += 1;
            }
        }
    }

    let opts = EpisodeOptions {
        variant: Variant::NoLlm,
        ..EpisodeOptions::default()
    };
    // red throughout the run
    let (r, recs) = run(controlled_road(&signal("[1]", 1.0, 1000.0, 1.0)), &opts)?;
    check(gate_brakes(&recs) > 0, "red light never engaged the gate")?;
    check(r.infractions.is_empty(), format!("red fixture infractions {:?}", r.infractions))?;
    let front = recs.iter().map(|t| t.ego.pose.position.x + 2.3).fold(f64::MIN, f64::max);
    check(front < 60.0, format!("front bumper reached x = {front:.2}"))?;

    // red on the neighbouring lane only
    let (r, recs) = run(controlled_road(&signal("[2]", 1.0, 1000.0, 1.0)), &opts)?;
    check(gate_brakes(&recs) == 0 && r.completion == 100.0, "foreign red light braked the ego")?;

    // green throughout the run
    let (r, recs) = run(controlled_road(&signal("[1]", 1000.0, 1.0, 0.0)), &opts)?;
    check(gate_brakes(&recs) == 0, "green light braked the ego")?;
    check(r.completion == 100.0 && r.infractions.is_empty(), "green fixture did not complete cleanly")?;

    // stop sign: brake, full stop, then go
    let stop = "[[stop_signs]]\nid = 2\nposition = [60.0, -2.5]\nlane = 1\n";
    let (r, recs) = run(controlled_road(stop), &opts)?;
    check(gate_brakes(&recs) > 0, "stop sign never engaged the gate")?;
    check(r.completion == 100.0 && r.infractions.is_empty(), format!("stop-sign fixture {:?}", r.infractions))?;

    within(start, Duration::from_secs(10))?;
    Ok(format!("{cases} gate fixtures, red/foreign-red/green/stop-sign closed loop"))
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 9] = [
        (2, metric_identities),
        (3, table_consistency),
        (4, blocked_lane_ablation),
        (5, suite_ablation),
        (6, idm_safety),
        (7, codec_properties),
        (8, determinism),
        (9, dual_rate_contract),
        (10, traffic_rule_gate_fixtures),
    ];
    let mut failed = 0;
    for (n, f) in criteria {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS ({detail})"),
            Err(why) => {
                failed += 1;
                println!("criterion {n}: FAIL ({why})");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
