use std::fs::File;
use std::io::{BufReader, BufWriter};

use dualdrive::bench::{
    aggregate, detect_infractions, penalty_multiplier, replay_trace, route_completion, Coefficients, Completion,
    Episode, EpisodeOptions, InfractionEvent, InfractionKind, RouteResult, StopRule, Variant,
};
use dualdrive::geometry::Vec2;
use dualdrive::scenario::{load_scenario, load_scenario_file};
use dualdrive::trace::read_trace;
use proptest::prelude::*;

const STRAIGHT: &str = r#"
schema_version = 1
name = "straight"

[[lanes]]
id = 1
centerline = [[0.0, 0.0], [150.0, 0.0]]
width = 3.5

[route]
lanes = [1]
"#;

/// A pedestrian steps out too close to stop for.
const DART: &str = r#"
schema_version = 1
name = "dart"

[[lanes]]
id = 1
centerline = [[0.0, 0.0], [120.0, 0.0]]
width = 3.5

[route]
lanes = [1]

[ego]
speed = 10.0

[[participants]]
id = 6
class = "pedestrian"
pose = [6.0, -2.0, 1.5707963267948966]
speed = 2.0
bbox = [0.6, 0.6]
behavior = { kind = "scripted_trajectory", points = [[6.0, -2.0, 0.0], [6.0, 4.0, 3.0]] }
"#;

fn kind() -> impl Strategy<Value = InfractionKind> {
    prop::sample::select(InfractionKind::ALL.to_vec())
}

fn event(kind: InfractionKind) -> InfractionEvent {
    InfractionEvent {
        kind,
        tick: 0,
        position: Vec2::new(0.0, 0.0),
        other: 0,
    }
}

fn result(len: f64, percent: f64, kinds: &[InfractionKind]) -> RouteResult {
    let c = Completion {
        percent,
        off_road: 0.0,
        max_s: 0.0,
    };
    let ev = kinds.iter().map(|&k| event(k)).collect();
    RouteResult::new("r", len, c, ev, &Coefficients::default(), false, false, 0, 0.0)
}

proptest! {
    #[test]
    fn score_is_completion_times_penalty(pct in 0.0..=100.0f64, kinds in prop::collection::vec(kind(), 0..6)) {
        let r = result(100.0, pct, &kinds);
        prop_assert_eq!(r.driving_score, r.completion * r.penalty_multiplier);
        prop_assert!((0.0..=100.0).contains(&r.completion));
    }

    #[test]
    fn another_infraction_never_raises_the_score(
        pct in 0.0..=100.0f64,
        kinds in prop::collection::vec(kind(), 0..6),
        extra in kind(),
    ) {
        let before = result(100.0, pct, &kinds);
        let mut more = kinds.clone();
        more.push(extra);
        let after = result(100.0, pct, &more);
        prop_assert!(after.driving_score <= before.driving_score);
        prop_assert!(penalty_multiplier(&after.infractions, &Coefficients::default()) <= before.penalty_multiplier);
    }

    #[test]
    fn driving_further_never_lowers_completion(a in 0.0..150.0f64, b in 0.0..150.0f64) {
        let sc = load_scenario(STRAIGHT).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let path = |end: f64| -> Vec<Vec2> {
            let n = (end * 2.0).ceil() as usize;
            (0..=n).map(|i| Vec2::new(end * i as f64 / n.max(1) as f64, 0.0)).collect()
        };
        let short = route_completion(&path(lo), &sc.world.route, &sc.world.network);
        let long = route_completion(&path(hi), &sc.world.route, &sc.world.network);
        prop_assert!(long.percent >= short.percent);
    }

    #[test]
    fn aggregate_is_length_weighted(rows in prop::collection::vec((1.0..500.0f64, 0.0..=100.0f64), 1..20)) {
        let routes: Vec<_> = rows.iter().map(|&(l, p)| result(l, p, &[])).collect();
        let rep = aggregate(routes, "full", "x").unwrap();
        let total: f64 = rows.iter().map(|r| r.0).sum();
        let expect: f64 = rows.iter().map(|&(l, p)| l * p).sum::<f64>() / total;
        prop_assert!((rep.route_completion - expect).abs() < 1e-9);
        prop_assert!((rep.driving_score - expect).abs() < 1e-9);
    }
}

#[test]
fn replayed_trace_reproduces_events_and_result() {
    let dir = tempfile::tempdir().unwrap();
    let sc_path = dir.path().join("dart.toml");
    std::fs::write(&sc_path, DART).unwrap();
    let trace_path = dir.path().join("dart.jsonl");

    let sc = load_scenario_file(&sc_path).unwrap();
    let opts = EpisodeOptions {
        variant: Variant::NoLlm,
        ..EpisodeOptions::default()
    };
    let ep = Episode::new(sc.clone(), &opts)
        .unwrap()
        .with_trace(Box::new(BufWriter::new(File::create(&trace_path).unwrap())))
        .unwrap();
    let (live, records) = ep.run().unwrap();
    assert!(live.collisions() >= 1, "{live:?}");

    let trace = read_trace(BufReader::new(File::open(&trace_path).unwrap())).unwrap();
    assert_eq!(trace.ticks, records);
    let rule = StopRule::from(&sc.safety);
    let again = detect_infractions(&trace.ticks, &sc.world.network, rule, trace.header.dt);
    assert_eq!(again, live.infractions);
    assert_eq!(again, detect_infractions(&trace.ticks, &sc.world.network, rule, trace.header.dt));

    let replayed = replay_trace(&trace_path, None).unwrap();
    assert_eq!(replayed, live);
    assert_eq!(trace.result.as_ref(), Some(&live));
}
