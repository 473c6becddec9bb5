use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{
    aggregate, detect_infractions, route_completion, BenchmarkReport, Episode, EpisodeError, EpisodeOptions,
    ReportError, RouteResult, StopRule, Variant,
};
use crate::scenario::{load_scenario_file, Scenario, ScenarioError};
use crate::trace::{read_trace, TraceError};

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no scenario documents in {0}")]
    EmptySuite(PathBuf),
    #[error("trace does not name its scenario file; pass it explicitly")]
    NoScenario,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SuiteError + '_ {
    move |source| SuiteError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Every `*.toml` scenario in `dir`, in file-name order.
pub fn load_suite(dir: &Path) -> Result<Vec<Scenario>, SuiteError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(SuiteError::EmptySuite(dir.to_path_buf()));
    }
    paths.iter().map(|p| Ok(load_scenario_file(p)?)).collect()
}

fn run_one(sc: &Scenario, opts: &EpisodeOptions, trace_dir: Option<&Path>) -> Result<(RouteResult, String), SuiteError> {
    let mut ep = Episode::new(sc.clone(), opts)?;
    if let Some(dir) = trace_dir {
        let path = dir.join(format!("{}.{}.jsonl", sc.name, opts.variant.label()));
        let f = File::create(&path).map_err(io_err(&path))?;
        ep = ep.with_trace(Box::new(BufWriter::new(f)))?;
    }
    let digest = ep.header().config_digest.clone();
    let (result, _) = ep.run()?;
    Ok((result, digest))
}

/// Runs every scenario (in parallel, one thread each) and aggregates.
pub fn run_suite(
    scenarios: &[Scenario],
    opts: &EpisodeOptions,
    trace_dir: Option<&Path>,
) -> Result<BenchmarkReport, SuiteError> {
    let outcomes: Vec<Result<(RouteResult, String), SuiteError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = scenarios
            .iter()
            .map(|sc| scope.spawn(move || run_one(sc, opts, trace_dir)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("episode thread panicked"))
            .collect()
    });
    let mut results = Vec::with_capacity(outcomes.len());
    let mut h = Sha256::new();
    for o in outcomes {
        let (r, digest) = o?;
        h.update(digest.as_bytes());
        results.push(r);
    }
    Ok(aggregate(results, opts.variant.label(), hex::encode(&h.finalize()[..8]))?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ablation {
    pub full: BenchmarkReport,
    pub no_llm: BenchmarkReport,
}

impl Ablation {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let (a, b) = (&self.full, &self.no_llm);
        let _ = writeln!(s, "{:<22}{:>10}{:>10}{:>10}", "metric", "full", "no-llm", "delta");
        for (name, x, y) in [
            ("driving score", a.driving_score, b.driving_score),
            ("route completion %", a.route_completion, b.route_completion),
            ("infraction penalty", a.infraction_penalty, b.infraction_penalty),
            ("mean duration s", a.mean_duration, b.mean_duration),
            ("blocked %", a.blocked, b.blocked),
            ("timeouts %", a.timeouts, b.timeouts),
        ] {
            let _ = writeln!(s, "{name:<22}{x:>10.2}{y:>10.2}{:>+10.2}", x - y);
        }
        s
    }
}

pub fn ablate(scenarios: &[Scenario], opts: &EpisodeOptions) -> Result<Ablation, SuiteError> {
    let full = run_suite(
        scenarios,
        &EpisodeOptions {
            variant: Variant::Full,
            ..opts.clone()
        },
        None,
    )?;
    let no_llm = run_suite(
        scenarios,
        &EpisodeOptions {
            variant: Variant::NoLlm,
            ..opts.clone()
        },
        None,
    )?;
    Ok(Ablation { full, no_llm })
}

pub fn render_report(r: &BenchmarkReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<24}{:>9}{:>8}{:>7}{:>6}{:>9}{:>8}{:>9}",
        "route", "length", "RC", "PM", "inf", "DS", "time", "status"
    );
    for r in &r.routes {
        let status = if r.blocked {
            "blocked"
        } else if r.timed_out {
            "timeout"
        } else {
            "done"
        };
        let _ = writeln!(
            s,
            "{:<24}{:>9.1}{:>8.2}{:>7.3}{:>6}{:>9.2}{:>8.1}{:>9}",
            r.route_id,
            r.route_length,
            r.completion,
            r.penalty_multiplier,
            r.infractions.len(),
            r.driving_score,
            r.duration,
            status
        );
    }
    let _ = writeln!(
        s,
        "[{}] DS {:.2}  RC {:.2}  IP {:.3}  blocked {:.1}%  timeouts {:.1}%  mean time {:.1} s  (config {})",
        r.variant, r.driving_score, r.route_completion, r.infraction_penalty, r.blocked, r.timeouts, r.mean_duration,
        r.config_digest
    );
    s
}

/// Recomputes a trace's route result from its tick records alone.
pub fn replay_trace(trace_path: &Path, scenario_path: Option<&Path>) -> Result<RouteResult, SuiteError> {
    let f = File::open(trace_path).map_err(io_err(trace_path))?;
    let trace = read_trace(BufReader::new(f))?;
    let sc_path = match scenario_path {
        Some(p) => p.to_path_buf(),
        None => PathBuf::from(trace.header.source.as_ref().ok_or(SuiteError::NoScenario)?),
    };
    let sc = load_scenario_file(&sc_path)?;
    let world = &sc.world;
    let dt = trace.header.dt;
    let infractions = detect_infractions(&trace.ticks, &world.network, StopRule::from(&sc.safety), dt);
    let trajectory: Vec<_> = std::iter::once(sc.initial.ego.vehicle.pose.position)
        .chain(trace.ticks.iter().map(|t| t.ego.pose.position))
        .collect();
    let completion = route_completion(&trajectory, &world.route, &world.network);
    let length = world.route.total_length();
    let last = trace.ticks.last();
    let stopped = trace
        .ticks
        .iter()
        .rev()
        .take_while(|t| t.ego.speed < sc.bench.immobile_speed)
        .count() as f64
        * dt;
    let finished = last.is_some_and(|t| t.route_s >= length - sc.bench.goal_tolerance);
    let blocked = !finished && stopped >= sc.bench.immobilization - 1e-9;
    let timed_out =
        !finished && !blocked && last.is_some_and(|t| t.sim_time >= sc.bench.time_limit_for(length) - 1e-9);
    Ok(RouteResult::new(
        sc.name.clone(),
        length,
        completion,
        infractions,
        &sc.bench.coefficients,
        timed_out,
        blocked,
        last.map_or(0, |t| t.tick),
        last.map_or(0.0, |t| t.sim_time),
    ))
}
