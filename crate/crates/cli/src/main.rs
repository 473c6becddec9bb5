use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dualdrive::bench::{
    ablate, load_suite, render_report, replay_trace, run_suite, AdvisorSpec, BenchmarkReport, Episode, EpisodeOptions,
    RouteResult, Variant,
};
use dualdrive::llm::{AdvisorError, ChatClient, ClientConfig, PromptBundle};
use dualdrive::scenario::load_scenario_file;

#[derive(Parser)]
#[command(name = "dualdrive", version, about = "Dual-rate driving stack simulator and benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct StackArgs {
    /// Run the fast stream alone, without the advisor.
    #[arg(long)]
    no_llm: bool,
    /// Advisor source: scripted:<file>, endpoint, or replay:<dir>. Defaults to the scenario's script.
    #[arg(long, value_name = "SPEC")]
    llm: Option<String>,
    /// Chat-completions URL for `--llm endpoint`.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Per-request advisor timeout (s).
    #[arg(long, value_name = "SECONDS")]
    llm_timeout: Option<f64>,
    /// Simulated advisor latency in fast ticks.
    #[arg(long)]
    latency_ticks: Option<u64>,
    /// Record advisor exchanges into this directory for later replay.
    #[arg(long, value_name = "DIR")]
    record: Option<PathBuf>,
    /// Perception noise seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Exit nonzero if any collision occurred.
    #[arg(long)]
    ci: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        stack: StackArgs,
        /// Write the JSON-lines trace here.
        #[arg(long, value_name = "FILE")]
        trace: Option<PathBuf>,
        /// Pace ticks in wall-clock time and query the advisor on a worker thread.
        #[arg(long)]
        realtime: bool,
    },
    /// Run every scenario in a directory and print the report.
    Suite {
        dir: PathBuf,
        #[command(flatten)]
        stack: StackArgs,
        /// Write the machine-readable report here.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Write one trace per scenario into this directory.
        #[arg(long, value_name = "DIR")]
        traces: Option<PathBuf>,
    },
    /// Recompute metrics from a trace file.
    Replay {
        trace: PathBuf,
        /// Scenario document, if the trace does not name it.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Run a suite with and without the advisor and print the differences.
    Ablate {
        dir: PathBuf,
        #[command(flatten)]
        stack: StackArgs,
    },
    /// Print the scene digest and text of every advisor request a run makes.
    Probe {
        scenario: PathBuf,
        #[command(flatten)]
        stack: StackArgs,
    },
}

impl StackArgs {
    fn options(&self) -> Result<EpisodeOptions> {
        let advisor = match self.llm.as_deref() {
            None => AdvisorSpec::FromScenario,
            Some("endpoint") => {
                let mut cfg = ClientConfig::default();
                if let Some(e) = &self.endpoint {
                    cfg.endpoint = e.clone();
                }
                if let Some(m) = &self.model {
                    cfg.model = m.clone();
                }
                if let Some(t) = self.llm_timeout {
                    cfg.timeout = t;
                }
                cfg.validate().map_err(anyhow::Error::msg)?;
                AdvisorSpec::Endpoint(cfg)
            }
            Some(s) => match s.split_once(':') {
                Some(("scripted", f)) => AdvisorSpec::Scripted(f.into()),
                Some(("replay", d)) => AdvisorSpec::Replay(d.into()),
                _ => bail!("unknown --llm spec {s:?}; expected scripted:<file>, endpoint or replay:<dir>"),
            },
        };
        Ok(EpisodeOptions {
            variant: if self.no_llm { Variant::NoLlm } else { Variant::Full },
            seed: self.seed,
            advisor,
            latency_ticks: self.latency_ticks,
            record: self.record.clone(),
            ..EpisodeOptions::default()
        })
    }
}

fn print_result(r: &RouteResult) {
    println!(
        "{}: RC {:.2}%  PM {:.3}  DS {:.2}  infractions {}  {:.2} s{}{}",
        r.route_id,
        r.completion,
        r.penalty_multiplier,
        r.driving_score,
        r.infractions.len(),
        r.duration,
        if r.blocked { "  [blocked]" } else { "" },
        if r.timed_out { "  [timeout]" } else { "" },
    );
    for e in &r.infractions {
        println!("  tick {:>6}  {:?}  (id {})", e.tick, e.kind, e.other);
    }
}

fn ci_exit(ci: bool, collisions: usize) -> ExitCode {
    if ci && collisions > 0 {
        eprintln!("{collisions} collision(s)");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn report_collisions(r: &BenchmarkReport) -> usize {
    r.routes.iter().map(RouteResult::collisions).sum()
}

fn run(scenario: &Path, stack: &StackArgs, trace: Option<&Path>, realtime: bool) -> Result<ExitCode> {
    let sc = load_scenario_file(scenario)?;
    let opts = EpisodeOptions {
        threaded: realtime,
        ..stack.options()?
    };
    let mut ep = Episode::new(sc, &opts)?;
    if let Some(path) = trace {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        ep = ep.with_trace(Box::new(BufWriter::new(f)))?;
    }
    let start = Instant::now();
    while ep.step_once()?.is_none() {
        if realtime {
            let due = start + Duration::from_secs_f64(ep.state().sim_time);
            std::thread::sleep(due.saturating_duration_since(Instant::now()));
        }
    }
    let (result, _) = ep.finish()?;
    print_result(&result);
    Ok(ci_exit(stack.ci, result.collisions()))
}

/// Prints each request and forwards it to the configured client.
struct Probe(Arc<dyn ChatClient>);

impl ChatClient for Probe {
    fn query(&self, bundle: &PromptBundle) -> Result<String, AdvisorError> {
        println!("--- request {}\n{}", bundle.scene_digest, bundle.scene);
        let reply = self.0.query(bundle);
        match &reply {
            Ok(r) => println!("--- reply\n{r}"),
            Err(e) => println!("--- no reply: {e}"),
        }
        reply
    }
}

fn probe(scenario: &Path, stack: &StackArgs) -> Result<ExitCode> {
    let sc = load_scenario_file(scenario)?;
    let mut opts = stack.options()?;
    let inner = opts.advisor.client(&sc)?;
    opts.advisor = AdvisorSpec::Client(Arc::new(Probe(inner)));
    opts.variant = Variant::Full;
    let (result, records) = Episode::new(sc, &opts)?.run()?;
    for r in &records {
        for e in &r.events {
            println!("tick {:>6}  {:?}", r.tick, e);
        }
    }
    print_result(&result);
    Ok(ExitCode::SUCCESS)
}

fn main() -> Result<ExitCode> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run {
            scenario,
            stack,
            trace,
            realtime,
        } => run(&scenario, &stack, trace.as_deref(), realtime),
        Command::Suite {
            dir,
            stack,
            out,
            traces,
        } => {
            let scenarios = load_suite(&dir)?;
            if let Some(t) = &traces {
                std::fs::create_dir_all(t)?;
            }
            let report = run_suite(&scenarios, &stack.options()?, traces.as_deref())?;
            print!("{}", render_report(&report));
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_string_pretty(&report)?)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(ci_exit(stack.ci, report_collisions(&report)))
        }
        Command::Replay { trace, scenario } => {
            let r = replay_trace(&trace, scenario.as_deref())?;
            print_result(&r);
            Ok(ExitCode::SUCCESS)
        }
        Command::Ablate { dir, stack } => {
            let scenarios = load_suite(&dir)?;
            let a = ablate(&scenarios, &stack.options()?)?;
            print!("{}", render_report(&a.full));
            print!("{}", render_report(&a.no_llm));
            print!("{}", a.render());
            Ok(ci_exit(stack.ci, report_collisions(&a.full) + report_collisions(&a.no_llm)))
        }
        Command::Probe { scenario, stack } => probe(&scenario, &stack),
    }
}
