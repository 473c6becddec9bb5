use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{route_completion, InfractionDetector, InfractionEvent, RouteResult, StopRule};
use crate::arbiter::{Anchor, Arbiter, ArbiterEvent, ArbiterInput, CommandSource, Phase, SlowPath};
use crate::codec::{encode_scene, SceneDescription};
use crate::geometry::Vec2;
use crate::llm::{
    Advisor, AdvisorError, AdvisorRequest, ChatClient, ClientConfig, DecisionSetup, EndpointClient, Exemplar,
    RecordingClient, ReplayClient, ScriptedClient, SyncAdvisor, ThreadedAdvisor,
};
use crate::perception::{sense, PerceptionFrame};
use crate::planner::{plan, ManeuverOverride, PlanContext, PlanError};
use crate::safety::{control, ControlCommand, ControllerState, EgoInput, SafetyConfig};
use crate::scenario::Scenario;
use crate::trace::{TickRecord, TraceHeader, TraceRecord, TraceWriter, TRACE_FORMAT};
use crate::world::{Location, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    NoLlm,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoLlm => "no-llm",
        }
    }
}

/// Where advisor replies come from.
#[derive(Clone)]
pub enum AdvisorSpec {
    /// The script named in the scenario document, if any.
    FromScenario,
    Scripted(PathBuf),
    Endpoint(ClientConfig),
    Replay(PathBuf),
    Client(Arc<dyn ChatClient>),
}

impl AdvisorSpec {
    pub fn client(&self, scenario: &Scenario) -> Result<Arc<dyn ChatClient>, AdvisorError> {
        Ok(match self {
            AdvisorSpec::FromScenario => match scenario.advisor_script() {
                Some(p) => Arc::new(ScriptedClient::from_file(&p)?),
                None => {
                    log::warn!("scenario {} names no advisor script; every request will fail", scenario.name);
                    Arc::new(ScriptedClient::default())
                }
            },
            AdvisorSpec::Scripted(p) => Arc::new(ScriptedClient::from_file(p)?),
            AdvisorSpec::Endpoint(cfg) => Arc::new(EndpointClient::new(cfg.clone())?),
            AdvisorSpec::Replay(dir) => Arc::new(ReplayClient::new(dir.clone())),
            AdvisorSpec::Client(c) => c.clone(),
        })
    }
}

#[derive(Clone)]
pub struct EpisodeOptions {
    pub variant: Variant,
    /// Overrides the scenario's perception seed.
    pub seed: Option<u64>,
    pub advisor: AdvisorSpec,
    /// Overrides the scenario's simulated advisor latency.
    pub latency_ticks: Option<u64>,
    /// Query on a worker thread instead of simulating latency; not reproducible.
    pub threaded: bool,
    /// Directory to record advisor exchanges into.
    pub record: Option<PathBuf>,
    pub exemplars: Vec<Exemplar>,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        EpisodeOptions {
            variant: Variant::Full,
            seed: None,
            advisor: AdvisorSpec::FromScenario,
            latency_ticks: None,
            threaded: false,
            record: None,
            exemplars: vec![Exemplar::default()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    TimedOut,
    Blocked,
}

#[derive(Debug, thiserror::Error)]
pub enum EpisodeError {
    #[error("advisor: {0}")]
    Advisor(#[from] AdvisorError),
    #[error("trace: {0}")]
    Io(#[from] std::io::Error),
}

/// Degraded-profile execution of an advisor maneuver against the current tick's inputs.
struct SlowEnv<'a> {
    scenario: &'a Scenario,
    frame: &'a PerceptionFrame,
    location: &'a Location,
    state: &'a WorldState,
    degraded: SafetyConfig,
    input: EgoInput,
    ctrl: &'a mut ControllerState,
    scene: Option<SceneDescription>,
}

impl SlowEnv<'_> {
    fn scene(&mut self) -> &SceneDescription {
        let (frame, location, net) = (self.frame, self.location, &self.scenario.world.network);
        self.scene.get_or_insert_with(|| encode_scene(frame, location, net))
    }
}

impl SlowPath for SlowEnv<'_> {
    fn scene_digest(&mut self) -> String {
        self.scene().digest.clone()
    }

    fn execute(&mut self, maneuver: &ManeuverOverride) -> Result<ControlCommand, PlanError> {
        let world = &self.scenario.world;
        let ctx = PlanContext {
            ego: self.state.ego.vehicle.pose,
            route_s: self.state.ego.route_s,
            location: self.location,
            route: &world.route,
            network: &world.network,
            frame: self.frame,
        };
        let p = plan(&ctx, Some(maneuver), &self.scenario.planner)?;
        let out = control(&p, self.frame, &self.degraded, &self.input, self.ctrl);
        *self.ctrl = out.state;
        Ok(out.command)
    }
}

/// A closed-loop run of one scenario.
pub struct Episode {
    scenario: Scenario,
    opts_variant: Variant,
    state: WorldState,
    fast_ctrl: ControllerState,
    slow_ctrl: ControllerState,
    arbiter: Arbiter,
    advisor: Option<Box<dyn Advisor>>,
    detector: InfractionDetector,
    infractions: Vec<InfractionEvent>,
    trajectory: Vec<Vec2>,
    records: Vec<TickRecord>,
    stopped_for: f64,
    time_limit: f64,
    termination: Option<Termination>,
    writer: Option<TraceWriter<Box<dyn Write>>>,
    header: TraceHeader,
}

fn config_digest(scenario: &Scenario, variant: Variant, seed: u64, latency: u64) -> String {
    let mut h = Sha256::new();
    h.update(scenario.digest.as_bytes());
    h.update(variant.label().as_bytes());
    h.update(seed.to_le_bytes());
    h.update(latency.to_le_bytes());
    hex::encode(&h.finalize()[..8])
}

impl Episode {
    pub fn new(mut scenario: Scenario, opts: &EpisodeOptions) -> Result<Self, EpisodeError> {
        if let Some(seed) = opts.seed {
            scenario.sense.seed = seed;
        }
        let dt = scenario.world.dt;
        let latency = opts.latency_ticks.unwrap_or(scenario.advisor.latency_ticks);
        let advisor: Option<Box<dyn Advisor>> = match opts.variant {
            Variant::NoLlm => None,
            Variant::Full => {
                let mut client = opts.advisor.client(&scenario)?;
                if let Some(dir) = &opts.record {
                    client = Arc::new(RecordingClient::new(ArcClient(client), dir.clone()));
                }
                let setup = DecisionSetup {
                    client,
                    vocab: scenario.vocabulary.clone(),
                    exemplars: opts.exemplars.clone(),
                };
                Some(if opts.threaded {
                    Box::new(ThreadedAdvisor::new(setup, dt))
                } else {
                    Box::new(SyncAdvisor::new(setup, latency, dt))
                })
            }
        };
        let route_length = scenario.world.route.total_length();
        let header = TraceHeader {
            format: TRACE_FORMAT,
            scenario: scenario.name.clone(),
            source: scenario.source.as_ref().map(|p| p.display().to_string()),
            config_digest: config_digest(&scenario, opts.variant, scenario.sense.seed, latency),
            variant: opts.variant.label().into(),
            seed: scenario.sense.seed,
            dt,
            route_length,
        };
        Ok(Episode {
            arbiter: Arbiter::new(scenario.arbiter, scenario.vocabulary.clone()),
            detector: InfractionDetector::new(&scenario.world.network, StopRule::from(&scenario.safety)),
            state: scenario.initial.clone(),
            trajectory: vec![scenario.initial.ego.vehicle.pose.position],
            time_limit: scenario.bench.time_limit_for(route_length),
            opts_variant: opts.variant,
            fast_ctrl: ControllerState::default(),
            slow_ctrl: ControllerState::default(),
            advisor,
            infractions: vec![],
            records: vec![],
            stopped_for: 0.0,
            termination: None,
            writer: None,
            header,
            scenario,
        })
    }

    /// Streams the trace to `out`, starting with the header.
    pub fn with_trace(mut self, out: Box<dyn Write>) -> Result<Self, EpisodeError> {
        let mut w = TraceWriter::new(out);
        w.write(&TraceRecord::Header(self.header.clone()))?;
        self.writer = Some(w);
        Ok(self)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    /// Direct access to the live world state, for injecting events mid-run.
    pub fn state_mut(&mut self) -> &mut WorldState {
        &mut self.state
    }

    pub fn phase(&self) -> Phase {
        self.arbiter.phase()
    }

    pub fn records(&self) -> &[TickRecord] {
        &self.records
    }

    pub fn header(&self) -> &TraceHeader {
        &self.header
    }

    pub fn termination(&self) -> Option<Termination> {
        self.termination
    }

    /// Runs one fast tick. Returns the termination once the episode has ended.
    pub fn step_once(&mut self) -> Result<Option<Termination>, EpisodeError> {
        if self.termination.is_some() {
            return Ok(self.termination);
        }
        let sc = &self.scenario;
        let world = &sc.world;
        let dt = world.dt;
        let tick = self.state.tick;
        let ego = &self.state.ego.vehicle;

        let frame = sense(&self.state, &world.network, &sc.sense);
        let location = world.network.locate(&ego.pose);
        let ctx = PlanContext {
            ego: ego.pose,
            route_s: self.state.ego.route_s,
            location: &location,
            route: &world.route,
            network: &world.network,
            frame: &frame,
        };
        let input = EgoInput {
            speed: ego.speed,
            bbox: ego.bbox,
            limits: world.limits,
            dt,
        };
        let (fast, plan_unavailable) = match plan(&ctx, None, &sc.planner) {
            Ok(p) => {
                let out = control(&p, &frame, &sc.safety, &input, &self.fast_ctrl);
                self.fast_ctrl = out.state;
                (out.command, false)
            }
            Err(e) => {
                log::debug!("tick {tick}: {e}");
                (ControlCommand::hold(), true)
            }
        };

        let (command, source, events) = match self.advisor.as_mut() {
            None => (fast, CommandSource::Fast, vec![]),
            Some(advisor) => {
                let reply = advisor.poll(tick);
                let before = self.arbiter.phase();
                let anchor = anchor(sc, &self.state, &location);
                let mut env = SlowEnv {
                    scenario: sc,
                    frame: &frame,
                    location: &location,
                    state: &self.state,
                    degraded: sc.safety.degraded(),
                    input,
                    ctrl: &mut self.slow_ctrl,
                    scene: None,
                };
                let out = self.arbiter.tick(
                    ArbiterInput {
                        tick,
                        dt,
                        ego_speed: input.speed,
                        fast: &fast,
                        plan_unavailable,
                        reply,
                        anchor,
                    },
                    &mut env,
                );
                if out.cancel {
                    advisor.cancel();
                }
                if out.request.is_some() {
                    let scene = env.scene().clone();
                    advisor.submit(AdvisorRequest { tick, scene });
                }
                if before != Phase::LlmExecuting && self.arbiter.phase() == Phase::LlmExecuting {
                    // fresh lateral controller for each maneuver
                    self.slow_ctrl = ControllerState {
                        stop_latch: self.slow_ctrl.stop_latch.clone(),
                        ..ControllerState::default()
                    };
                }
                for e in &out.events {
                    log_event(tick, e);
                }
                (out.command, out.source, out.events)
            }
        };

        let next = world.step(&self.state, &command, dt);
        let mut rec = TickRecord {
            tick: next.tick,
            sim_time: next.sim_time,
            ego: next.ego.vehicle.clone(),
            route_s: next.ego.route_s,
            participants: next.participants.clone(),
            signal_phases: next.signal_phases.clone(),
            phase: self.arbiter.phase(),
            source,
            command,
            events,
            infractions: vec![],
        };
        rec.infractions = self.detector.observe(&rec, dt);
        for e in &rec.infractions {
            log::info!("tick {}: infraction {:?}", rec.tick, e.kind);
        }
        self.infractions.extend(rec.infractions.iter().cloned());
        self.trajectory.push(next.ego.vehicle.pose.position);
        if let Some(w) = self.writer.as_mut() {
            w.write(&TraceRecord::Tick(Box::new(rec.clone())))?;
        }
        self.records.push(rec);

        let bench = &sc.bench;
        self.stopped_for = if next.ego.vehicle.speed < bench.immobile_speed {
            self.stopped_for + dt
        } else {
            0.0
        };
        self.termination = if next.ego.route_s >= world.route.total_length() - bench.goal_tolerance {
            Some(Termination::Completed)
        } else if self.stopped_for >= bench.immobilization - 1e-9 {
            Some(Termination::Blocked)
        } else if next.sim_time >= self.time_limit - 1e-9 {
            Some(Termination::TimedOut)
        } else {
            None
        };
        self.state = next;
        Ok(self.termination)
    }

    /// Steps to termination and scores the run.
    pub fn run(mut self) -> Result<(RouteResult, Vec<TickRecord>), EpisodeError> {
        while self.step_once()?.is_none() {}
        self.finish()
    }

    /// Scores the run so far and closes the trace.
    pub fn finish(mut self) -> Result<(RouteResult, Vec<TickRecord>), EpisodeError> {
        let sc = &self.scenario;
        let completion = route_completion(&self.trajectory, &sc.world.route, &sc.world.network);
        let result = RouteResult::new(
            sc.name.clone(),
            sc.world.route.total_length(),
            completion,
            self.infractions.clone(),
            &sc.bench.coefficients,
            self.termination == Some(Termination::TimedOut),
            self.termination == Some(Termination::Blocked),
            self.state.tick,
            self.state.sim_time,
        );
        if let Some(mut w) = self.writer.take() {
            w.write(&TraceRecord::End(Box::new(result.clone())))?;
            w.flush()?;
        }
        log::info!(
            "{} [{}]: RC {:.2} DS {:.2} after {:.2} s ({:?})",
            sc.name,
            self.opts_variant.label(),
            result.completion,
            result.driving_score,
            result.duration,
            self.termination
        );
        Ok((result, self.records))
    }
}

fn log_event(tick: u64, e: &ArbiterEvent) {
    log::info!("tick {tick}: {e:?}");
}

fn anchor(sc: &Scenario, state: &WorldState, location: &Location) -> Anchor {
    let pos = state.ego.vehicle.pose.position;
    let s = state.ego.route_s;
    let proj = sc.world.route.polyline().project_window(pos, s - 5.0, s + 20.0);
    let lane = match location {
        Location::OnRoad(l) => l.lane,
        Location::OffRoad { nearest_lane, .. } => *nearest_lane,
    };
    Anchor {
        route_s: proj.s,
        offset: proj.lateral,
        lane,
        lane_width: sc.world.network.lane(lane).map_or(3.5, |l| l.width),
    }
}

/// Lets a shared client be wrapped by the recording decorator.
struct ArcClient(Arc<dyn ChatClient>);

impl ChatClient for ArcClient {
    fn query(&self, bundle: &crate::llm::PromptBundle) -> Result<String, AdvisorError> {
        self.0.query(bundle)
    }
}
