//! Routes actuation between the fast stream and the slow advisor stream.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::codec::{command_to_primitive, CommandKind, ManeuverCommand, PrimitiveContext, Vocabulary};
use crate::llm::AdvisorOutcome;
use crate::planner::{ManeuverOverride, ManeuverPrimitive, PlanError};
use crate::safety::{BrakeCause, ControlCommand};
use crate::world::LaneId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    E2eActive,
    ProtectiveStop,
    LlmPending,
    LlmExecuting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArbiterConfig {
    /// Speed below which the ego counts as stopped (m/s).
    pub block_speed_eps: f64,
    /// Stopped time before the advisor is consulted (s).
    pub t_wait: f64,
    pub maneuver_timeout: f64,
    /// Window for the forward-progress handback of open-ended holds (s).
    pub progress_window: f64,
    /// Re-requests allowed per stop episode after a stale or failed reply.
    pub max_rerequests: u32,
    pub allow_opposite_lane_change: bool,
}

impl Default for ArbiterConfig {
    fn default() -> Self {
        ArbiterConfig {
            block_speed_eps: 0.2,
            t_wait: 4.0,
            maneuver_timeout: 15.0,
            progress_window: 2.0,
            max_rerequests: 2,
            allow_opposite_lane_change: false,
        }
    }
}

impl ArbiterConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("block_speed_eps", self.block_speed_eps),
            ("t_wait", self.t_wait),
            ("maneuver_timeout", self.maneuver_timeout),
            ("progress_window", self.progress_window),
        ] {
            if !(v > 0.0) {
                return Err(format!("arbiter.{name} must be > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandSource {
    Fast,
    ProtectiveHold,
    Slow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionReason {
    DurationElapsed,
    Timeout,
    Progress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ArbiterEvent {
    PhaseChange { from: Phase, to: Phase },
    AdvisorRequest { scene_digest: String, attempt: u32 },
    AdvisorResponse { command: ManeuverCommand, latency: f64, attempts: u32 },
    StaleDiscard { issued_digest: String, current_digest: String },
    AdvisorFailed { error: String },
    RequestsExhausted,
    Veto { cause: Option<BrakeCause> },
    ManeuverComplete { reason: CompletionReason },
    ManeuverRejected { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveManeuver {
    pub command: ManeuverCommand,
    pub maneuver: ManeuverOverride,
    pub started_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbiterState {
    pub phase: Phase,
    pub stop_entered_tick: Option<u64>,
    /// Consecutive ticks with speed below the block threshold.
    pub stopped_ticks: u64,
    pub active: Option<ActiveManeuver>,
    pub scene_digest_at_request: Option<String>,
    /// Requests issued in the current stop episode.
    pub requests: u32,
    pub exhausted: bool,
    recent_speeds: VecDeque<f64>,
}

impl Default for ArbiterState {
    fn default() -> Self {
        ArbiterState {
            phase: Phase::E2eActive,
            stop_entered_tick: None,
            stopped_ticks: 0,
            active: None,
            scene_digest_at_request: None,
            requests: 0,
            exhausted: false,
            recent_speeds: VecDeque::new(),
        }
    }
}

/// Where a maneuver starts, taken from the ego's current route position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub route_s: f64,
    pub offset: f64,
    pub lane: LaneId,
    pub lane_width: f64,
}

pub struct ArbiterInput<'a> {
    pub tick: u64,
    pub dt: f64,
    pub ego_speed: f64,
    pub fast: &'a ControlCommand,
    pub plan_unavailable: bool,
    pub reply: Option<AdvisorOutcome>,
    pub anchor: Anchor,
}

/// Services the arbiter needs from the episode runner.
pub trait SlowPath {
    /// Digest of the scene as it is now.
    fn scene_digest(&mut self) -> String;
    /// DEGRADED-profile command following `maneuver`.
    fn execute(&mut self, maneuver: &ManeuverOverride) -> Result<ControlCommand, PlanError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArbiterOutput {
    pub command: ControlCommand,
    pub source: CommandSource,
    pub events: Vec<ArbiterEvent>,
    /// Digest to request advice for; the runner submits the matching scene.
    pub request: Option<String>,
    /// Any in-flight advisor request should be dropped.
    pub cancel: bool,
}

pub struct Arbiter {
    pub cfg: ArbiterConfig,
    pub vocab: Vocabulary,
    pub state: ArbiterState,
}

fn escalating(cmd: &ControlCommand, plan_unavailable: bool) -> bool {
    plan_unavailable
        || (cmd.emergency_brake && matches!(cmd.brake_cause, Some(BrakeCause::Collision | BrakeCause::Protective)))
}

impl Arbiter {
    pub fn new(cfg: ArbiterConfig, vocab: Vocabulary) -> Self {
        Arbiter {
            cfg,
            vocab,
            state: ArbiterState::default(),
        }
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    fn wait_ticks(&self, dt: f64) -> u64 {
        (self.cfg.t_wait / dt - 1e-9).ceil().max(1.0) as u64
    }

    fn set_phase(&mut self, to: Phase, events: &mut Vec<ArbiterEvent>) {
        let from = self.state.phase;
        if from != to {
            events.push(ArbiterEvent::PhaseChange { from, to });
            self.state.phase = to;
        }
    }

    fn reset_to_e2e(&mut self, events: &mut Vec<ArbiterEvent>) {
        self.set_phase(Phase::E2eActive, events);
        let s = &mut self.state;
        s.stop_entered_tick = None;
        s.active = None;
        s.scene_digest_at_request = None;
        s.requests = 0;
        s.exhausted = false;
        s.recent_speeds.clear();
    }

    fn request(&mut self, env: &mut dyn SlowPath, events: &mut Vec<ArbiterEvent>) -> Option<String> {
        let digest = env.scene_digest();
        self.state.requests += 1;
        self.state.scene_digest_at_request = Some(digest.clone());
        events.push(ArbiterEvent::AdvisorRequest {
            scene_digest: digest.clone(),
            attempt: self.state.requests,
        });
        Some(digest)
    }

    /// Re-request after a stale or failed reply, or give up for this stop episode.
    fn retry(&mut self, env: &mut dyn SlowPath, events: &mut Vec<ArbiterEvent>) -> Option<String> {
        if self.state.requests <= self.cfg.max_rerequests {
            self.request(env, events)
        } else {
            events.push(ArbiterEvent::RequestsExhausted);
            self.state.exhausted = true;
            self.state.scene_digest_at_request = None;
            self.set_phase(Phase::ProtectiveStop, events);
            None
        }
    }

    fn start_maneuver(&mut self, cmd: ManeuverCommand, input: &ArbiterInput<'_>) -> ActiveManeuver {
        let ctx = PrimitiveContext {
            ego_speed: input.ego_speed,
            lane_width: input.anchor.lane_width,
        };
        let primitive: ManeuverPrimitive = command_to_primitive(&cmd, &ctx, &self.vocab);
        ActiveManeuver {
            command: cmd,
            maneuver: ManeuverOverride {
                primitive,
                anchor_s: input.anchor.route_s,
                anchor_offset: input.anchor.offset,
                anchor_lane: input.anchor.lane,
                allow_opposite: self.cfg.allow_opposite_lane_change,
            },
            started_tick: input.tick,
        }
    }

    pub fn tick(&mut self, mut input: ArbiterInput<'_>, env: &mut dyn SlowPath) -> ArbiterOutput {
        let mut events = Vec::new();
        let mut request = None;
        let mut cancel = false;
        let stopped = input.ego_speed < self.cfg.block_speed_eps;
        self.state.stopped_ticks = if stopped { self.state.stopped_ticks + 1 } else { 0 };
        let blocked = escalating(input.fast, input.plan_unavailable);

        if self.state.phase == Phase::E2eActive && stopped && blocked {
            self.state.stop_entered_tick = Some(input.tick);
            self.set_phase(Phase::ProtectiveStop, &mut events);
        }

        if matches!(self.state.phase, Phase::ProtectiveStop | Phase::LlmPending) && !blocked {
            // the fast stream resolved the situation on its own
            if self.state.phase == Phase::LlmPending {
                cancel = true;
            }
            self.reset_to_e2e(&mut events);
        }

        if self.state.phase == Phase::ProtectiveStop
            && !self.state.exhausted
            && self.state.stopped_ticks >= self.wait_ticks(input.dt)
        {
            self.set_phase(Phase::LlmPending, &mut events);
            request = if self.state.requests == 0 {
                self.request(env, &mut events)
            } else {
                // back here after a rejected maneuver
                self.retry(env, &mut events)
            };
        }

        if self.state.phase == Phase::LlmPending && request.is_none() {
            match input.reply.take() {
                None => {}
                Some(Err(f)) => {
                    events.push(ArbiterEvent::AdvisorFailed { error: f.error });
                    request = self.retry(env, &mut events);
                }
                Some(Ok(r)) => {
                    let current = env.scene_digest();
                    if r.scene_digest != current {
                        events.push(ArbiterEvent::StaleDiscard {
                            issued_digest: r.scene_digest,
                            current_digest: current,
                        });
                        request = self.retry(env, &mut events);
                    } else {
                        events.push(ArbiterEvent::AdvisorResponse {
                            command: r.command,
                            latency: r.latency,
                            attempts: r.attempts,
                        });
                        self.state.active = Some(self.start_maneuver(r.command, &input));
                        self.state.scene_digest_at_request = None;
                        self.state.recent_speeds.clear();
                        self.set_phase(Phase::LlmExecuting, &mut events);
                    }
                }
            }
        }

        if self.state.phase == Phase::LlmExecuting {
            if let Some(out) = self.execute(&input, env, &mut events) {
                return ArbiterOutput {
                    command: out,
                    source: CommandSource::Slow,
                    events,
                    request,
                    cancel,
                };
            }
        }

        let (command, source) = match self.state.phase {
            Phase::E2eActive => (*input.fast, CommandSource::Fast),
            _ => (ControlCommand::hold(), CommandSource::ProtectiveHold),
        };
        ArbiterOutput {
            command,
            source,
            events,
            request,
            cancel,
        }
    }

    /// One tick of an active maneuver; `None` once control has been handed elsewhere.
    fn execute(&mut self, input: &ArbiterInput<'_>, env: &mut dyn SlowPath, events: &mut Vec<ArbiterEvent>) -> Option<ControlCommand> {
        let active = self.state.active.clone().expect("executing phase has a maneuver");
        let elapsed = (input.tick - active.started_tick) as f64 * input.dt;
        let duration = active.maneuver.primitive.duration;

        let window = (self.cfg.progress_window / input.dt).round().max(1.0) as usize;
        self.state.recent_speeds.push_back(input.ego_speed);
        while self.state.recent_speeds.len() > window {
            self.state.recent_speeds.pop_front();
        }
        let progressing = duration.is_infinite()
            && self.state.recent_speeds.len() == window
            && self.state.recent_speeds.iter().sum::<f64>() / window as f64 > 2.0 * self.cfg.block_speed_eps;

        // A finite primitive spans target_speed * duration metres of route; started from
        // rest the ego covers that more slowly than nominal, so wait for it to be driven.
        let m = &active.maneuver;
        let path_done = input.anchor.route_s >= m.anchor_s + m.primitive.target_speed * duration - 1e-9;

        let reason = if elapsed >= duration - 1e-9 && path_done {
            Some(CompletionReason::DurationElapsed)
        } else if elapsed >= self.cfg.maneuver_timeout - 1e-9 {
            Some(CompletionReason::Timeout)
        } else if progressing {
            Some(CompletionReason::Progress)
        } else {
            None
        };
        if let Some(reason) = reason {
            events.push(ArbiterEvent::ManeuverComplete { reason });
            self.reset_to_e2e(events);
            return None;
        }

        match env.execute(&active.maneuver) {
            Ok(cmd) => {
                if cmd.emergency_brake {
                    events.push(ArbiterEvent::Veto { cause: cmd.brake_cause });
                }
                Some(cmd)
            }
            Err(e) => {
                events.push(ArbiterEvent::ManeuverRejected { reason: e.to_string() });
                self.state.active = None;
                self.set_phase(Phase::ProtectiveStop, events);
                None
            }
        }
    }
}

impl ActiveManeuver {
    pub fn kind(&self) -> CommandKind {
        self.command.kind
    }
}
