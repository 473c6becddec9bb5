//! Prompt assembly, chat clients and decision extraction for the slow advisor.

mod advisor;
mod client;

pub use advisor::*;
pub use client::*;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::codec::{parse_decision, CommandKind, ManeuverCommand, ParseError, SceneDescription, Vocabulary};

pub const PHASES: [&str; 3] = [
    "Perception Target Analysis",
    "Decision Feasibility Evaluation",
    "Final Decision Synthesis",
];

pub const CRITERIA: &str = "a) Safety impact prediction; b) Executability in physical space; c) Minimum waiting time";

const SYSTEM: &str = "You are the decision module of an automated car. The car's own planner has stopped \
because it cannot resolve the situation ahead. You receive a text description of the scene and choose \
one high-level maneuver from a fixed list. A separate controller executes the maneuver and still brakes \
for imminent collisions.\n\
Rules:\n\
- Never choose a maneuver that moves into a lane occupied by an approaching vehicle.\n\
- Respect red lights and stop signs.\n\
- Prefer waiting over any maneuver whose safety you cannot establish.\n\
- Answer in English and follow the output format exactly.";

const REMINDER: &str = "Your previous reply did not end with a valid decision line. Answer again and make the \
last line exactly `DECISION: <TOKEN>` with a token from the list above.";

/// A worked example shown before the live scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exemplar {
    pub scene: String,
    pub reasoning: String,
}

impl Default for Exemplar {
    fn default() -> Self {
        Exemplar {
            scene: "You are driving in a regular lane. There is a same-direction lane on your left. No lane on \
your right. No traffic signal ahead. 2 other traffic participants detected (headings relative to your travel \
direction, which is north):\n1. A stationary truck ahead in your lane, heading north.\n2. A moving car behind you \
in the left lane, heading north."
                .to_string(),
            reasoning: "Perception Target Analysis: the truck ahead is stopped in my lane and blocks it. The car \
behind is in the left lane, travelling my way.\n\
Decision Feasibility Evaluation:\n\
- HOLD: safe, but the truck shows no sign of moving, so the wait could be long.\n\
- LANE_CHANGE_LEFT: the left lane runs in my direction and nothing is ahead in it. The car behind must be \
let past first, which the controller handles by braking if it comes close. Executable.\n\
- PROCEED: would require squeezing past the truck inside my own lane, which is not executable.\n\
Final Decision Synthesis: changing into the left lane passes the truck safely with the shortest wait.\n\
DECISION: LANE_CHANGE_LEFT"
                .to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub exemplar: String,
    pub scene: String,
    pub instruction: String,
    pub scene_digest: String,
}

impl PromptBundle {
    pub fn user_text(&self) -> String {
        format!("{}\n\n## Current scene\n{}\n\n{}", self.exemplar, self.scene, self.instruction)
    }

    pub fn messages(&self) -> Vec<ChatMessage> {
        vec![
            ChatMessage {
                role: "system".into(),
                content: self.system.clone(),
            },
            ChatMessage {
                role: "user".into(),
                content: self.user_text(),
            },
        ]
    }

    /// The whole prompt as one document.
    pub fn full_text(&self) -> String {
        format!("{}\n\n{}\n", self.system, self.user_text())
    }

    fn with_reminder(&self) -> PromptBundle {
        PromptBundle {
            instruction: format!("{}\n\n{REMINDER}", self.instruction),
            ..self.clone()
        }
    }
}

fn instruction(vocab: &Vocabulary) -> String {
    let mut s = String::from("## Task\nReason in three phases, using these headings in this order:\n");
    let _ = writeln!(s, "1. {}: list the participants and conditions that matter.", PHASES[0]);
    let _ = writeln!(s, "2. {}: judge every available decision against {CRITERIA}.", PHASES[1]);
    let _ = writeln!(s, "3. {}: pick the decision that is safe, executable and waits least.", PHASES[2]);
    s.push_str("\nAvailable decisions:\n");
    for e in &vocab.entries {
        let _ = writeln!(s, "- {}: {}", e.token.token(), e.description);
    }
    s.push_str("\nEnd your reply with exactly one line of the form\nDECISION: <TOKEN>\n");
    if vocab.allows(CommandKind::TargetSpeed) {
        let _ = writeln!(
            s,
            "For TARGET_SPEED add the speed in m/s between 0 and {}, e.g. `DECISION: TARGET_SPEED 5 m/s`.",
            vocab.target_speed_max
        );
    }
    s.trim_end().to_string()
}

pub fn build_prompt(scene: &SceneDescription, vocab: &Vocabulary, exemplars: &[Exemplar]) -> PromptBundle {
    let mut exemplar = String::from("## Example");
    for (i, ex) in exemplars.iter().enumerate() {
        if exemplars.len() > 1 {
            let _ = write!(exemplar, "\n### Example {}", i + 1);
        }
        let _ = write!(exemplar, "\nScene:\n{}\nReasoning:\n{}", ex.scene, ex.reasoning);
    }
    PromptBundle {
        system: SYSTEM.to_string(),
        exemplar,
        scene: scene.text.clone(),
        instruction: instruction(vocab),
        scene_digest: scene.digest.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvisorResult {
    pub command: ManeuverCommand,
    pub raw: String,
    pub scene_digest: String,
    pub issued_tick: u64,
    pub received_tick: u64,
    /// Seconds between issue and receipt in simulated time.
    pub latency: f64,
    pub attempts: u32,
    /// Set when the command is the HOLD fallback after unparseable replies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl AdvisorResult {
    pub fn mark_received(&mut self, tick: u64, dt: f64) {
        self.received_tick = tick.max(self.issued_tick);
        self.latency = (self.received_tick - self.issued_tick) as f64 * dt;
    }
}

/// Encoded scene through prompt, query and parse. One reprompt on a malformed reply,
/// then HOLD.
pub fn decide(
    scene: &SceneDescription,
    client: &dyn ChatClient,
    vocab: &Vocabulary,
    exemplars: &[Exemplar],
    issued_tick: u64,
) -> Result<AdvisorResult, AdvisorError> {
    let bundle = build_prompt(scene, vocab, exemplars);
    let mut errors: Vec<ParseError> = Vec::new();
    let mut raw = String::new();
    for attempt in 1..=2u32 {
        let prompt = if attempt == 1 { bundle.clone() } else { bundle.with_reminder() };
        raw = client.query(&prompt)?;
        match parse_decision(&raw, vocab) {
            Ok(command) => {
                return Ok(AdvisorResult {
                    command,
                    raw,
                    scene_digest: scene.digest.clone(),
                    issued_tick,
                    received_tick: issued_tick,
                    latency: 0.0,
                    attempts: attempt,
                    diagnostic: None,
                })
            }
            Err(e) => {
                log::warn!("advisor reply {attempt} unparseable: {e}");
                errors.push(e);
            }
        }
    }
    let diagnostic = errors.iter().map(|e| e.kind.to_string()).collect::<Vec<_>>().join("; ");
    Ok(AdvisorResult {
        command: ManeuverCommand::new(CommandKind::Hold),
        raw,
        scene_digest: scene.digest.clone(),
        issued_tick,
        received_tick: issued_tick,
        latency: 0.0,
        attempts: 2,
        diagnostic: Some(format!("fallback to HOLD: {diagnostic}")),
    })
}
