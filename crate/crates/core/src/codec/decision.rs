use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::planner::{lane_change_curvature, ManeuverPrimitive};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CommandKind {
    Hold,
    LaneChangeLeft,
    LaneChangeRight,
    Decelerate,
    TargetSpeed,
    Proceed,
}

impl CommandKind {
    pub const ALL: [CommandKind; 6] = [
        CommandKind::Hold,
        CommandKind::LaneChangeLeft,
        CommandKind::LaneChangeRight,
        CommandKind::Decelerate,
        CommandKind::TargetSpeed,
        CommandKind::Proceed,
    ];

    pub fn token(self) -> &'static str {
        match self {
            CommandKind::Hold => "HOLD",
            CommandKind::LaneChangeLeft => "LANE_CHANGE_LEFT",
            CommandKind::LaneChangeRight => "LANE_CHANGE_RIGHT",
            CommandKind::Decelerate => "DECELERATE",
            CommandKind::TargetSpeed => "TARGET_SPEED",
            CommandKind::Proceed => "PROCEED",
        }
    }

    pub fn from_token(s: &str) -> Option<CommandKind> {
        CommandKind::ALL.into_iter().find(|k| k.token().eq_ignore_ascii_case(s))
    }

    pub fn is_lane_change(self) -> bool {
        matches!(self, CommandKind::LaneChangeLeft | CommandKind::LaneChangeRight)
    }
}

/// A decision as parsed from advisor text.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManeuverCommand {
    pub kind: CommandKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_speed: Option<f64>,
}

impl ManeuverCommand {
    pub fn new(kind: CommandKind) -> Self {
        ManeuverCommand {
            kind,
            target_speed: None,
        }
    }

    pub fn target_speed(v: f64) -> Self {
        ManeuverCommand {
            kind: CommandKind::TargetSpeed,
            target_speed: Some(v),
        }
    }
}

impl fmt::Display for ManeuverCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.token())?;
        if let Some(v) = self.target_speed {
            write!(f, " {v} m/s")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabEntry {
    pub token: CommandKind,
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedDuration {
    pub speed: f64,
    pub duration: f64,
}

/// Decision options and the trajectory parameters they map to. Shared by
/// prompt rendering and parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Vocabulary {
    pub entries: Vec<VocabEntry>,
    pub lane_change: SpeedDuration,
    /// Speed reduction relative to the current speed.
    pub decelerate_by: f64,
    pub decelerate_duration: f64,
    pub target_speed_max: f64,
    pub target_speed_duration: f64,
    pub proceed: SpeedDuration,
}

impl Default for Vocabulary {
    fn default() -> Self {
        let e = |token, d: &str| VocabEntry {
            token,
            description: d.to_string(),
        };
        Vocabulary {
            entries: vec![
                e(CommandKind::Hold, "stay stopped and wait"),
                e(CommandKind::LaneChangeLeft, "move into the lane on your left, then continue"),
                e(CommandKind::LaneChangeRight, "move into the lane on your right, then continue"),
                e(CommandKind::Decelerate, "slow down for a few seconds"),
                e(CommandKind::TargetSpeed, "drive at the given speed in m/s, for example TARGET_SPEED 5 m/s"),
                e(CommandKind::Proceed, "continue slowly along the route with relaxed clearances"),
            ],
            lane_change: SpeedDuration {
                speed: 4.0,
                duration: 4.0,
            },
            decelerate_by: 3.0,
            decelerate_duration: 3.0,
            target_speed_max: 15.0,
            target_speed_duration: 6.0,
            proceed: SpeedDuration {
                speed: 4.0,
                duration: 5.0,
            },
        }
    }
}

impl Vocabulary {
    pub fn allows(&self, kind: CommandKind) -> bool {
        self.entries.iter().any(|e| e.token == kind)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.entries.is_empty() {
            return Err("vocabulary has no entries".into());
        }
        for (i, e) in self.entries.iter().enumerate() {
            if self.entries[..i].iter().any(|o| o.token == e.token) {
                return Err(format!("vocabulary lists {} twice", e.token.token()));
            }
        }
        let durations = [
            self.lane_change.duration,
            self.decelerate_duration,
            self.target_speed_duration,
            self.proceed.duration,
        ];
        if durations.iter().any(|d| !(*d > 0.0)) {
            return Err("vocabulary durations must be > 0".into());
        }
        if !(self.lane_change.speed > 0.0) || !(self.target_speed_max > 0.0) || !(self.proceed.speed >= 0.0) {
            return Err("vocabulary speeds must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("no DECISION line")]
    NoDecisionLine,
    #[error("empty decision")]
    Empty,
    #[error("unknown decision token")]
    UnknownToken,
    #[error("TARGET_SPEED needs a speed")]
    MissingSpeed,
    #[error("speed is not a number")]
    BadNumber,
    #[error("speed out of range")]
    OutOfRange,
    #[error("unit must be m/s")]
    BadUnit,
    #[error("unexpected text after decision")]
    Trailing,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{kind} at bytes {}..{}: {text:?}", span.start, span.end)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub span: Range<usize>,
    pub text: String,
}

fn err(kind: ParseErrorKind, src: &str, span: Range<usize>) -> ParseError {
    let text = src.get(span.clone()).unwrap_or_default().to_string();
    ParseError { kind, span, text }
}

const MARKER: &str = "DECISION:";

/// Byte offset of the decision marker in `line`, ignoring case and leading markup.
fn marker_at(line: &str) -> Option<usize> {
    let trimmed = line.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '#' | '>' | '`' | '-'));
    let offset = line.len() - trimmed.len();
    let head = trimmed.get(..MARKER.len())?;
    head.eq_ignore_ascii_case(MARKER).then_some(offset)
}

/// Whitespace-separated words of `s` with their byte ranges, offset by `base`.
fn words(s: &str, base: usize) -> Vec<(&str, Range<usize>)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in s.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(st)) => {
                out.push((&s[st..i], base + st..base + i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(st) = start {
        out.push((&s[st..], base + st..base + s.len()));
    }
    out
}

/// Reads the last `DECISION: <TOKEN>[ <number> <unit>]` line of `text`.
pub fn parse_decision(text: &str, vocab: &Vocabulary) -> Result<ManeuverCommand, ParseError> {
    let mut found = None;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if let Some(m) = marker_at(line) {
            found = Some((offset + m + MARKER.len(), &line[m + MARKER.len()..]));
        }
        offset += line.len();
    }
    let Some((start, body)) = found else {
        return Err(err(ParseErrorKind::NoDecisionLine, text, 0..text.len()));
    };
    let body = body.trim_end_matches(['\n', '\r']);
    // tolerate markdown emphasis and a closing full stop
    let cleaned = body.trim_end().trim_end_matches(['*', '`', '.']);
    let mut parts = words(cleaned, start)
        .into_iter()
        .map(|(w, r)| (w.trim_matches(['*', '`']), r))
        .filter(|(w, _)| !w.is_empty());

    let Some((token, token_span)) = parts.next() else {
        return Err(err(ParseErrorKind::Empty, text, start..start + body.len()));
    };
    let kind = match CommandKind::from_token(token) {
        Some(k) if vocab.allows(k) => k,
        _ => return Err(err(ParseErrorKind::UnknownToken, text, token_span)),
    };
    let mut cmd = ManeuverCommand::new(kind);
    if kind == CommandKind::TargetSpeed {
        let Some((num, num_span)) = parts.next() else {
            return Err(err(ParseErrorKind::MissingSpeed, text, token_span));
        };
        // "5m/s" is accepted as number and unit together
        let (num_text, attached_unit) = match num.find(|c: char| c.is_ascii_alphabetic()) {
            Some(i) => (&num[..i], Some((&num[i..], num_span.start + i..num_span.end))),
            None => (num, None),
        };
        let v: f64 = num_text
            .parse()
            .map_err(|_| err(ParseErrorKind::BadNumber, text, num_span.clone()))?;
        if !v.is_finite() || !(0.0..=vocab.target_speed_max).contains(&v) {
            return Err(err(ParseErrorKind::OutOfRange, text, num_span));
        }
        let unit = attached_unit.or_else(|| parts.next());
        if let Some((u, span)) = unit {
            if !u.eq_ignore_ascii_case("m/s") {
                return Err(err(ParseErrorKind::BadUnit, text, span));
            }
        }
        cmd.target_speed = Some(v);
    }
    if let Some((_, span)) = parts.next() {
        return Err(err(ParseErrorKind::Trailing, text, span));
    }
    Ok(cmd)
}

/// Quantities the primitive table depends on at dispatch time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimitiveContext {
    pub ego_speed: f64,
    pub lane_width: f64,
}

pub fn command_to_primitive(cmd: &ManeuverCommand, ctx: &PrimitiveContext, vocab: &Vocabulary) -> ManeuverPrimitive {
    let straight = |target_speed, duration| ManeuverPrimitive {
        curvature: 0.0,
        target_speed,
        duration,
    };
    match cmd.kind {
        CommandKind::Hold => straight(0.0, f64::INFINITY),
        CommandKind::LaneChangeLeft | CommandKind::LaneChangeRight => {
            let lc = vocab.lane_change;
            let kappa = lane_change_curvature(ctx.lane_width, lc.speed * lc.duration).unwrap_or(0.0);
            let sign = if cmd.kind == CommandKind::LaneChangeLeft { 1.0 } else { -1.0 };
            ManeuverPrimitive {
                curvature: sign * kappa,
                target_speed: lc.speed,
                duration: lc.duration,
            }
        }
        CommandKind::Decelerate => straight((ctx.ego_speed - vocab.decelerate_by).max(0.0), vocab.decelerate_duration),
        CommandKind::TargetSpeed => straight(cmd.target_speed.unwrap_or(0.0), vocab.target_speed_duration),
        CommandKind::Proceed => straight(vocab.proceed.speed, vocab.proceed.duration),
    }
}
