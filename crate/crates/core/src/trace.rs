//! The interleaved reasoning format: parser, canonical serializer and the
//! binary format reward.
//!
//! ```text
//! trace   = ws "<think>" ws step { ws step } ws "</think>" ws
//!           "<answer>" answer "</answer>" ws ;
//! step    = "<area>" regions "</area>" ws "<text>" narration "</text>" ;
//! regions = JSON array, one or more {"bbox": [x1, y1, x2, y2], "depth": d} ;
//! ```
//!
//! Whitespace between tags is ignored. Narration and answer bodies are kept
//! verbatim and may not contain any of the eight reserved tags. Anything
//! after `</answer>` other than whitespace invalidates the trace.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::geometry::{BBox, BoxSet};

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";
const AREA_OPEN: &str = "<area>";
const AREA_CLOSE: &str = "</area>";
const TEXT_OPEN: &str = "<text>";
const TEXT_CLOSE: &str = "</text>";
const ANSWER_OPEN: &str = "<answer>";
const ANSWER_CLOSE: &str = "</answer>";

const RESERVED: [&str; 8] = [
    THINK_OPEN,
    THINK_CLOSE,
    AREA_OPEN,
    AREA_CLOSE,
    TEXT_OPEN,
    TEXT_CLOSE,
    ANSWER_OPEN,
    ANSWER_CLOSE,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceErrorKind {
    MissingTag,
    DuplicateTag,
    MisorderedTag,
    UnexpectedContent,
    TrailingContent,
    MalformedJson,
    SchemaViolation,
    InvalidBox,
    DepthOutOfRange,
    EmptyAnswer,
}

/// A parse diagnostic anchored at the byte offset of the first violation.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{kind:?} at byte {offset}: {message}")]
pub struct TraceError {
    pub kind: TraceErrorKind,
    pub offset: usize,
    pub message: String,
}

impl TraceError {
    fn new(kind: TraceErrorKind, offset: usize, message: impl Into<String>) -> Self {
        TraceError {
            kind,
            offset,
            message: message.into(),
        }
    }
}

/// A focused region: a box plus the depth asserted for it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub bbox: BBox,
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocusStep {
    regions: Vec<Region>,
    narration: String,
}

impl FocusStep {
    pub fn new(regions: Vec<Region>, narration: impl Into<String>) -> Result<Self, TraceError> {
        let narration = narration.into();
        if regions.is_empty() {
            return Err(TraceError::new(
                TraceErrorKind::SchemaViolation,
                0,
                "a focus step needs at least one region",
            ));
        }
        if let Some(r) = regions.iter().find(|r| !valid_depth(r.depth)) {
            return Err(TraceError::new(
                TraceErrorKind::DepthOutOfRange,
                0,
                format!("depth {} outside [0, 1]", r.depth),
            ));
        }
        if let Some((at, tag)) = find_reserved(&narration) {
            return Err(TraceError::new(
                TraceErrorKind::UnexpectedContent,
                at,
                format!("narration contains reserved tag {tag}"),
            ));
        }
        Ok(FocusStep { regions, narration })
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn narration(&self) -> &str {
        &self.narration
    }

    pub fn boxes(&self) -> BoxSet {
        self.regions.iter().map(|r| r.bbox).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    steps: Vec<FocusStep>,
    answer: String,
}

impl ReasoningTrace {
    pub fn new(steps: Vec<FocusStep>, answer: impl Into<String>) -> Result<Self, TraceError> {
        let answer = answer.into();
        if steps.is_empty() {
            return Err(TraceError::new(
                TraceErrorKind::MissingTag,
                0,
                "a trace needs at least one focus step",
            ));
        }
        if answer.trim().is_empty() {
            return Err(TraceError::new(
                TraceErrorKind::EmptyAnswer,
                0,
                "answer is empty",
            ));
        }
        if let Some((at, tag)) = find_reserved(&answer) {
            return Err(TraceError::new(
                TraceErrorKind::UnexpectedContent,
                at,
                format!("answer contains reserved tag {tag}"),
            ));
        }
        Ok(ReasoningTrace { steps, answer })
    }

    pub fn steps(&self) -> &[FocusStep] {
        &self.steps
    }

    /// The answer body exactly as written between the answer tags.
    pub fn answer(&self) -> &str {
        &self.answer
    }

    /// Every `(box, depth)` pair in emission order.
    pub fn regions(&self) -> impl Iterator<Item = &Region> {
        self.steps.iter().flat_map(|s| s.regions.iter())
    }
}

/// JSON key names accepted inside `<area>` bodies. The first entry of each
/// list is the canonical name used when serializing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyAliases {
    pub bbox: Vec<String>,
    pub depth: Vec<String>,
}

impl Default for KeyAliases {
    fn default() -> Self {
        KeyAliases {
            bbox: vec!["bbox".to_owned()],
            depth: vec!["depth".to_owned()],
        }
    }
}

pub fn parse_trace(raw: &str) -> Result<ReasoningTrace, TraceError> {
    parse_trace_with(raw, &KeyAliases::default())
}

pub fn parse_trace_with(raw: &str, keys: &KeyAliases) -> Result<ReasoningTrace, TraceError> {
    Parser {
        src: raw,
        pos: 0,
        keys,
    }
    .trace()
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    keys: &'a KeyAliases,
}

impl<'a> Parser<'a> {
    fn trace(mut self) -> Result<ReasoningTrace, TraceError> {
        self.skip_ws();
        self.expect_open(THINK_OPEN)?;

        let mut steps = Vec::new();
        loop {
            self.skip_ws();
            match self.peek_tag() {
                Some(AREA_OPEN) => steps.push(self.step()?),
                Some(THINK_CLOSE) if !steps.is_empty() => {
                    self.pos += THINK_CLOSE.len();
                    break;
                }
                Some(THINK_CLOSE) => {
                    return Err(self.error(
                        TraceErrorKind::MissingTag,
                        "expected <area> before </think>",
                    ))
                }
                Some(TEXT_OPEN) => {
                    return Err(self.error(
                        TraceErrorKind::MisorderedTag,
                        "area/text alternation violated: <text> without a preceding <area>",
                    ))
                }
                Some(THINK_OPEN) => {
                    return Err(self.error(TraceErrorKind::DuplicateTag, "nested <think>"))
                }
                Some(tag) => {
                    return Err(self.error(
                        TraceErrorKind::MisorderedTag,
                        format!("unexpected {tag} inside <think>"),
                    ))
                }
                None if self.at_end() => {
                    return Err(self.error(TraceErrorKind::MissingTag, "missing </think>"))
                }
                None => {
                    return Err(self.error(
                        TraceErrorKind::UnexpectedContent,
                        "text outside <area>/<text> inside <think>",
                    ))
                }
            }
        }

        self.skip_ws();
        match self.peek_tag() {
            Some(ANSWER_OPEN) => self.pos += ANSWER_OPEN.len(),
            Some(THINK_OPEN) => {
                return Err(self.error(TraceErrorKind::DuplicateTag, "second <think> block"))
            }
            Some(tag) => {
                return Err(self.error(
                    TraceErrorKind::MisorderedTag,
                    format!("expected <answer>, found {tag}"),
                ))
            }
            None if self.at_end() => {
                return Err(self.error(TraceErrorKind::MissingTag, "missing <answer>"))
            }
            None => {
                return Err(self.error(
                    TraceErrorKind::UnexpectedContent,
                    "text between </think> and <answer>",
                ))
            }
        }
        let answer_at = self.pos;
        let answer = self.body(ANSWER_OPEN, ANSWER_CLOSE)?;
        if answer.trim().is_empty() {
            return Err(TraceError::new(
                TraceErrorKind::EmptyAnswer,
                answer_at,
                "answer is empty",
            ));
        }

        self.skip_ws();
        if !self.at_end() {
            return Err(match self.peek_tag() {
                Some(tag @ (ANSWER_OPEN | THINK_OPEN)) => {
                    self.error(TraceErrorKind::DuplicateTag, format!("second {tag} block"))
                }
                _ => self.error(TraceErrorKind::TrailingContent, "content after </answer>"),
            });
        }

        Ok(ReasoningTrace {
            steps,
            answer: answer.to_owned(),
        })
    }

    fn step(&mut self) -> Result<FocusStep, TraceError> {
        self.pos += AREA_OPEN.len();
        let area_at = self.pos;
        let body = self.body(AREA_OPEN, AREA_CLOSE)?;
        let regions = self.regions(body, area_at)?;

        self.skip_ws();
        match self.peek_tag() {
            Some(TEXT_OPEN) => self.pos += TEXT_OPEN.len(),
            Some(AREA_OPEN) => {
                return Err(self.error(
                    TraceErrorKind::MisorderedTag,
                    "area/text alternation violated: two consecutive <area> blocks",
                ))
            }
            Some(THINK_CLOSE) => {
                return Err(self.error(TraceErrorKind::MissingTag, "missing <text> after </area>"))
            }
            None if self.at_end() => {
                return Err(self.error(TraceErrorKind::MissingTag, "missing <text> after </area>"))
            }
            Some(tag) => {
                return Err(self.error(
                    TraceErrorKind::MisorderedTag,
                    format!("expected <text>, found {tag}"),
                ))
            }
            None => {
                return Err(self.error(
                    TraceErrorKind::UnexpectedContent,
                    "text between </area> and <text>",
                ))
            }
        }
        let narration = self.body(TEXT_OPEN, TEXT_CLOSE)?;
        Ok(FocusStep {
            regions,
            narration: narration.to_owned(),
        })
    }

    /// Consumes everything up to and including `close`. The body may not
    /// contain any reserved tag.
    fn body(&mut self, open: &str, close: &'static str) -> Result<&'a str, TraceError> {
        let start = self.pos;
        let rest = &self.src[start..];
        match find_reserved(rest) {
            Some((at, tag)) if tag == close => {
                self.pos = start + at + close.len();
                Ok(&rest[..at])
            }
            Some((at, tag)) => {
                let offset = start + at;
                let err = if tag == open {
                    TraceError::new(
                        TraceErrorKind::DuplicateTag,
                        offset,
                        format!("nested {open}"),
                    )
                } else if rest[at..].contains(close) {
                    TraceError::new(
                        TraceErrorKind::MisorderedTag,
                        offset,
                        format!("{tag} before {close}"),
                    )
                } else {
                    TraceError::new(
                        TraceErrorKind::MissingTag,
                        offset,
                        format!("missing {close}"),
                    )
                };
                Err(err)
            }
            None => Err(TraceError::new(
                TraceErrorKind::MissingTag,
                self.src.len(),
                format!("missing {close}"),
            )),
        }
    }

    fn regions(&self, body: &str, at: usize) -> Result<Vec<Region>, TraceError> {
        let value: Value = serde_json::from_str(body).map_err(|e| {
            TraceError::new(
                TraceErrorKind::MalformedJson,
                at + json_error_offset(body, &e),
                format!("area body is not valid JSON: {e}"),
            )
        })?;
        let schema = |msg: String| TraceError::new(TraceErrorKind::SchemaViolation, at, msg);

        let items = value
            .as_array()
            .ok_or_else(|| schema("area body must be a JSON array".into()))?;
        if items.is_empty() {
            return Err(schema("area body must list at least one region".into()));
        }

        let mut regions = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            let obj = item
                .as_object()
                .ok_or_else(|| schema(format!("region {i} is not an object")))?;
            let mut bbox = None;
            let mut depth = None;
            for (key, v) in obj {
                if self.keys.bbox.iter().any(|k| k == key) {
                    if bbox.replace(v).is_some() {
                        return Err(schema(format!("region {i} has more than one box key")));
                    }
                } else if self.keys.depth.iter().any(|k| k == key) {
                    if depth.replace(v).is_some() {
                        return Err(schema(format!("region {i} has more than one depth key")));
                    }
                } else {
                    return Err(schema(format!("region {i} has unknown key {key:?}")));
                }
            }
            let bbox = bbox.ok_or_else(|| schema(format!("region {i} is missing its box")))?;
            let depth = depth.ok_or_else(|| schema(format!("region {i} is missing its depth")))?;

            let coords: Vec<f64> = bbox
                .as_array()
                .filter(|a| a.len() == 4)
                .and_then(|a| a.iter().map(Value::as_f64).collect())
                .ok_or_else(|| schema(format!("region {i}: box must be an array of 4 numbers")))?;
            let depth = depth
                .as_f64()
                .ok_or_else(|| schema(format!("region {i}: depth must be a number")))?;

            let bbox = BBox::new(coords[0], coords[1], coords[2], coords[3]).map_err(|e| {
                TraceError::new(TraceErrorKind::InvalidBox, at, format!("region {i}: {e}"))
            })?;
            if !valid_depth(depth) {
                return Err(TraceError::new(
                    TraceErrorKind::DepthOutOfRange,
                    at,
                    format!("region {i}: depth {depth} outside [0, 1]"),
                ));
            }
            regions.push(Region { bbox, depth });
        }
        Ok(regions)
    }

    fn expect_open(&mut self, tag: &'static str) -> Result<(), TraceError> {
        match self.peek_tag() {
            Some(t) if t == tag => {
                self.pos += tag.len();
                Ok(())
            }
            Some(other) => Err(self.error(
                TraceErrorKind::MisorderedTag,
                format!("expected {tag}, found {other}"),
            )),
            None => Err(self.error(TraceErrorKind::MissingTag, format!("expected {tag}"))),
        }
    }

    fn peek_tag(&self) -> Option<&'static str> {
        let rest = &self.src[self.pos..];
        RESERVED.into_iter().find(|t| rest.starts_with(t))
    }

    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn error(&self, kind: TraceErrorKind, message: impl Into<String>) -> TraceError {
        TraceError::new(kind, self.pos, message)
    }
}

/// First reserved tag in `s` and its byte offset.
fn find_reserved(s: &str) -> Option<(usize, &'static str)> {
    let bytes = s.as_bytes();
    let mut from = 0;
    while let Some(i) = bytes[from..].iter().position(|&c| c == b'<') {
        let at = from + i;
        if let Some(tag) = RESERVED
            .into_iter()
            .find(|t| bytes[at..].starts_with(t.as_bytes()))
        {
            return Some((at, tag));
        }
        from = at + 1;
    }
    None
}

fn json_error_offset(body: &str, e: &serde_json::Error) -> usize {
    if e.line() == 0 {
        return 0;
    }
    let line_start: usize = body
        .split_inclusive('\n')
        .take(e.line() - 1)
        .map(str::len)
        .sum();
    (line_start + e.column().saturating_sub(1)).min(body.len())
}

fn valid_depth(d: f64) -> bool {
    d.is_finite() && (0.0..=1.0).contains(&d)
}

/// Canonical rendering: key order `bbox`, `depth`; box coordinates with
/// three fractional digits; depths in shortest round-trip form; no
/// whitespace between tags.
///
/// Coordinates that are not multiples of 0.001 are rounded, so only traces
/// on that grid survive a round trip unchanged.
pub fn serialize_trace(t: &ReasoningTrace) -> String {
    t.to_string()
}

impl fmt::Display for ReasoningTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(THINK_OPEN)?;
        for step in &self.steps {
            f.write_str(AREA_OPEN)?;
            f.write_str("[")?;
            for (i, r) in step.regions.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                let [x1, y1, x2, y2] = r.bbox.coords();
                write!(
                    f,
                    "{{\"bbox\":[{x1:.3},{y1:.3},{x2:.3},{y2:.3}],\"depth\":{}}}",
                    Value::from(r.depth)
                )?;
            }
            f.write_str("]")?;
            f.write_str(AREA_CLOSE)?;
            f.write_str(TEXT_OPEN)?;
            f.write_str(&step.narration)?;
            f.write_str(TEXT_CLOSE)?;
        }
        f.write_str(THINK_CLOSE)?;
        f.write_str(ANSWER_OPEN)?;
        f.write_str(&self.answer)?;
        f.write_str(ANSWER_CLOSE)
    }
}

/// Binary compliance reward plus the diagnostic explaining a zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatReward {
    pub reward: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<TraceError>,
}

pub fn format_reward(raw: &str) -> FormatReward {
    match parse_trace(raw) {
        Ok(_) => FormatReward {
            reward: 1.0,
            diagnostic: None,
        },
        Err(e) => FormatReward {
            reward: 0.0,
            diagnostic: Some(e),
        },
    }
}

/// One box set per focus step, in order.
pub fn extract_boxsets(t: &ReasoningTrace) -> Vec<BoxSet> {
    t.steps.iter().map(FocusStep::boxes).collect()
}

/// Best-effort answer recovery for text that failed to parse: the body of
/// the last `<answer>...</answer>` pair, trimmed, if non-empty.
pub fn extract_answer(raw: &str) -> Option<&str> {
    let open = raw.rfind(ANSWER_OPEN)?;
    let body_start = open + ANSWER_OPEN.len();
    let close = raw[body_start..].find(ANSWER_CLOSE)?;
    let body = raw[body_start..body_start + close].trim();
    (!body.is_empty()).then_some(body)
}
