//! Line-delimited session transcripts: serialization, parsing, and replay.
//!
//! A transcript is a plain-text log with one event per line in a stable field
//! order. The first line is a format marker, the second the canonical session
//! configuration, then the events in execution order. Every event records the
//! raw `u64` draws it consumed, so replay re-derives all computed fields
//! (outcomes, error rates, decisions, decoded bits) from the recorded draws
//! and checks the regenerated text against the file byte for byte.
//!
//! Grammar per line: an event tag followed by `key=value` fields. Lists are
//! bracketed and comma-separated (`draws=[1,2]`, `positions=[0,3]`);
//! announcement entries are `position:basis:result` triples and phase-2
//! checks `position:bit` pairs. Decoded messages print lost positions as
//! `?`.

use super::{run_session_with_source, CheckEntry, SessionConfig, SessionStatus};
use crate::adversary::{EveAction, UsdLabel};
use crate::qstate::{Basis, EncodingOp};
use crate::rng::RecordedDraws;
use crate::Error;
use std::fmt::Write as _;

pub const TRANSCRIPT_HEADER: &str = "qotp-transcript v1";

/// Phase-1 decision token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase1Verdict {
    Continue,
    Abort,
    AbortInconclusive,
}

/// Phase-2 decision token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase2Verdict {
    Accept,
    Abort,
    AbortInconclusive,
}

/// One transcript event.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Prep { position: usize, draws: Vec<u64>, basis: Basis, bit: bool },
    ForwardChannel { position: usize, draws: Vec<u64>, delivered: bool },
    ForwardEve { position: usize, draws: Vec<u64>, action: EveAction },
    Arrive { positions: Vec<usize> },
    Sample { draws: Vec<u64>, positions: Vec<usize> },
    AliceCheck { position: usize, draws: Vec<u64>, basis: Basis, result: bool },
    Announce { lost: Vec<usize>, entries: Vec<CheckEntry> },
    Phase1 { compared: u64, errors: u64, rate: f64, verdict: Phase1Verdict },
    Layout { draws: Vec<u64>, checks: Vec<(usize, bool)>, message_positions: Vec<usize> },
    Encode { position: usize, op: EncodingOp },
    BackwardChannel { position: usize, draws: Vec<u64>, delivered: bool },
    BackwardEve { position: usize, draws: Vec<u64>, action: EveAction, guess: Option<bool> },
    Decode { position: usize, draws: Vec<u64>, measured: bool, bit: bool },
    Phase2Announce { checks: Vec<(usize, bool)>, message_positions: Vec<usize> },
    Phase2 { compared: u64, errors: u64, rate: f64, verdict: Phase2Verdict },
    Outcome { status: SessionStatus, message: Option<Vec<Option<bool>>> },
}

fn bit_char(b: bool) -> char {
    if b {
        '1'
    } else {
        '0'
    }
}

fn u64_list(values: &[u64]) -> String {
    let mut out = String::from("[");
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v}");
    }
    out.push(']');
    out
}

fn usize_list(values: &[usize]) -> String {
    let mut out = String::from("[");
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v}");
    }
    out.push(']');
    out
}

fn entry_list(entries: &[CheckEntry]) -> String {
    let mut out = String::from("[");
    for (i, e) in entries.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{}:{}:{}", e.position, e.basis, bit_char(e.result));
    }
    out.push(']');
    out
}

fn check_list(checks: &[(usize, bool)]) -> String {
    let mut out = String::from("[");
    for (i, (p, b)) in checks.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{}:{}", p, bit_char(*b));
    }
    out.push(']');
    out
}

fn decoded_message_string(message: &[Option<bool>]) -> String {
    message
        .iter()
        .map(|m| match m {
            Some(true) => '1',
            Some(false) => '0',
            None => '?',
        })
        .collect()
}

fn action_fields(action: &EveAction) -> String {
    match action {
        EveAction::Passed => "action=pass".to_string(),
        EveAction::Measured { basis, bit } => {
            format!("action=measured basis={basis} bit={}", bit_char(*bit))
        }
        EveAction::Conclusive { label } => format!("action=conclusive label={label}"),
        EveAction::Inconclusive => "action=inconclusive".to_string(),
        EveAction::Blocked => "action=blocked".to_string(),
    }
}

impl Event {
    pub fn to_line(&self) -> String {
        match self {
            Event::Prep { position, draws, basis, bit } => format!(
                "prep pos={position} draws={} basis={basis} bit={}",
                u64_list(draws),
                bit_char(*bit)
            ),
            Event::ForwardChannel { position, draws, delivered } => format!(
                "fchan pos={position} draws={} outcome={}",
                u64_list(draws),
                if *delivered { "ok" } else { "lost" }
            ),
            Event::ForwardEve { position, draws, action } => {
                format!("feve pos={position} draws={} {}", u64_list(draws), action_fields(action))
            }
            Event::Arrive { positions } => format!("arrive positions={}", usize_list(positions)),
            Event::Sample { draws, positions } => {
                format!("sample draws={} positions={}", u64_list(draws), usize_list(positions))
            }
            Event::AliceCheck { position, draws, basis, result } => format!(
                "acheck pos={position} draws={} basis={basis} result={}",
                u64_list(draws),
                bit_char(*result)
            ),
            Event::Announce { lost, entries } => {
                format!("announce lost={} entries={}", usize_list(lost), entry_list(entries))
            }
            Event::Phase1 { compared, errors, rate, verdict } => {
                let verdict = match verdict {
                    Phase1Verdict::Continue => "continue",
                    Phase1Verdict::Abort => "abort",
                    Phase1Verdict::AbortInconclusive => "abort_inconclusive",
                };
                format!("p1 compared={compared} errors={errors} rate={rate} verdict={verdict}")
            }
            Event::Layout { draws, checks, message_positions } => format!(
                "layout draws={} checks={} message={}",
                u64_list(draws),
                check_list(checks),
                usize_list(message_positions)
            ),
            Event::Encode { position, op } => format!("encode pos={position} op={op}"),
            Event::BackwardChannel { position, draws, delivered } => format!(
                "bchan pos={position} draws={} outcome={}",
                u64_list(draws),
                if *delivered { "ok" } else { "lost" }
            ),
            Event::BackwardEve { position, draws, action, guess } => {
                let mut line = format!(
                    "beve pos={position} draws={} {}",
                    u64_list(draws),
                    action_fields(action)
                );
                if let Some(g) = guess {
                    let _ = write!(line, " guess={}", bit_char(*g));
                }
                line
            }
            Event::Decode { position, draws, measured, bit } => format!(
                "dec pos={position} draws={} measured={} bit={}",
                u64_list(draws),
                bit_char(*measured),
                bit_char(*bit)
            ),
            Event::Phase2Announce { checks, message_positions } => format!(
                "p2announce checks={} message={}",
                check_list(checks),
                usize_list(message_positions)
            ),
            Event::Phase2 { compared, errors, rate, verdict } => {
                let verdict = match verdict {
                    Phase2Verdict::Accept => "accept",
                    Phase2Verdict::Abort => "abort",
                    Phase2Verdict::AbortInconclusive => "abort_inconclusive",
                };
                format!("p2 compared={compared} errors={errors} rate={rate} verdict={verdict}")
            }
            Event::Outcome { status, message } => match message {
                Some(bits) => {
                    format!("outcome status={status} message={}", decoded_message_string(bits))
                }
                None => format!("outcome status={status}"),
            },
        }
    }

    /// Draws consumed by this event, in consumption order.
    pub fn draws(&self) -> &[u64] {
        match self {
            Event::Prep { draws, .. }
            | Event::ForwardChannel { draws, .. }
            | Event::ForwardEve { draws, .. }
            | Event::Sample { draws, .. }
            | Event::AliceCheck { draws, .. }
            | Event::Layout { draws, .. }
            | Event::BackwardChannel { draws, .. }
            | Event::BackwardEve { draws, .. }
            | Event::Decode { draws, .. } => draws,
            _ => &[],
        }
    }
}

/// Sequential `key=value` field reader for one line.
struct FieldReader<'a> {
    line_no: usize,
    tokens: std::str::SplitWhitespace<'a>,
}

impl<'a> FieldReader<'a> {
    fn new(line_no: usize, rest: &'a str) -> Self {
        Self { line_no, tokens: rest.split_whitespace() }
    }

    fn err(&self, reason: impl Into<String>) -> Error {
        Error::TranscriptParse { line: self.line_no, reason: reason.into() }
    }

    fn expect(&mut self, key: &str) -> Result<&'a str, Error> {
        let line_no = self.line_no;
        let token = self.tokens.next().ok_or(Error::TranscriptParse {
            line: line_no,
            reason: format!("missing field '{key}'"),
        })?;
        token.strip_prefix(key).and_then(|rest| rest.strip_prefix('=')).ok_or(
            Error::TranscriptParse {
                line: line_no,
                reason: format!("expected field '{key}=', found '{token}'"),
            },
        )
    }

    fn optional(&mut self, key: &str) -> Result<Option<&'a str>, Error> {
        let line_no = self.line_no;
        match self.tokens.next() {
            None => Ok(None),
            Some(token) => {
                token.strip_prefix(key).and_then(|rest| rest.strip_prefix('=')).map(Some).ok_or(
                    Error::TranscriptParse {
                        line: line_no,
                        reason: format!("expected field '{key}=', found '{token}'"),
                    },
                )
            }
        }
    }

    fn usize_field(&mut self, key: &str) -> Result<usize, Error> {
        let v = self.expect(key)?;
        v.parse().map_err(|_| self.err(format!("invalid index '{v}'")))
    }

    fn u64_field(&mut self, key: &str) -> Result<u64, Error> {
        let v = self.expect(key)?;
        v.parse().map_err(|_| self.err(format!("invalid count '{v}'")))
    }

    fn f64_field(&mut self, key: &str) -> Result<f64, Error> {
        let v = self.expect(key)?;
        v.parse().map_err(|_| self.err(format!("invalid number '{v}'")))
    }

    fn bit_field(&mut self, key: &str) -> Result<bool, Error> {
        let v = self.expect(key)?;
        self.bit_value(v)
    }

    fn bit_value(&self, v: &str) -> Result<bool, Error> {
        match v {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(self.err(format!("invalid bit '{v}'"))),
        }
    }

    fn basis_field(&mut self, key: &str) -> Result<Basis, Error> {
        let v = self.expect(key)?;
        v.parse().map_err(|_| self.err(format!("invalid basis '{v}'")))
    }

    fn delivered_field(&mut self) -> Result<bool, Error> {
        let v = self.expect("outcome")?;
        match v {
            "ok" => Ok(true),
            "lost" => Ok(false),
            _ => Err(self.err(format!("invalid outcome '{v}'"))),
        }
    }

    fn list_body(&self, v: &'a str) -> Result<&'a str, Error> {
        v.strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(|| self.err(format!("expected bracketed list, found '{v}'")))
    }

    fn u64_list_field(&mut self, key: &str) -> Result<Vec<u64>, Error> {
        let v = self.expect(key)?;
        let body = self.list_body(v)?;
        if body.is_empty() {
            return Ok(Vec::new());
        }
        body.split(',')
            .map(|item| item.parse().map_err(|_| self.err(format!("invalid draw '{item}'"))))
            .collect()
    }

    fn usize_list_field(&mut self, key: &str) -> Result<Vec<usize>, Error> {
        let v = self.expect(key)?;
        let body = self.list_body(v)?;
        if body.is_empty() {
            return Ok(Vec::new());
        }
        body.split(',')
            .map(|item| item.parse().map_err(|_| self.err(format!("invalid index '{item}'"))))
            .collect()
    }

    fn entry_list_field(&mut self, key: &str) -> Result<Vec<CheckEntry>, Error> {
        let v = self.expect(key)?;
        let body = self.list_body(v)?;
        if body.is_empty() {
            return Ok(Vec::new());
        }
        body.split(',')
            .map(|item| {
                let mut parts = item.split(':');
                let position: usize = parts
                    .next()
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| self.err(format!("malformed entry '{item}'")))?;
                let basis: Basis = parts
                    .next()
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| self.err(format!("malformed entry '{item}'")))?;
                let result = self.bit_value(parts.next().unwrap_or(""))?;
                if parts.next().is_some() {
                    return Err(self.err(format!("malformed entry '{item}'")));
                }
                Ok(CheckEntry { position, basis, result })
            })
            .collect()
    }

    fn check_list_field(&mut self, key: &str) -> Result<Vec<(usize, bool)>, Error> {
        let v = self.expect(key)?;
        let body = self.list_body(v)?;
        if body.is_empty() {
            return Ok(Vec::new());
        }
        body.split(',')
            .map(|item| {
                let (p, b) = item
                    .split_once(':')
                    .ok_or_else(|| self.err(format!("malformed check entry '{item}'")))?;
                let position: usize =
                    p.parse().map_err(|_| self.err(format!("malformed check entry '{item}'")))?;
                Ok((position, self.bit_value(b)?))
            })
            .collect()
    }

    fn action_fields(&mut self) -> Result<EveAction, Error> {
        let action = self.expect("action")?;
        match action {
            "pass" => Ok(EveAction::Passed),
            "measured" => {
                let basis = self.basis_field("basis")?;
                let bit = self.bit_field("bit")?;
                Ok(EveAction::Measured { basis, bit })
            }
            "conclusive" => {
                let label = match self.expect("label")? {
                    "H" => UsdLabel::H,
                    "u" => UsdLabel::U,
                    other => return Err(self.err(format!("invalid label '{other}'"))),
                };
                Ok(EveAction::Conclusive { label })
            }
            "inconclusive" => Ok(EveAction::Inconclusive),
            "blocked" => Ok(EveAction::Blocked),
            other => Err(self.err(format!("unknown action '{other}'"))),
        }
    }

    fn finish(mut self) -> Result<(), Error> {
        match self.tokens.next() {
            None => Ok(()),
            Some(extra) => Err(self.err(format!("unexpected trailing token '{extra}'"))),
        }
    }
}

impl Event {
    /// Parses one canonical event line. `line_no` is 1-based for error
    /// reporting.
    pub fn parse_line(line_no: usize, line: &str) -> Result<Event, Error> {
        let (tag, rest) = line.split_once(' ').unwrap_or((line, ""));
        let mut r = FieldReader::new(line_no, rest);
        let event = match tag {
            "prep" => {
                let position = r.usize_field("pos")?;
                let draws = r.u64_list_field("draws")?;
                let basis = r.basis_field("basis")?;
                let bit = r.bit_field("bit")?;
                Event::Prep { position, draws, basis, bit }
            }
            "fchan" | "bchan" => {
                let position = r.usize_field("pos")?;
                let draws = r.u64_list_field("draws")?;
                let delivered = r.delivered_field()?;
                if tag == "fchan" {
                    Event::ForwardChannel { position, draws, delivered }
                } else {
                    Event::BackwardChannel { position, draws, delivered }
                }
            }
            "feve" => {
                let position = r.usize_field("pos")?;
                let draws = r.u64_list_field("draws")?;
                let action = r.action_fields()?;
                Event::ForwardEve { position, draws, action }
            }
            "arrive" => Event::Arrive { positions: r.usize_list_field("positions")? },
            "sample" => {
                let draws = r.u64_list_field("draws")?;
                let positions = r.usize_list_field("positions")?;
                Event::Sample { draws, positions }
            }
            "acheck" => {
                let position = r.usize_field("pos")?;
                let draws = r.u64_list_field("draws")?;
                let basis = r.basis_field("basis")?;
                let result = r.bit_field("result")?;
                Event::AliceCheck { position, draws, basis, result }
            }
            "announce" => {
                let lost = r.usize_list_field("lost")?;
                let entries = r.entry_list_field("entries")?;
                Event::Announce { lost, entries }
            }
            "p1" => {
                let compared = r.u64_field("compared")?;
                let errors = r.u64_field("errors")?;
                let rate = r.f64_field("rate")?;
                let verdict = match r.expect("verdict")? {
                    "continue" => Phase1Verdict::Continue,
                    "abort" => Phase1Verdict::Abort,
                    "abort_inconclusive" => Phase1Verdict::AbortInconclusive,
                    other => return Err(r.err(format!("invalid verdict '{other}'"))),
                };
                Event::Phase1 { compared, errors, rate, verdict }
            }
            "layout" => {
                let draws = r.u64_list_field("draws")?;
                let checks = r.check_list_field("checks")?;
                let message_positions = r.usize_list_field("message")?;
                Event::Layout { draws, checks, message_positions }
            }
            "encode" => {
                let position = r.usize_field("pos")?;
                let op_text = r.expect("op")?;
                let op: EncodingOp =
                    op_text.parse().map_err(|_| r.err(format!("invalid op '{op_text}'")))?;
                Event::Encode { position, op }
            }
            "beve" => {
                let position = r.usize_field("pos")?;
                let draws = r.u64_list_field("draws")?;
                let action = r.action_fields()?;
                let guess = match r.optional("guess")? {
                    Some(v) => Some(r.bit_value(v)?),
                    None => None,
                };
                Event::BackwardEve { position, draws, action, guess }
            }
            "dec" => {
                let position = r.usize_field("pos")?;
                let draws = r.u64_list_field("draws")?;
                let measured = r.bit_field("measured")?;
                let bit = r.bit_field("bit")?;
                Event::Decode { position, draws, measured, bit }
            }
            "p2announce" => {
                let checks = r.check_list_field("checks")?;
                let message_positions = r.usize_list_field("message")?;
                Event::Phase2Announce { checks, message_positions }
            }
            "p2" => {
                let compared = r.u64_field("compared")?;
                let errors = r.u64_field("errors")?;
                let rate = r.f64_field("rate")?;
                let verdict = match r.expect("verdict")? {
                    "accept" => Phase2Verdict::Accept,
                    "abort" => Phase2Verdict::Abort,
                    "abort_inconclusive" => Phase2Verdict::AbortInconclusive,
                    other => return Err(r.err(format!("invalid verdict '{other}'"))),
                };
                Event::Phase2 { compared, errors, rate, verdict }
            }
            "outcome" => {
                let status_text = r.expect("status")?;
                let status: SessionStatus = status_text
                    .parse()
                    .map_err(|_| r.err(format!("invalid status '{status_text}'")))?;
                let message = match r.optional("message")? {
                    None => None,
                    Some(text) => {
                        let bits = text
                            .chars()
                            .map(|c| match c {
                                '0' => Ok(Some(false)),
                                '1' => Ok(Some(true)),
                                '?' => Ok(None),
                                other => Err(r.err(format!("invalid message character '{other}'"))),
                            })
                            .collect::<Result<Vec<_>, _>>()?;
                        Some(bits)
                    }
                };
                Event::Outcome { status, message }
            }
            other => {
                return Err(Error::TranscriptParse {
                    line: line_no,
                    reason: format!("unknown event '{other}'"),
                })
            }
        };
        r.finish()?;
        Ok(event)
    }
}

/// The complete ordered record of one session run.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionTranscript {
    config: SessionConfig,
    events: Vec<Event>,
}

impl SessionTranscript {
    pub fn new(config: SessionConfig, events: Vec<Event>) -> Self {
        Self { config, events }
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Canonical text form, newline-terminated.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(TRANSCRIPT_HEADER);
        out.push('\n');
        out.push_str("config ");
        out.push_str(&self.config.to_line());
        out.push('\n');
        for event in &self.events {
            out.push_str(&event.to_line());
            out.push('\n');
        }
        out
    }

    /// Parses the canonical text form, reporting 1-based line numbers on
    /// error. The transcript must end with an `outcome` event.
    pub fn parse(text: &str) -> Result<Self, Error> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or(Error::TranscriptParse { line: 1, reason: "empty transcript".into() })?;
        if header != TRANSCRIPT_HEADER {
            return Err(Error::TranscriptParse {
                line: 1,
                reason: format!("expected header '{TRANSCRIPT_HEADER}'"),
            });
        }
        let (_, config_line) = lines
            .next()
            .ok_or(Error::TranscriptParse { line: 2, reason: "missing config line".into() })?;
        let config_body = config_line
            .strip_prefix("config ")
            .ok_or(Error::TranscriptParse { line: 2, reason: "expected 'config ...'".into() })?;
        let config = SessionConfig::parse_line(config_body)
            .map_err(|e| Error::TranscriptParse { line: 2, reason: e.to_string() })?;
        let mut events = Vec::new();
        let mut last_line = 2;
        for (idx, line) in lines {
            let line_no = idx + 1;
            events.push(Event::parse_line(line_no, line)?);
            last_line = line_no;
        }
        match events.last() {
            Some(Event::Outcome { .. }) => {}
            _ => {
                return Err(Error::TranscriptParse {
                    line: last_line + 1,
                    reason: "transcript truncated: no outcome event".into(),
                })
            }
        }
        Ok(Self { config, events })
    }

    /// All recorded draws in consumption order.
    pub fn draws(&self) -> Vec<u64> {
        self.events.iter().flat_map(|e| e.draws().iter().copied()).collect()
    }

    /// True when no encoding activity precedes the phase-1 continue verdict,
    /// the protocol's defining ordering guarantee.
    pub fn ordering_ok(&self) -> bool {
        let mut continued = false;
        for event in &self.events {
            match event {
                Event::Phase1 { verdict: Phase1Verdict::Continue, .. } => continued = true,
                Event::Layout { .. } | Event::Encode { .. } if !continued => return false,
                _ => {}
            }
        }
        true
    }
}

/// Result of replaying a transcript against its recorded draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayVerdict {
    Identical,
    /// 1-based line of the first divergence between the recorded text and
    /// the regenerated one.
    Divergent {
        line: usize,
    },
}

/// Re-runs the session described by a transcript from its recorded draws and
/// compares the regenerated transcript byte for byte.
pub fn replay_transcript(text: &str) -> Result<ReplayVerdict, Error> {
    let parsed = SessionTranscript::parse(text)?;
    let mut source = RecordedDraws::new(parsed.draws());
    let outcome = run_session_with_source(parsed.config(), &mut source)?;
    let regenerated = outcome.transcript.to_text();
    if regenerated == text {
        return Ok(ReplayVerdict::Identical);
    }
    let mut line = 1;
    let mut original = text.lines();
    let mut fresh = regenerated.lines();
    loop {
        match (original.next(), fresh.next()) {
            (Some(a), Some(b)) if a == b => line += 1,
            (None, None) => return Ok(ReplayVerdict::Divergent { line }),
            _ => return Ok(ReplayVerdict::Divergent { line }),
        }
    }
}
