//! Line-oriented run logs.
//!
//! ```text
//! run=r0001 protocol=kindergarten-tutor agent=oracle level=L3
//! run=r0001 turn=1 actor=executor state=0 text="Do you want EASY or HARD questions?"
//! run=r0001 turn=2 actor=user state=0 text="EASY"
//! run=r0001 turn=3 actor=executor state=1 text="What is 2 + 3?" verdict=pass
//! ```
//!
//! The header line is optional. Turn records use the key order `run turn
//! actor state text [verdict [failure] [note]]`, turns are numbered from 1
//! without gaps, and every record carries the same run id. Verdicts are only
//! allowed on executor turns.

use std::fmt::Write as _;

use thiserror::Error;

use super::fields::{escape, split_fields, Field};
use super::{Actor, Condition, ExecutionTrace, FailureKind, Turn, TurnVerdict};
use crate::fsm::StateId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunLogError {
    #[error("run log is empty")]
    Empty,
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: expected key {expected:?}, found {found:?}")]
    KeyOrder { line: usize, expected: &'static str, found: String },
    #[error("line {line}: run id {found:?} differs from {expected:?}")]
    RunIdMismatch { line: usize, expected: String, found: String },
    #[error("line {line}: expected turn {expected}, found {found}")]
    NonContiguous { line: usize, expected: u32, found: u32 },
    #[error("line {line}: turn {turn} belongs to the {expected}")]
    ActorMismatch { line: usize, turn: u32, expected: Actor },
    #[error("line {line}: verdicts are only recorded for executor turns")]
    VerdictOnUserTurn { line: usize },
}

/// Serializes a trace, including any annotations, as a run log.
pub fn write_run_log(trace: &ExecutionTrace) -> String {
    let mut out = String::new();
    let run = &trace.run_id;
    if trace.protocol_name.is_some() || trace.condition.is_some() {
        let _ = write!(out, "run={run}");
        if let Some(name) = &trace.protocol_name {
            let _ = write!(out, " protocol={}", escape(name));
        }
        if let Some(c) = &trace.condition {
            let _ = write!(out, " agent={} level={}", escape(&c.agent), c.level);
        }
        out.push('\n');
    }
    for t in &trace.turns {
        let _ = write!(out, "run={run} turn={} actor={} state={} text={}", t.index, t.actor, t.state, escape(&t.text));
        if let Some(v) = trace.annotations.get(&t.index) {
            out.push_str(if v.pass { " verdict=pass" } else { " verdict=fail" });
            if let Some(kind) = v.failure {
                let _ = write!(out, " failure={kind}");
            }
            if !v.note.is_empty() {
                let _ = write!(out, " note={}", escape(&v.note));
            }
        }
        out.push('\n');
    }
    out
}

struct Cursor {
    line: usize,
    fields: std::iter::Peekable<std::vec::IntoIter<Field>>,
}

impl Cursor {
    fn new(line: usize, fields: Vec<Field>) -> Self {
        Cursor { line, fields: fields.into_iter().peekable() }
    }

    fn take(&mut self, key: &'static str) -> Result<String, RunLogError> {
        match self.fields.next() {
            Some(f) if f.key == key => Ok(f.value),
            Some(f) => Err(RunLogError::KeyOrder { line: self.line, expected: key, found: f.key }),
            None => Err(RunLogError::KeyOrder { line: self.line, expected: key, found: String::new() }),
        }
    }

    fn optional(&mut self, key: &str) -> Option<String> {
        if self.fields.peek().is_some_and(|f| f.key == key) {
            self.fields.next().map(|f| f.value)
        } else {
            None
        }
    }

    fn finish(mut self) -> Result<(), RunLogError> {
        match self.fields.next() {
            None => Ok(()),
            Some(f) => Err(syntax(self.line, format!("unexpected key {:?}", f.key))),
        }
    }
}

fn syntax(line: usize, message: impl Into<String>) -> RunLogError {
    RunLogError::Syntax { line, message: message.into() }
}

/// Parses a run log. Verdicts present in the log become annotations that the
/// judge uses in place of its own rules.
pub fn ingest_annotated_trace(source: &str) -> Result<ExecutionTrace, RunLogError> {
    let mut trace = ExecutionTrace::default();
    let mut run_id: Option<String> = None;
    let mut seen_record = false;

    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        if raw.is_empty() {
            continue;
        }
        let fields = split_fields(raw).map_err(|m| syntax(line, m))?;
        let is_header = !fields.iter().any(|f| f.key == "turn");
        let mut c = Cursor::new(line, fields);
        let run = c.take("run")?;
        match &run_id {
            Some(expected) if *expected != run => {
                return Err(RunLogError::RunIdMismatch { line, expected: expected.clone(), found: run })
            }
            Some(_) => {}
            None => run_id = Some(run),
        }

        if is_header {
            if seen_record {
                return Err(syntax(line, "header must be the first line"));
            }
            seen_record = true;
            trace.protocol_name = c.optional("protocol");
            if let Some(agent) = c.optional("agent") {
                let level = c
                    .take("level")?
                    .parse()
                    .map_err(|e: crate::render::ParseLevelError| syntax(line, e.to_string()))?;
                trace.condition = Some(Condition { agent, level });
            }
            c.finish()?;
            continue;
        }
        seen_record = true;

        let expected = trace.turns.len() as u32 + 1;
        let index: u32 = c.take("turn")?.parse().map_err(|_| syntax(line, "turn must be an integer"))?;
        if index != expected {
            return Err(RunLogError::NonContiguous { line, expected, found: index });
        }
        let actor: Actor = c.take("actor")?.parse().map_err(|m: String| syntax(line, m))?;
        if actor != Actor::for_turn(index) {
            return Err(RunLogError::ActorMismatch { line, turn: index, expected: Actor::for_turn(index) });
        }
        let state = StateId(c.take("state")?.parse().map_err(|_| syntax(line, "state must be an integer"))?);
        let text = c.take("text")?;

        if let Some(verdict) = c.optional("verdict") {
            if actor == Actor::User {
                return Err(RunLogError::VerdictOnUserTurn { line });
            }
            let pass = match verdict.as_str() {
                "pass" => true,
                "fail" => false,
                other => return Err(syntax(line, format!("verdict must be pass or fail, found {other:?}"))),
            };
            let failure =
                c.optional("failure").map(|s| s.parse::<FailureKind>().map_err(|m| syntax(line, m))).transpose()?;
            if pass && failure.is_some() {
                return Err(syntax(line, "a passing verdict cannot name a failure"));
            }
            let note = c.optional("note").unwrap_or_default();
            trace.annotations.insert(index, TurnVerdict { pass, failure, note });
        }
        c.finish()?;
        trace.turns.push(Turn { index, actor, text, state });
    }

    trace.run_id = run_id.ok_or(RunLogError::Empty)?;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::FormalityLevel;

    fn sample() -> ExecutionTrace {
        let mut t = ExecutionTrace {
            run_id: "r0001".into(),
            protocol_name: Some("kindergarten-tutor".into()),
            condition: Some(Condition { agent: "oracle".into(), level: FormalityLevel::L3 }),
            turns: vec![
                Turn { index: 1, actor: Actor::Executor, text: "EASY or HARD?".into(), state: StateId(0) },
                Turn { index: 2, actor: Actor::User, text: "say \"EASY\"\nplease".into(), state: StateId(0) },
                Turn { index: 3, actor: Actor::Executor, text: "What is 2 + 3?".into(), state: StateId(1) },
            ],
            annotations: Default::default(),
        };
        t.annotations.insert(3, TurnVerdict::fail(FailureKind::FormatViolation, "late"));
        t
    }

    #[test]
    fn round_trip() {
        let t = sample();
        let text = write_run_log(&t);
        assert!(text.starts_with("run=r0001 protocol=\"kindergarten-tutor\" agent=\"oracle\" level=L3\n"));
        assert_eq!(ingest_annotated_trace(&text).unwrap(), t);
    }

    #[test]
    fn strictness() {
        let ok = "run=a turn=1 actor=executor state=0 text=\"x\"\n";
        assert!(ingest_annotated_trace(ok).is_ok());
        assert!(matches!(
            ingest_annotated_trace("run=a actor=executor turn=1 state=0 text=\"x\""),
            Err(RunLogError::KeyOrder { line: 1, .. })
        ));
        assert!(matches!(
            ingest_annotated_trace(&format!("{ok}run=b turn=2 actor=user state=0 text=\"y\"")),
            Err(RunLogError::RunIdMismatch { line: 2, .. })
        ));
        assert!(matches!(
            ingest_annotated_trace(&format!("{ok}run=a turn=3 actor=executor state=0 text=\"y\"")),
            Err(RunLogError::NonContiguous { line: 2, expected: 2, found: 3 })
        ));
        assert!(matches!(
            ingest_annotated_trace(&format!("{ok}run=a turn=2 actor=user state=0 text=\"y\" verdict=pass")),
            Err(RunLogError::VerdictOnUserTurn { line: 2 })
        ));
        assert!(matches!(
            ingest_annotated_trace("run=a turn=1 actor=user state=0 text=\"x\""),
            Err(RunLogError::ActorMismatch { .. })
        ));
        assert!(ingest_annotated_trace(
            "run=a turn=1 actor=executor state=0 text=\"x\" verdict=pass failure=case_rejection"
        )
        .is_err());
        assert!(ingest_annotated_trace("run=a turn=1 actor=executor state=0 text=\"x\" extra=1").is_err());
        assert_eq!(ingest_annotated_trace(""), Err(RunLogError::Empty));
    }
}
