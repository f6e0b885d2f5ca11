//! Procedural conformance: judging executor turns against a scripted
//! sequence and scoring a run by the turns that precede its first violation.
//!
//! The score of a run is `correct / total`, where `total` is the script
//! length and `correct` counts user and executor turns up to, but excluding,
//! the first violation. Scores are exact rationals; [`fmt_2dp`] rounds half
//! up for display only.

mod arithmetic;
mod fields;
mod judge;
mod runlog;
mod script;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsm::{step, FsmSpec, StateId, Trigger};
use crate::protocol::{compile_protocol, ProtocolError, ProtocolSpec};
use crate::render::FormalityLevel;

pub use arithmetic::{extract_all_arithmetic, extract_arithmetic, ArithmeticQuestion, Operator};
pub use judge::{classify_turn, JudgeContext};
pub use runlog::{ingest_annotated_trace, write_run_log, RunLogError};
pub use script::{
    canonical_script, parse_script, render_script, ExpectedBehavior, ScriptError, ScriptStep, TestScript, UserInput,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Actor {
    User,
    Executor,
}

impl Actor {
    /// Odd turns belong to the executor, even turns to the user.
    pub fn for_turn(index: u32) -> Actor {
        if index % 2 == 1 {
            Actor::Executor
        } else {
            Actor::User
        }
    }
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Actor::User => "user",
            Actor::Executor => "executor",
        })
    }
}

impl FromStr for Actor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "user" => Ok(Actor::User),
            "executor" => Ok(Actor::Executor),
            other => Err(format!("unknown actor {other:?}")),
        }
    }
}

/// Reads user input as a trigger: trimmed and uppercased.
pub fn normalize_token(text: &str) -> Option<Trigger> {
    Trigger::new(text.trim().to_uppercase()).ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub index: u32,
    pub actor: Actor,
    pub text: String,
    /// Machine state in effect when the turn is emitted. For executor turns
    /// this is after the preceding user input was consumed.
    pub state: StateId,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Condition {
    pub agent: String,
    pub level: FormalityLevel,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.agent, self.level)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub run_id: String,
    pub protocol_name: Option<String>,
    pub condition: Option<Condition>,
    pub turns: Vec<Turn>,
    /// Externally supplied verdicts, keyed by turn index.
    pub annotations: BTreeMap<u32, TurnVerdict>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    ConfirmationSeeking,
    AmbiguityMisread,
    CaseRejection,
    MissingEvaluation,
    MissingNavigationPrompt,
    PrematureAnswerReveal,
    WrongStateBehavior,
    FormatViolation,
}

impl FailureKind {
    pub const ALL: [FailureKind; 8] = [
        FailureKind::ConfirmationSeeking,
        FailureKind::AmbiguityMisread,
        FailureKind::CaseRejection,
        FailureKind::MissingEvaluation,
        FailureKind::MissingNavigationPrompt,
        FailureKind::PrematureAnswerReveal,
        FailureKind::WrongStateBehavior,
        FailureKind::FormatViolation,
    ];

    pub fn token(self) -> &'static str {
        match self {
            FailureKind::ConfirmationSeeking => "confirmation_seeking",
            FailureKind::AmbiguityMisread => "ambiguity_misread",
            FailureKind::CaseRejection => "case_rejection",
            FailureKind::MissingEvaluation => "missing_evaluation",
            FailureKind::MissingNavigationPrompt => "missing_navigation_prompt",
            FailureKind::PrematureAnswerReveal => "premature_answer_reveal",
            FailureKind::WrongStateBehavior => "wrong_state_behavior",
            FailureKind::FormatViolation => "format_violation",
        }
    }
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for FailureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FailureKind::ALL.into_iter().find(|k| k.token() == s).ok_or_else(|| format!("unknown failure kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnVerdict {
    pub pass: bool,
    pub failure: Option<FailureKind>,
    pub note: String,
}

impl TurnVerdict {
    pub fn pass() -> Self {
        TurnVerdict { pass: true, failure: None, note: String::new() }
    }

    pub fn fail(kind: FailureKind, note: impl Into<String>) -> Self {
        TurnVerdict { pass: false, failure: Some(kind), note: note.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConformanceScore {
    pub correct_turns: u32,
    pub total_turns: u32,
    pub first_violation: Option<u32>,
    pub failure: Option<FailureKind>,
}

impl ConformanceScore {
    pub fn value(&self) -> Ratio<u64> {
        Ratio::new(self.correct_turns as u64, self.total_turns as u64)
    }

    pub fn is_perfect(&self) -> bool {
        self.correct_turns == self.total_turns
    }
}

impl fmt::Display for ConformanceScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{} = {}", self.correct_turns, self.total_turns, fmt_2dp(self.value()))
    }
}

/// Formats a non-negative rational with two decimals, rounding half up.
pub fn fmt_2dp(value: Ratio<u64>) -> String {
    fmt_decimals(value, 2)
}

/// Formats a non-negative rational with `places` decimals, rounding half up.
pub fn fmt_decimals(value: Ratio<u64>, places: u32) -> String {
    let (n, d) = (*value.numer() as u128, *value.denom() as u128);
    let scale = 10u128.pow(places);
    let scaled = (2 * scale * n + d) / (2 * d);
    if places == 0 {
        return scaled.to_string();
    }
    format!("{}.{:0width$}", scaled / scale, scaled % scale, width = places as usize)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoreError {
    #[error("script has no steps")]
    EmptyScript,
    #[error("trace has {trace} turns but the script has {script}")]
    TooManyTurns { trace: usize, script: usize },
    #[error("trace misaligned at turn {turn}: {reason}")]
    MisalignedTrace { turn: u32, reason: String },
    #[error("script disagrees with the protocol: {0}")]
    ScriptMismatch(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Per-turn verdicts up to and including the first violation, and the score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgedTrace {
    pub verdicts: Vec<TurnVerdict>,
    pub score: ConformanceScore,
}

#[derive(Debug, Clone)]
pub struct Judge {
    protocol: ProtocolSpec,
    fsm: FsmSpec,
    script: TestScript,
    strict_grading: bool,
}

impl Judge {
    pub fn new(protocol: ProtocolSpec, script: TestScript) -> Result<Self, ScoreError> {
        if script.is_empty() {
            return Err(ScoreError::EmptyScript);
        }
        let fsm = compile_protocol(&protocol)?;
        script.check_against(&fsm).map_err(ScoreError::ScriptMismatch)?;
        Ok(Judge { protocol, fsm, script, strict_grading: false })
    }

    pub fn strict_grading(mut self, on: bool) -> Self {
        self.strict_grading = on;
        self
    }

    pub fn protocol(&self) -> &ProtocolSpec {
        &self.protocol
    }

    pub fn fsm(&self) -> &FsmSpec {
        &self.fsm
    }

    pub fn script(&self) -> &TestScript {
        &self.script
    }

    /// Judges turns in order and stops at the first violation. A trace that
    /// ends early without a violation scores its length.
    pub fn judge(&self, trace: &ExecutionTrace) -> Result<JudgedTrace, ScoreError> {
        let total = self.script.len();
        if trace.turns.len() > total {
            return Err(ScoreError::TooManyTurns { trace: trace.turns.len(), script: total });
        }
        let mut state = self.fsm.initial;
        let mut invites = false;
        let mut pending_answer = None;
        let mut last_user_input: Option<String> = None;
        let mut verdicts = Vec::new();

        for (pos, step_spec) in self.script.steps.iter().enumerate() {
            let Some(turn) = trace.turns.get(pos) else {
                break;
            };
            if turn.index != step_spec.index {
                return Err(ScoreError::MisalignedTrace {
                    turn: step_spec.index,
                    reason: format!("found turn number {}", turn.index),
                });
            }
            if turn.actor != step_spec.expected.actor() {
                return Err(ScoreError::MisalignedTrace {
                    turn: step_spec.index,
                    reason: format!("actor {} where the script expects {}", turn.actor, step_spec.expected.actor()),
                });
            }

            let verdict = match trace.annotations.get(&turn.index) {
                Some(v) => v.clone(),
                None => {
                    let mut ctx = JudgeContext::for_state(&self.protocol, state);
                    ctx.pending_answer = pending_answer;
                    ctx.last_user_input = last_user_input.clone();
                    ctx.strict_grading = self.strict_grading;
                    let mut v = classify_turn(turn, &step_spec.expected, &ctx);
                    if v.pass && turn.actor == Actor::Executor && turn.state != state {
                        v = TurnVerdict::fail(
                            FailureKind::WrongStateBehavior,
                            format!("executor in state {}, expected {state}", turn.state),
                        );
                    }
                    v
                }
            };

            match turn.actor {
                Actor::Executor => {
                    if matches!(step_spec.expected, ExpectedBehavior::AskQuestion(_)) {
                        pending_answer = extract_arithmetic(&turn.text).map(|q| q.answer);
                    }
                    invites = step_spec.expected.invites_trigger();
                }
                Actor::User => {
                    if invites {
                        if let Some(trigger) = normalize_token(&turn.text) {
                            if let Ok(Some(next)) = step(&self.fsm, state, &trigger) {
                                state = next;
                            }
                        }
                    }
                    last_user_input = Some(turn.text.clone());
                }
            }

            let pass = verdict.pass;
            let failure = verdict.failure;
            verdicts.push(verdict);
            if !pass {
                let score = ConformanceScore {
                    correct_turns: pos as u32,
                    total_turns: total as u32,
                    first_violation: Some(turn.index),
                    failure,
                };
                return Ok(JudgedTrace { verdicts, score });
            }
        }
        let score = ConformanceScore {
            correct_turns: verdicts.len() as u32,
            total_turns: total as u32,
            first_violation: None,
            failure: None,
        };
        Ok(JudgedTrace { verdicts, score })
    }

    pub fn score(&self, trace: &ExecutionTrace) -> Result<ConformanceScore, ScoreError> {
        self.judge(trace).map(|j| j.score)
    }
}

/// Scores `trace` against `script` under `protocol` with lenient grading.
pub fn score_trace(
    trace: &ExecutionTrace,
    script: &TestScript,
    protocol: &ProtocolSpec,
) -> Result<ConformanceScore, ScoreError> {
    Judge::new(protocol.clone(), script.clone())?.score(trace)
}
