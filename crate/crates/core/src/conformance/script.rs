//! Scripted test sequences: what the user says on even turns and what the
//! executor is expected to do on odd turns.
//!
//! Script files use the run-log field syntax, one step per line:
//!
//! ```text
//! turn=1 actor=executor state=0 expect=ask_choice
//! turn=2 actor=user expect=input text="EASY"
//! turn=3 actor=executor state=1 expect=ask_question level=easy
//! turn=8 actor=user expect=correct_answer
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::fields::{escape, split_fields};
use super::{normalize_token, Actor};
use crate::fsm::{step, FsmSpec, StateId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum UserInput {
    Literal(String),
    /// The correct answer to the executor's most recent question.
    CorrectAnswer,
    /// The correct answer plus one.
    IncorrectAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExpectedBehavior {
    AskDifficultyChoice,
    AskQuestion(String),
    EvaluateAndPrompt,
    RePromptNavigation,
    ScriptedUserInput(UserInput),
}

impl ExpectedBehavior {
    pub fn actor(&self) -> Actor {
        match self {
            ExpectedBehavior::ScriptedUserInput(_) => Actor::User,
            _ => Actor::Executor,
        }
    }

    /// Whether the user's reply to this behavior is read as a trigger.
    pub(crate) fn invites_trigger(&self) -> bool {
        matches!(
            self,
            ExpectedBehavior::AskDifficultyChoice
                | ExpectedBehavior::EvaluateAndPrompt
                | ExpectedBehavior::RePromptNavigation
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub index: u32,
    pub expected: ExpectedBehavior,
    /// Machine state the executor should be in while emitting this turn.
    pub state: Option<StateId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestScript {
    pub steps: Vec<ScriptStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("script line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

impl TestScript {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn step(&self, index: u32) -> Option<&ScriptStep> {
        self.steps.get(index.checked_sub(1)? as usize)
    }

    /// Walks the script through `fsm`, checking every executor state
    /// annotation against the state reached by the scripted triggers.
    pub fn check_against(&self, fsm: &FsmSpec) -> Result<(), String> {
        let mut state = fsm.initial;
        let mut invites = false;
        for s in &self.steps {
            match &s.expected {
                ExpectedBehavior::ScriptedUserInput(UserInput::Literal(text)) if invites => {
                    if let Some(trigger) = normalize_token(text) {
                        if let Some(next) = step(fsm, state, &trigger).map_err(|e| e.to_string())? {
                            state = next;
                        }
                    }
                }
                ExpectedBehavior::ScriptedUserInput(_) => {}
                other => {
                    if let Some(annotated) = s.state {
                        if annotated != state {
                            return Err(format!(
                                "turn {}: annotated state {annotated}, machine is in {state}",
                                s.index
                            ));
                        }
                    }
                    invites = other.invites_trigger();
                }
            }
        }
        Ok(())
    }
}

fn err(line: usize, message: impl Into<String>) -> ScriptError {
    ScriptError { line, message: message.into() }
}

pub fn parse_script(source: &str) -> Result<TestScript, ScriptError> {
    let mut steps = Vec::new();
    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields = split_fields(trimmed).map_err(|m| err(line, m))?;
        let mut turn = None;
        let mut actor = None;
        let mut state = None;
        let mut expect = None;
        let mut level = None;
        let mut text = None;
        for f in fields {
            let slot = match f.key.as_str() {
                "turn" => &mut turn,
                "actor" => &mut actor,
                "state" => &mut state,
                "expect" => &mut expect,
                "level" => &mut level,
                "text" => &mut text,
                other => return Err(err(line, format!("unknown key {other:?}"))),
            };
            if slot.replace(f.value).is_some() {
                return Err(err(line, format!("duplicate key {:?}", f.key)));
            }
        }
        let index: u32 = turn
            .ok_or_else(|| err(line, "missing turn="))?
            .parse()
            .map_err(|_| err(line, "turn must be a positive integer"))?;
        if index as usize != steps.len() + 1 {
            return Err(err(line, format!("expected turn {}, found {index}", steps.len() + 1)));
        }
        let actor: Actor =
            actor.ok_or_else(|| err(line, "missing actor="))?.parse().map_err(|m: String| err(line, m))?;
        let state =
            state.map(|s| s.parse().map(StateId).map_err(|_| err(line, "state must be an integer"))).transpose()?;
        let expected = match expect.ok_or_else(|| err(line, "missing expect="))?.as_str() {
            "ask_choice" => ExpectedBehavior::AskDifficultyChoice,
            "ask_question" => {
                ExpectedBehavior::AskQuestion(level.take().ok_or_else(|| err(line, "ask_question needs level="))?)
            }
            "evaluate_and_prompt" => ExpectedBehavior::EvaluateAndPrompt,
            "reprompt_navigation" => ExpectedBehavior::RePromptNavigation,
            "input" => ExpectedBehavior::ScriptedUserInput(UserInput::Literal(
                text.take().ok_or_else(|| err(line, "input needs text="))?,
            )),
            "correct_answer" => ExpectedBehavior::ScriptedUserInput(UserInput::CorrectAnswer),
            "incorrect_answer" => ExpectedBehavior::ScriptedUserInput(UserInput::IncorrectAnswer),
            other => return Err(err(line, format!("unknown expectation {other:?}"))),
        };
        if level.is_some() || text.is_some() {
            return Err(err(line, "level=/text= not valid for this expectation"));
        }
        if expected.actor() != actor {
            return Err(err(line, format!("expectation does not belong to actor {actor}")));
        }
        if actor != Actor::for_turn(index) {
            return Err(err(line, "odd turns belong to the executor, even turns to the user"));
        }
        steps.push(ScriptStep { index, expected, state });
    }
    if steps.is_empty() {
        return Err(err(0, "script has no steps"));
    }
    Ok(TestScript { steps })
}

pub fn render_script(script: &TestScript) -> String {
    let mut out = String::new();
    for s in &script.steps {
        let _ = write!(out, "turn={} actor={}", s.index, s.expected.actor());
        if let Some(state) = s.state {
            let _ = write!(out, " state={state}");
        }
        let _ = match &s.expected {
            ExpectedBehavior::AskDifficultyChoice => write!(out, " expect=ask_choice"),
            ExpectedBehavior::AskQuestion(level) => write!(out, " expect=ask_question level={level}"),
            ExpectedBehavior::EvaluateAndPrompt => write!(out, " expect=evaluate_and_prompt"),
            ExpectedBehavior::RePromptNavigation => write!(out, " expect=reprompt_navigation"),
            ExpectedBehavior::ScriptedUserInput(UserInput::Literal(t)) => {
                write!(out, " expect=input text={}", escape(t))
            }
            ExpectedBehavior::ScriptedUserInput(UserInput::CorrectAnswer) => {
                write!(out, " expect=correct_answer")
            }
            ExpectedBehavior::ScriptedUserInput(UserInput::IncorrectAnswer) => {
                write!(out, " expect=incorrect_answer")
            }
        };
        out.push('\n');
    }
    out
}

/// The standardized 21-turn sequence for the kindergarten tutor.
pub fn canonical_script() -> TestScript {
    use ExpectedBehavior as E;
    let input = |s: &str| E::ScriptedUserInput(UserInput::Literal(s.into()));
    let q = |level: &str| E::AskQuestion(level.into());
    let rows: Vec<(E, Option<u32>)> = vec![
        (E::AskDifficultyChoice, Some(0)),
        (input("EASY"), None),
        (q("easy"), Some(1)),
        (input("5"), None),
        (E::EvaluateAndPrompt, Some(1)),
        (input("more"), None),
        (q("easy"), Some(1)),
        (E::ScriptedUserInput(UserInput::CorrectAnswer), None),
        (E::EvaluateAndPrompt, Some(1)),
        (input("change"), None),
        (q("hard"), Some(2)),
        (E::ScriptedUserInput(UserInput::IncorrectAnswer), None),
        (E::EvaluateAndPrompt, Some(2)),
        (input("yes"), None),
        (E::RePromptNavigation, Some(2)),
        (input("what"), None),
        (E::RePromptNavigation, Some(2)),
        (input("change"), None),
        (q("easy"), Some(1)),
        (E::ScriptedUserInput(UserInput::CorrectAnswer), None),
        (E::EvaluateAndPrompt, Some(1)),
    ];
    TestScript {
        steps: rows
            .into_iter()
            .enumerate()
            .map(|(i, (expected, state))| ScriptStep { index: i as u32 + 1, expected, state: state.map(StateId) })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{canonical_tutor_protocol, compile_protocol};

    const CANONICAL: &str = include_str!("../../fixtures/canonical.script");

    #[test]
    fn canonical_script_shape() {
        let s = canonical_script();
        assert_eq!(s.len(), 21);
        for step in &s.steps {
            assert_eq!(step.expected.actor(), Actor::for_turn(step.index));
        }
        assert_eq!(s.step(6).unwrap().expected, ExpectedBehavior::ScriptedUserInput(UserInput::Literal("more".into())));
    }

    #[test]
    fn shipped_script_file_matches() {
        assert_eq!(parse_script(CANONICAL).unwrap(), canonical_script());
        assert_eq!(parse_script(&render_script(&canonical_script())).unwrap(), canonical_script());
    }

    #[test]
    fn state_annotations_agree_with_the_machine() {
        let fsm = compile_protocol(&canonical_tutor_protocol()).unwrap();
        canonical_script().check_against(&fsm).unwrap();

        let mut bad = canonical_script();
        bad.steps[10].state = Some(StateId(1));
        assert!(bad.check_against(&fsm).is_err());
    }

    #[test]
    fn parse_errors() {
        assert!(parse_script("turn=2 actor=user expect=input text=\"x\"").is_err());
        assert!(parse_script("turn=1 actor=user expect=input text=\"x\"").is_err());
        assert!(parse_script("turn=1 actor=executor expect=ask_question").is_err());
        assert!(parse_script("turn=1 actor=executor expect=dance").is_err());
        assert!(parse_script("# only a comment\n").is_err());
    }
}
