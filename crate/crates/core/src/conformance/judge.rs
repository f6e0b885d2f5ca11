//! Rule-based verdicts for single turns. All matching is case-insensitive
//! and word-based.

use super::arithmetic::{extract_all_arithmetic, integers_outside};
use super::script::ExpectedBehavior;
use super::{Actor, FailureKind, Turn, TurnVerdict};
use crate::fsm::{StateId, Trigger};
use crate::protocol::{ProtocolSpec, VerdictFormat};

/// Vocabulary and conversational context needed to judge one turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgeContext {
    /// Options offered by the difficulty choice.
    pub choice_tokens: Vec<Trigger>,
    /// Options a navigation prompt must name (stay, switch).
    pub navigation_tokens: Vec<Trigger>,
    /// Leading words of the two verdicts ("Correct", "Wrong").
    pub verdict_words: [String; 2],
    /// Answer to the executor's pending question, if it was parseable.
    pub pending_answer: Option<i64>,
    pub last_user_input: Option<String>,
    /// Also check that the verdict agrees with the user's answer.
    pub strict_grading: bool,
}

impl JudgeContext {
    pub fn for_state(protocol: &ProtocolSpec, state: StateId) -> Self {
        let plan = protocol.plan(state);
        let navigation_tokens = match plan.and_then(|p| p.navigation()) {
            Some(nav) => vec![nav.stay.clone(), nav.switch.clone()],
            None if state == protocol.initial => protocol.choice_tokens(),
            None => protocol.navigation_tokens(),
        };
        let verdicts = plan
            .and_then(|p| p.evaluation())
            .or_else(|| protocol.roles.values().find_map(|p| p.evaluation()))
            .cloned()
            .unwrap_or_default();
        JudgeContext {
            choice_tokens: protocol.choice_tokens(),
            navigation_tokens,
            verdict_words: VerdictFormat::keywords(&verdicts),
            pending_answer: None,
            last_user_input: None,
            strict_grading: false,
        }
    }
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase).collect()
}

fn mentions(words: &[String], token: &str) -> bool {
    let token = token.to_lowercase();
    words.contains(&token)
}

fn fail(kind: FailureKind, note: impl Into<String>) -> TurnVerdict {
    TurnVerdict { pass: false, failure: Some(kind), note: note.into() }
}

const CONFIRMATION_WORDS: [&str; 7] = ["want", "sure", "confirm", "switch", "really", "ready", "shall"];

pub fn classify_turn(turn: &Turn, expected: &ExpectedBehavior, ctx: &JudgeContext) -> TurnVerdict {
    if turn.actor != expected.actor() {
        return fail(FailureKind::FormatViolation, format!("turn {} has the wrong actor", turn.index));
    }
    if turn.actor == Actor::User {
        return TurnVerdict::pass();
    }

    let text = turn.text.as_str();
    let w = words(text);
    let questions = extract_all_arithmetic(text);
    let has_verdict = ctx.verdict_words.iter().any(|v| mentions(&w, v));
    let has_navigation =
        !ctx.navigation_tokens.is_empty() && ctx.navigation_tokens.iter().all(|t| mentions(&w, t.as_str()));

    match expected {
        ExpectedBehavior::ScriptedUserInput(_) => TurnVerdict::pass(),

        ExpectedBehavior::AskDifficultyChoice => {
            if !questions.is_empty() {
                fail(FailureKind::FormatViolation, "asks a question before a difficulty is chosen")
            } else if !ctx.choice_tokens.iter().all(|t| mentions(&w, t.as_str())) {
                fail(FailureKind::FormatViolation, "does not offer every difficulty option")
            } else {
                TurnVerdict::pass()
            }
        }

        ExpectedBehavior::AskQuestion(_) => match questions.as_slice() {
            [q] => {
                if integers_outside(text, &q.span).contains(&q.answer) {
                    fail(FailureKind::PrematureAnswerReveal, format!("states the answer {}", q.answer))
                } else if has_verdict {
                    fail(FailureKind::FormatViolation, "verdict in a question turn")
                } else if has_navigation {
                    fail(FailureKind::FormatViolation, "navigation prompt in a question turn")
                } else {
                    TurnVerdict::pass()
                }
            }
            [] => {
                let case_variant = ctx.last_user_input.as_deref().is_some_and(|input| {
                    let input = input.trim();
                    input.to_uppercase() != input
                        && ctx
                            .navigation_tokens
                            .iter()
                            .chain(&ctx.choice_tokens)
                            .any(|t| t.as_str().eq_ignore_ascii_case(input))
                });
                if case_variant && (has_navigation || mentions(&w, "valid") || mentions(&w, "invalid")) {
                    fail(FailureKind::CaseRejection, "rejects a valid command because of its case")
                } else if text.contains('?') && CONFIRMATION_WORDS.iter().any(|c| mentions(&w, c)) {
                    fail(FailureKind::ConfirmationSeeking, "asks for confirmation instead of transitioning")
                } else {
                    fail(FailureKind::FormatViolation, "no arithmetic question")
                }
            }
            _ => fail(FailureKind::FormatViolation, "more than one question"),
        },

        ExpectedBehavior::EvaluateAndPrompt => {
            if !has_verdict {
                return fail(FailureKind::MissingEvaluation, "no verdict");
            }
            if !has_navigation {
                return fail(FailureKind::MissingNavigationPrompt, "navigation options not offered");
            }
            if !questions.is_empty() {
                return fail(FailureKind::FormatViolation, "asks a new question before navigation");
            }
            if ctx.strict_grading {
                let given = ctx.last_user_input.as_deref().and_then(|s| s.trim().parse::<i64>().ok());
                if let (Some(expected), Some(given)) = (ctx.pending_answer, given) {
                    let [right, wrong] = &ctx.verdict_words;
                    let (say, avoid) = if given == expected { (right, wrong) } else { (wrong, right) };
                    if !mentions(&w, say) || mentions(&w, avoid) {
                        return fail(
                            FailureKind::FormatViolation,
                            format!("verdict contradicts answer {given} (expected {expected})"),
                        );
                    }
                }
            }
            TurnVerdict::pass()
        }

        ExpectedBehavior::RePromptNavigation => {
            if !questions.is_empty() {
                fail(FailureKind::AmbiguityMisread, "treats an invalid command as navigation")
            } else if has_verdict {
                fail(FailureKind::FormatViolation, "verdict in a re-prompt")
            } else if !has_navigation {
                fail(FailureKind::MissingNavigationPrompt, "valid options not restated")
            } else {
                TurnVerdict::pass()
            }
        }
    }
}
