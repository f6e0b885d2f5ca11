//! The reference tutor: executes every role plan exactly.

use super::{AgentError, TutorAgent, TutorContext, TutorReply};
use crate::conformance::{extract_arithmetic, normalize_token, Actor, ArithmeticQuestion, Turn};
use crate::fsm::{step, StateId, Trigger};
use crate::protocol::{join_alternatives, Navigation, ProtocolSpec, VerdictFormat};

pub const EASY_QUESTIONS: [&str; 8] = [
    "What is 2 + 3?",
    "What is 4 + 4?",
    "What is 3 + 4?",
    "What is 6 - 2?",
    "What is 5 + 1?",
    "What is 9 - 3?",
    "What is 1 + 7?",
    "What is 8 - 5?",
];

pub const HARD_QUESTIONS: [&str; 6] =
    ["What is 14 - 6?", "What is 9 + 7?", "What is 6 × 7?", "What is 48 ÷ 6?", "What is 23 + 19?", "What is 35 - 17?"];

/// What the conversation is waiting for, read off the history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Phase {
    Opening,
    Choice,
    Answer(ArithmeticQuestion),
    Navigation,
}

pub(crate) fn phase(protocol: &ProtocolSpec, history: &[Turn], state: StateId) -> Phase {
    match history.iter().rev().find(|t| t.actor == Actor::Executor) {
        None => Phase::Opening,
        Some(t) => match extract_arithmetic(&t.text) {
            Some(q) => Phase::Answer(q),
            None if state == protocol.initial => Phase::Choice,
            None => Phase::Navigation,
        },
    }
}

pub(crate) fn last_user_input(history: &[Turn]) -> &str {
    match history.last() {
        Some(t) if t.actor == Actor::User => &t.text,
        _ => "",
    }
}

/// Target of `input` read as a trigger from `state`, case-insensitively.
pub(crate) fn transition(ctx: &TutorContext<'_>, input: &str) -> Option<StateId> {
    let trigger = normalize_token(input)?;
    step(ctx.fsm, ctx.state, &trigger).ok().flatten()
}

fn navigation(protocol: &ProtocolSpec, state: StateId) -> Option<&Navigation> {
    protocol.plan(state).and_then(|p| p.navigation())
}

pub(crate) fn options(protocol: &ProtocolSpec, state: StateId) -> Vec<Trigger> {
    match navigation(protocol, state) {
        Some(nav) => vec![nav.stay.clone(), nav.switch.clone()],
        None => protocol.choice_tokens(),
    }
}

fn level_of(protocol: &ProtocolSpec, state: StateId) -> String {
    protocol
        .plan(state)
        .and_then(|p| p.question_level())
        .map(str::to_string)
        .or_else(|| protocol.label(state).map(str::to_lowercase))
        .unwrap_or_default()
}

pub(crate) fn difficulty_choice(protocol: &ProtocolSpec) -> String {
    let tokens = protocol.choice_tokens().iter().map(|t| t.to_string()).collect::<Vec<_>>();
    format!("Choose {}.", join_alternatives(tokens, "or"))
}

pub(crate) fn next_question(ctx: &TutorContext<'_>, state: StateId) -> String {
    let asked = ctx
        .history
        .iter()
        .filter(|t| t.actor == Actor::Executor && t.state == state && extract_arithmetic(&t.text).is_some())
        .count();
    let bank: &[&str] = if level_of(ctx.protocol, state) == "hard" { &HARD_QUESTIONS } else { &EASY_QUESTIONS };
    bank[asked % bank.len()].to_string()
}

pub(crate) fn reprompt(protocol: &ProtocolSpec, state: StateId) -> String {
    let tokens = options(protocol, state).iter().map(|t| t.to_string()).collect::<Vec<_>>();
    let ask = format!("Please choose {}.", join_alternatives(tokens, "or"));
    match navigation(protocol, state) {
        Some(nav) => format!("{ask} {}", nav.prompt()),
        None => ask,
    }
}

fn evaluate(protocol: &ProtocolSpec, state: StateId, question: &ArithmeticQuestion, input: &str) -> String {
    let plan = protocol.plan(state);
    let format = plan.and_then(|p| p.evaluation()).cloned().unwrap_or_else(VerdictFormat::default);
    let mut verdict = if input.trim().parse::<i64>().ok() == Some(question.answer) {
        format.correct.clone()
    } else {
        format.wrong_with_answer(question.answer)
    };
    if let Some(nav) = navigation(protocol, state) {
        if !verdict.ends_with(['.', '!', '?']) {
            verdict.push('.');
        }
        verdict.push(' ');
        verdict.push_str(&nav.prompt());
    }
    verdict
}

/// Oracle behavior for the turn described by `ctx`.
pub(crate) fn oracle_reply(ctx: &TutorContext<'_>) -> TutorReply {
    let protocol = ctx.protocol;
    match phase(protocol, ctx.history, ctx.state) {
        Phase::Opening => TutorReply { text: difficulty_choice(protocol), next_state: protocol.initial },
        Phase::Choice | Phase::Navigation => match transition(ctx, last_user_input(ctx.history)) {
            Some(next) => TutorReply { text: next_question(ctx, next), next_state: next },
            None => TutorReply { text: reprompt(protocol, ctx.state), next_state: ctx.state },
        },
        Phase::Answer(q) => {
            TutorReply { text: evaluate(protocol, ctx.state, &q, last_user_input(ctx.history)), next_state: ctx.state }
        }
    }
}

/// Stateless and deterministic: everything is read from the history.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleAgent;

impl TutorAgent for OracleAgent {
    fn name(&self) -> &str {
        "oracle"
    }

    fn respond(&self, ctx: &TutorContext<'_>) -> Result<TutorReply, AgentError> {
        Ok(oracle_reply(ctx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{canonical_tutor_protocol, compile_protocol};
    use crate::render::FormalityLevel;

    fn turn(index: u32, text: &str, state: u32) -> Turn {
        Turn { index, actor: Actor::for_turn(index), text: text.into(), state: StateId(state) }
    }

    fn reply(history: &[Turn], state: u32) -> TutorReply {
        let p = canonical_tutor_protocol();
        let fsm = compile_protocol(&p).unwrap();
        let ctx = TutorContext {
            protocol: &p,
            fsm: &fsm,
            level: FormalityLevel::L4,
            prompt: "",
            history,
            state: StateId(state),
            seed: 0,
        };
        oracle_reply(&ctx)
    }

    #[test]
    fn opening_and_first_question() {
        assert_eq!(reply(&[], 0).text, "Choose EASY or HARD.");
        let h = [turn(1, "Choose EASY or HARD.", 0), turn(2, "EASY", 0)];
        assert_eq!(reply(&h, 0), TutorReply { text: "What is 2 + 3?".into(), next_state: StateId(1) });
    }

    #[test]
    fn evaluation_and_navigation() {
        let mut h = vec![turn(1, "Choose EASY or HARD.", 0), turn(2, "easy", 0), turn(3, "What is 2 + 3?", 1)];
        h.push(turn(4, "5", 1));
        assert_eq!(reply(&h, 1).text, "Correct! MORE at the easy level, or CHANGE to the hard level?");
        h[3].text = "6".into();
        assert_eq!(reply(&h, 1).text, "Wrong, the answer is 5. MORE at the easy level, or CHANGE to the hard level?");
    }

    #[test]
    fn loops_reprompts_and_cycles() {
        let nav = "Correct! MORE at the easy level, or CHANGE to the hard level?";
        let mut h = vec![
            turn(1, "Choose EASY or HARD.", 0),
            turn(2, "EASY", 0),
            turn(3, "What is 2 + 3?", 1),
            turn(4, "5", 1),
            turn(5, nav, 1),
            turn(6, "more", 1),
        ];
        assert_eq!(reply(&h, 1), TutorReply { text: "What is 4 + 4?".into(), next_state: StateId(1) });
        h[5].text = "yes".into();
        let r = reply(&h, 1);
        assert_eq!(r.next_state, StateId(1));
        assert!(r.text.starts_with("Please choose MORE or CHANGE."));
        h[5].text = "change".into();
        assert_eq!(reply(&h, 1), TutorReply { text: "What is 14 - 6?".into(), next_state: StateId(2) });
    }

    #[test]
    fn question_banks_are_answerable() {
        for q in EASY_QUESTIONS.iter().chain(&HARD_QUESTIONS) {
            assert!(extract_arithmetic(q).is_some(), "{q}");
        }
        assert_eq!(extract_arithmetic(EASY_QUESTIONS[0]).unwrap().answer, 5);
    }
}
