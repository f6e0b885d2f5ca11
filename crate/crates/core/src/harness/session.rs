//! Scripted user turns and the session loop.

use super::{AgentError, TutorAgent, TutorContext};
use crate::conformance::{
    extract_arithmetic, Actor, Condition, ExecutionTrace, ExpectedBehavior, ScriptStep, TestScript, Turn, UserInput,
};
use crate::fsm::FsmSpec;
use crate::protocol::ProtocolSpec;
use crate::render::FormalityLevel;

/// Sent for an answer placeholder when the last question cannot be parsed.
pub const FALLBACK_ANSWER: &str = "0";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserUtterance {
    pub text: String,
    pub unparseable_question: bool,
}

/// The user's text for `step`, resolving answer placeholders against the
/// executor's most recent turn.
pub fn scripted_user_step(step: &ScriptStep, history: &[Turn]) -> UserUtterance {
    let input = match &step.expected {
        ExpectedBehavior::ScriptedUserInput(input) => input,
        _ => return UserUtterance { text: String::new(), unparseable_question: false },
    };
    let answer = || {
        history
            .iter()
            .rev()
            .find(|t| t.actor == Actor::Executor)
            .and_then(|t| extract_arithmetic(&t.text))
            .map(|q| q.answer)
    };
    let resolved = match input {
        UserInput::Literal(text) => return UserUtterance { text: text.clone(), unparseable_question: false },
        UserInput::CorrectAnswer => answer(),
        UserInput::IncorrectAnswer => answer().map(|a| a + 1),
    };
    match resolved {
        Some(n) => UserUtterance { text: n.to_string(), unparseable_question: false },
        None => UserUtterance { text: FALLBACK_ANSWER.into(), unparseable_question: true },
    }
}

/// Fixed inputs shared by every session of one condition.
#[derive(Debug, Clone, Copy)]
pub struct SessionContext<'a> {
    pub protocol: &'a ProtocolSpec,
    pub fsm: &'a FsmSpec,
    pub script: &'a TestScript,
    pub level: FormalityLevel,
    pub prompt: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionRecord {
    pub trace: ExecutionTrace,
    /// Some answer placeholder fell back to [`FALLBACK_ANSWER`].
    pub unparseable_question: bool,
}

/// Transport failure inside a session, with the turns completed before it.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("session {} aborted at turn {}: {error}", partial.run_id, partial.turns.len() + 1)]
pub struct SessionError {
    pub error: AgentError,
    pub partial: Box<ExecutionTrace>,
}

/// Plays the script against `agent` from a fresh history.
pub fn run_session(
    agent: &dyn TutorAgent,
    ctx: &SessionContext<'_>,
    run_id: &str,
    seed: u64,
) -> Result<SessionRecord, SessionError> {
    let mut trace = ExecutionTrace {
        run_id: run_id.to_string(),
        protocol_name: Some(ctx.protocol.name.clone()),
        condition: Some(Condition { agent: agent.name().to_string(), level: ctx.level }),
        ..Default::default()
    };
    let mut state = ctx.fsm.initial;
    let mut unparseable_question = false;

    for step in &ctx.script.steps {
        let index = trace.turns.len() as u32 + 1;
        match step.expected.actor() {
            Actor::User => {
                let u = scripted_user_step(step, &trace.turns);
                unparseable_question |= u.unparseable_question;
                trace.turns.push(Turn { index, actor: Actor::User, text: u.text, state });
            }
            Actor::Executor => {
                let tctx = TutorContext {
                    protocol: ctx.protocol,
                    fsm: ctx.fsm,
                    level: ctx.level,
                    prompt: ctx.prompt,
                    history: &trace.turns,
                    state,
                    seed,
                };
                let reply = match agent.respond(&tctx) {
                    Ok(r) => r,
                    Err(error) => return Err(SessionError { error, partial: Box::new(trace) }),
                };
                state = reply.next_state;
                trace.turns.push(Turn { index, actor: Actor::Executor, text: reply.text, state });
            }
        }
    }
    Ok(SessionRecord { trace, unparseable_question })
}
