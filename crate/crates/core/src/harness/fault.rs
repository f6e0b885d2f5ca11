//! Oracle variants with injected procedural faults.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracle::{last_user_input, next_question, options, oracle_reply, phase, transition, Phase};
use super::{AgentError, TutorAgent, TutorContext, TutorReply};
use crate::conformance::{normalize_token, Actor};
use crate::protocol::join_alternatives;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FaultKind {
    /// Asks for confirmation at the first CHANGE instead of switching.
    ConfirmationSeeker,
    /// Reads "yes" at a navigation prompt as the stay option.
    AmbiguityMisreader,
    /// Rejects navigation tokens that are not written in upper case.
    CaseBrittle,
    /// Replaces each tutor turn with a malformed one with probability `p`.
    RandomDeviator(f64),
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultKind::ConfirmationSeeker => f.write_str("confirmation_seeker"),
            FaultKind::AmbiguityMisreader => f.write_str("ambiguity_misreader"),
            FaultKind::CaseBrittle => f.write_str("case_brittle"),
            FaultKind::RandomDeviator(p) => write!(f, "random:{p}"),
        }
    }
}

impl FromStr for FaultKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "confirmation_seeker" => Ok(FaultKind::ConfirmationSeeker),
            "ambiguity_misreader" => Ok(FaultKind::AmbiguityMisreader),
            "case_brittle" => Ok(FaultKind::CaseBrittle),
            other => {
                let p = other
                    .strip_prefix("random:")
                    .ok_or_else(|| format!("unknown fault {other:?}"))?
                    .parse::<f64>()
                    .map_err(|e| format!("bad probability: {e}"))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(format!("probability {p} outside [0, 1]"));
                }
                Ok(FaultKind::RandomDeviator(p))
            }
        }
    }
}

/// A fault kind plus the seed mixed into every session seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultProfile {
    pub kind: FaultKind,
    pub seed: u64,
}

const MALFORMED: [&str; 4] = [
    "Let us talk about something else.",
    "Hmm, I am thinking about it.",
    "That is an interesting thought!",
    "Hello there, friend.",
];

#[derive(Debug, Clone)]
pub struct FaultAgent {
    name: String,
    profile: FaultProfile,
}

impl FaultAgent {
    pub fn new(profile: FaultProfile) -> Self {
        FaultAgent { name: format!("fault:{}", profile.kind), profile }
    }

    pub fn profile(&self) -> FaultProfile {
        self.profile
    }

    fn switch_seen_before(ctx: &TutorContext<'_>) -> bool {
        let switches: Vec<_> =
            ctx.protocol.roles.values().filter_map(|p| p.navigation()).map(|n| n.switch.clone()).collect();
        let n = ctx.history.len();
        ctx.history[..n.saturating_sub(1)]
            .iter()
            .filter(|t| t.actor == Actor::User)
            .filter_map(|t| normalize_token(&t.text))
            .any(|tok| switches.contains(&tok))
    }
}

impl TutorAgent for FaultAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn respond(&self, ctx: &TutorContext<'_>) -> Result<TutorReply, AgentError> {
        let input = last_user_input(ctx.history);
        let nav = ctx.protocol.plan(ctx.state).and_then(|p| p.navigation());
        let awaiting_navigation = phase(ctx.protocol, ctx.history, ctx.state) == Phase::Navigation;
        let reply = match (self.profile.kind, nav) {
            (FaultKind::ConfirmationSeeker, Some(nav))
                if awaiting_navigation
                    && normalize_token(input).as_ref() == Some(&nav.switch)
                    && !Self::switch_seen_before(ctx) =>
            {
                let target = ctx.protocol.target(ctx.state, &nav.switch).unwrap_or(ctx.state);
                let label = ctx.protocol.label(target).unwrap_or_default();
                TutorReply { text: format!("Do you want to switch to {label}?"), next_state: ctx.state }
            }
            (FaultKind::AmbiguityMisreader, Some(nav))
                if awaiting_navigation && input.trim().eq_ignore_ascii_case("yes") =>
            {
                let next = ctx.protocol.target(ctx.state, &nav.stay).unwrap_or(ctx.state);
                TutorReply { text: next_question(ctx, next), next_state: next }
            }
            (FaultKind::CaseBrittle, Some(_))
                if awaiting_navigation
                    && transition(ctx, input).is_some()
                    && input.trim() != input.trim().to_uppercase() =>
            {
                let tokens = options(ctx.protocol, ctx.state).iter().map(|t| t.to_string()).collect::<Vec<_>>();
                TutorReply {
                    text: format!(
                        "\"{}\" is not a valid command. Please answer {}.",
                        input.trim(),
                        join_alternatives(tokens, "or")
                    ),
                    next_state: ctx.state,
                }
            }
            (FaultKind::RandomDeviator(p), _) => {
                let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ self.profile.seed);
                rng.set_stream(ctx.turn_index() as u64);
                if rng.random::<f64>() < p {
                    let text = MALFORMED[rng.random_range(0..MALFORMED.len())];
                    TutorReply { text: text.into(), next_state: ctx.state }
                } else {
                    oracle_reply(ctx)
                }
            }
            _ => oracle_reply(ctx),
        };
        Ok(reply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_parse_and_display() {
        for s in ["confirmation_seeker", "ambiguity_misreader", "case_brittle", "random:0.5"] {
            assert_eq!(s.parse::<FaultKind>().unwrap().to_string(), s);
        }
        assert!("random:1.5".parse::<FaultKind>().is_err());
        assert!("random:x".parse::<FaultKind>().is_err());
        assert!("sleepy".parse::<FaultKind>().is_err());
    }

    #[test]
    fn malformed_texts_carry_no_protocol_vocabulary() {
        for t in MALFORMED {
            let lower = t.to_lowercase();
            for w in ["easy", "hard", "more", "change", "correct", "wrong", "?"] {
                assert!(!lower.contains(w), "{t}");
            }
            assert!(!t.chars().any(|c| c.is_ascii_digit()));
        }
    }
}
