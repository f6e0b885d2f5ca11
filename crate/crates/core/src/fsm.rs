//! Deterministic finite-state machines `(Q, Σ, δ, q0, F)`.
//!
//! [`FsmSpec`] is plain data. [`validate_fsm`] checks the hard invariants
//! (membership, initial/final containment) and reports soft problems as
//! warnings. Determinism is structural: `transitions` is keyed by
//! `(state, trigger)`. Conflicting entries can only be expressed through
//! [`FsmBuilder`], which rejects them.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Numeric identity of a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub u32);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A canonical input token: non-empty, uppercase, no surrounding whitespace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Trigger(String);

impl Trigger {
    pub fn new(token: impl Into<String>) -> Result<Self, FsmError> {
        let token = token.into();
        let canonical = !token.is_empty()
            && token.trim() == token
            && !token.chars().any(char::is_whitespace)
            && token.chars().all(|c| !c.is_lowercase());
        if canonical {
            Ok(Trigger(token))
        } else {
            Err(FsmError::InvalidTrigger(token))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Trigger {
    type Error = FsmError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Trigger::new(value)
    }
}

impl From<Trigger> for String {
    fn from(t: Trigger) -> Self {
        t.0
    }
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FsmError {
    #[error("trigger {0:?} is not canonical (expected non-empty uppercase token)")]
    InvalidTrigger(String),
    #[error("unknown state {0}")]
    UnknownState(StateId),
    #[error("machine failed validation: {0}")]
    Invalid(ValidationReport),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IssueCode {
    UnknownState,
    UnknownTrigger,
    NondeterministicTransition,
    InitialNotInStates,
    FinalNotInStates,
    EmptyLabel,
    UnreachableState,
    DeadEndState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub code: IssueCode,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn has_error(&self, code: IssueCode) -> bool {
        self.errors.iter().any(|i| i.code == code)
    }

    pub fn has_warning(&self, code: IssueCode) -> bool {
        self.warnings.iter().any(|i| i.code == code)
    }

    fn error(&mut self, code: IssueCode, message: String) {
        self.errors.push(Issue { code, message });
    }

    fn warn(&mut self, code: IssueCode, message: String) {
        self.warnings.push(Issue { code, message });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (tag, issue) in self.errors.iter().map(|i| ("error", i)).chain(self.warnings.iter().map(|i| ("warning", i)))
        {
            if !first {
                f.write_str("; ")?;
            }
            first = false;
            write!(f, "{tag} {:?}: {}", issue.code, issue.message)?;
        }
        if first {
            f.write_str("ok")?;
        }
        Ok(())
    }
}

/// The formal machine. `states` maps ids to labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsmSpec {
    pub states: BTreeMap<StateId, String>,
    pub alphabet: BTreeSet<Trigger>,
    pub transitions: BTreeMap<(StateId, Trigger), StateId>,
    pub initial: StateId,
    pub finals: BTreeSet<StateId>,
}

impl FsmSpec {
    pub fn label(&self, id: StateId) -> Option<&str> {
        self.states.get(&id).map(String::as_str)
    }

    /// States reachable from `initial` (breadth-first).
    pub fn reachable(&self) -> BTreeSet<StateId> {
        let mut seen = BTreeSet::new();
        if !self.states.contains_key(&self.initial) {
            return seen;
        }
        let mut queue = VecDeque::from([self.initial]);
        seen.insert(self.initial);
        while let Some(q) = queue.pop_front() {
            for ((from, _), to) in &self.transitions {
                if *from == q && seen.insert(*to) {
                    queue.push_back(*to);
                }
            }
        }
        seen
    }

    /// Triggers with a defined transition out of `state`, in alphabet order.
    pub fn triggers_from(&self, state: StateId) -> impl Iterator<Item = (&Trigger, StateId)> {
        self.transitions.iter().filter(move |((from, _), _)| *from == state).map(|((_, t), to)| (t, *to))
    }
}

pub fn validate_fsm(spec: &FsmSpec) -> ValidationReport {
    let mut report = ValidationReport::default();

    for (id, label) in &spec.states {
        if label.trim().is_empty() {
            report.error(IssueCode::EmptyLabel, format!("state {id} has an empty label"));
        }
    }
    if !spec.states.contains_key(&spec.initial) {
        report.error(IssueCode::InitialNotInStates, format!("initial state {} is not declared", spec.initial));
    }
    for f in &spec.finals {
        if !spec.states.contains_key(f) {
            report.error(IssueCode::FinalNotInStates, format!("final state {f} is not declared"));
        }
    }
    for ((from, trigger), to) in &spec.transitions {
        for endpoint in [from, to] {
            if !spec.states.contains_key(endpoint) {
                report.error(
                    IssueCode::UnknownState,
                    format!("transition ({from}, {trigger}) -> {to} names undeclared state {endpoint}"),
                );
            }
        }
        if !spec.alphabet.contains(trigger) {
            report.error(
                IssueCode::UnknownTrigger,
                format!("transition ({from}, {trigger}) -> {to} uses a trigger outside the alphabet"),
            );
        }
    }

    let reachable = spec.reachable();
    for id in spec.states.keys() {
        if !reachable.contains(id) {
            report.warn(IssueCode::UnreachableState, format!("state {id} is unreachable from the initial state"));
        }
        let has_exit = spec.transitions.keys().any(|(from, _)| from == id);
        if !has_exit && !spec.finals.contains(id) {
            report.warn(IssueCode::DeadEndState, format!("state {id} has no outgoing transitions and is not final"));
        }
    }
    report
}

/// δ lookup. `Ok(None)` means δ is undefined at `(current, trigger)`.
pub fn step(spec: &FsmSpec, current: StateId, trigger: &Trigger) -> Result<Option<StateId>, FsmError> {
    if !spec.states.contains_key(&current) {
        return Err(FsmError::UnknownState(current));
    }
    Ok(spec.transitions.get(&(current, trigger.clone())).copied())
}

/// Accumulates machine parts without enforcing determinism, so that
/// conflicting transitions surface as validation errors instead of being
/// silently overwritten.
#[derive(Debug, Clone, Default)]
pub struct FsmBuilder {
    states: BTreeMap<StateId, String>,
    alphabet: BTreeSet<Trigger>,
    transitions: Vec<(StateId, Trigger, StateId)>,
    initial: Option<StateId>,
    finals: BTreeSet<StateId>,
}

impl FsmBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(mut self, id: u32, label: impl Into<String>) -> Self {
        self.states.insert(StateId(id), label.into());
        self
    }

    pub fn symbol(mut self, trigger: Trigger) -> Self {
        self.alphabet.insert(trigger);
        self
    }

    /// Adds a transition; its trigger joins the alphabet.
    pub fn transition(mut self, from: u32, trigger: Trigger, to: u32) -> Self {
        self.alphabet.insert(trigger.clone());
        self.transitions.push((StateId(from), trigger, StateId(to)));
        self
    }

    pub fn initial(mut self, id: u32) -> Self {
        self.initial = Some(StateId(id));
        self
    }

    pub fn final_state(mut self, id: u32) -> Self {
        self.finals.insert(StateId(id));
        self
    }

    fn assemble(&self) -> (FsmSpec, ValidationReport) {
        let mut report = ValidationReport::default();
        let mut transitions = BTreeMap::new();
        for (from, trigger, to) in &self.transitions {
            match transitions.insert((*from, trigger.clone()), *to) {
                Some(prev) if prev != *to => report.error(
                    IssueCode::NondeterministicTransition,
                    format!("({from}, {trigger}) maps to both {prev} and {to}"),
                ),
                _ => {}
            }
        }
        let spec = FsmSpec {
            states: self.states.clone(),
            alphabet: self.alphabet.clone(),
            transitions,
            initial: self.initial.unwrap_or(StateId(0)),
            finals: self.finals.clone(),
        };
        if self.initial.is_none() {
            report.error(IssueCode::InitialNotInStates, "no initial state given".into());
        }
        let rest = validate_fsm(&spec);
        report.errors.extend(rest.errors);
        report.warnings.extend(rest.warnings);
        (spec, report)
    }

    pub fn report(&self) -> ValidationReport {
        self.assemble().1
    }

    pub fn build(self) -> Result<FsmSpec, FsmError> {
        let (spec, report) = self.assemble();
        if report.is_ok() {
            Ok(spec)
        } else {
            Err(FsmError::Invalid(report))
        }
    }
}
