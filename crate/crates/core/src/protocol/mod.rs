//! The seven protocol elements and their compilation to an [`FsmSpec`].
//!
//! | element          | home in [`ProtocolSpec`] | machine component |
//! |------------------|--------------------------|-------------------|
//! | Final states     | `finals`                 | F                 |
//! | Agents           | `agents`                 | (prompt wording)  |
//! | States           | `states`                 | Q                 |
//! | Triggers         | `triggers`               | δ, Σ              |
//! | Roles            | `roles`                  | per-state plans   |
//! | Initial state    | `initial`                | q0                |
//! | Constraints      | `constraints`            | global invariants |

mod file;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsm::{FsmBuilder, FsmError, FsmSpec, StateId, Trigger, ValidationReport};

pub use file::{parse_protocol, render_protocol_file};

pub const DEFAULT_CORRECT_VERDICT: &str = "Correct!";
pub const DEFAULT_WRONG_VERDICT: &str = "Wrong, the answer is [X]";
/// Placeholder for the correct answer inside the wrong-answer verdict.
pub const ANSWER_PLACEHOLDER: &str = "[X]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Agents {
    pub executor: String,
    pub executor_role: String,
    pub user: String,
    pub user_role: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDecl {
    pub id: StateId,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerDecl {
    pub token: Trigger,
    pub from: StateId,
    pub to: StateId,
}

/// The two allowed verdict sentences of an evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictFormat {
    pub correct: String,
    pub wrong: String,
}

impl Default for VerdictFormat {
    fn default() -> Self {
        VerdictFormat { correct: DEFAULT_CORRECT_VERDICT.to_string(), wrong: DEFAULT_WRONG_VERDICT.to_string() }
    }
}

impl VerdictFormat {
    /// Leading word of each verdict ("Correct", "Wrong"), used by the judge.
    pub fn keywords(&self) -> [String; 2] {
        let first_word =
            |s: &str| s.split(|c: char| !c.is_alphanumeric()).find(|w| !w.is_empty()).unwrap_or_default().to_string();
        [first_word(&self.correct), first_word(&self.wrong)]
    }

    pub fn wrong_with_answer(&self, answer: i64) -> String {
        self.wrong.replace(ANSWER_PLACEHOLDER, &answer.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Navigation {
    pub stay: Trigger,
    pub switch: Trigger,
    pub stay_label: String,
    pub switch_label: String,
}

impl Navigation {
    /// The navigation question asked after every evaluation.
    pub fn prompt(&self) -> String {
        format!(
            "{} at the {} level, or {} to the {} level?",
            self.stay, self.stay_label, self.switch, self.switch_label
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoleAction {
    AskDifficultyChoice,
    AskQuestion { level: String },
    Wait,
    Evaluate(VerdictFormat),
    PromptNavigation(Navigation),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolePlan {
    pub actions: Vec<RoleAction>,
}

impl RolePlan {
    /// Plan of the initial state when a protocol file leaves it out.
    pub fn implicit_initial() -> Self {
        RolePlan { actions: vec![RoleAction::AskDifficultyChoice, RoleAction::Wait] }
    }

    pub fn question_level(&self) -> Option<&str> {
        self.actions.iter().find_map(|a| match a {
            RoleAction::AskQuestion { level } => Some(level.as_str()),
            _ => None,
        })
    }

    pub fn evaluation(&self) -> Option<&VerdictFormat> {
        self.actions.iter().find_map(|a| match a {
            RoleAction::Evaluate(v) => Some(v),
            _ => None,
        })
    }

    pub fn navigation(&self) -> Option<&Navigation> {
        self.actions.iter().find_map(|a| match a {
            RoleAction::PromptNavigation(n) => Some(n),
            _ => None,
        })
    }

    pub fn has_wait(&self) -> bool {
        self.actions.contains(&RoleAction::Wait)
    }

    /// Checks the plan-local invariants, returning a reason on failure.
    pub fn check(&self) -> Result<(), String> {
        let questions = self.actions.iter().filter(|a| matches!(a, RoleAction::AskQuestion { .. })).count();
        if questions > 1 {
            return Err("more than one ask_question action".into());
        }
        let eval = self.actions.iter().position(|a| matches!(a, RoleAction::Evaluate(_)));
        let nav = self.actions.iter().position(|a| matches!(a, RoleAction::PromptNavigation(_)));
        if let (Some(e), Some(n)) = (eval, nav) {
            if e > n {
                return Err("evaluate must precede prompt_navigation".into());
            }
        }
        Ok(())
    }

    /// Shape of the plan with level tags and labels erased; equal shapes
    /// mean two states can share one unified prompt step.
    pub(crate) fn shape(&self) -> Vec<ActionShape> {
        self.actions
            .iter()
            .map(|a| match a {
                RoleAction::AskDifficultyChoice => ActionShape::Choice,
                RoleAction::AskQuestion { .. } => ActionShape::Question,
                RoleAction::Wait => ActionShape::Wait,
                RoleAction::Evaluate(v) => ActionShape::Evaluate(v.clone()),
                RoleAction::PromptNavigation(n) => ActionShape::Navigation(n.stay.clone(), n.switch.clone()),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum ActionShape {
    Choice,
    Question,
    Wait,
    Evaluate(VerdictFormat),
    Navigation(Trigger, Trigger),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintKind {
    NeverRevealAnswer,
    StickToWorkflow,
    RepromptOnInvalid,
}

impl ConstraintKind {
    pub fn keyword(self) -> &'static str {
        match self {
            ConstraintKind::NeverRevealAnswer => "never_reveal_answer",
            ConstraintKind::StickToWorkflow => "stick_to_workflow",
            ConstraintKind::RepromptOnInvalid => "reprompt_on_invalid",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Some(match s {
            "never_reveal_answer" => ConstraintKind::NeverRevealAnswer,
            "stick_to_workflow" => ConstraintKind::StickToWorkflow,
            "reprompt_on_invalid" => ConstraintKind::RepromptOnInvalid,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintRule {
    pub kind: ConstraintKind,
    pub text: String,
}

impl ConstraintRule {
    pub fn new(kind: ConstraintKind, subject: &str, navigation_tokens: &[Trigger]) -> Self {
        let text = match kind {
            ConstraintKind::NeverRevealAnswer => {
                format!("I must never answer a {subject} problem for you unless I am correcting a wrong answer.")
            }
            ConstraintKind::StickToWorkflow => "I must stick to this workflow exactly. \
                 I do not add extra steps or commentary unless specified."
                .to_string(),
            ConstraintKind::RepromptOnInvalid => format!(
                "If you provide an invalid command (not {}), I must re-prompt you with the valid options.",
                join_alternatives(navigation_tokens.iter().map(|t| format!("\"{t}\"")), "or")
            ),
        };
        ConstraintRule { kind, text }
    }
}

/// `a`, `a and b`, `a, b and c`.
pub(crate) fn join_alternatives(items: impl IntoIterator<Item = String>, conj: &str) -> String {
    let items: Vec<String> = items.into_iter().collect();
    match items.as_slice() {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} {conj} {last}", init.join(", ")),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub name: String,
    /// Domain noun used in rendered sentences ("math").
    pub subject: String,
    pub finals: BTreeSet<StateId>,
    pub agents: Agents,
    pub states: Vec<StateDecl>,
    pub triggers: Vec<TriggerDecl>,
    pub roles: BTreeMap<StateId, RolePlan>,
    pub initial: StateId,
    pub constraints: Vec<ConstraintRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate section [{name}]")]
    DuplicateSection { line: usize, name: String },
    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { line: usize, name: String },
    #[error("line {line}: unknown action keyword {keyword:?}")]
    UnknownAction { line: usize, keyword: String },
    #[error("line {line}: reference to undeclared state {state}")]
    UndeclaredState { line: usize, state: u32 },
    #[error("missing required section [{0}]")]
    MissingSection(&'static str),
    #[error("missing [initial] state")]
    MissingInitialState,
    #[error("state {0} has no role plan")]
    MissingRolePlan(StateId),
    #[error("line {line}: final state {state} cannot have a role plan")]
    RoleForFinalState { line: usize, state: StateId },
    #[error("role plan for state {state}: {reason}")]
    InvalidRolePlan { state: StateId, reason: String },
    #[error("protocol does not compile: {0}")]
    Compile(ValidationReport),
}

impl ProtocolSpec {
    pub fn label(&self, id: StateId) -> Option<&str> {
        self.states.iter().find(|s| s.id == id).map(|s| s.label.as_str())
    }

    pub fn declares(&self, id: StateId) -> bool {
        self.states.iter().any(|s| s.id == id)
    }

    /// States other than the initial one and the finals, in declaration order.
    pub fn working_states(&self) -> impl Iterator<Item = &StateDecl> {
        self.states.iter().filter(|s| s.id != self.initial && !self.finals.contains(&s.id))
    }

    pub fn plan(&self, id: StateId) -> Option<&RolePlan> {
        self.roles.get(&id)
    }

    /// Trigger tokens leaving the initial state, in declaration order.
    pub fn choice_tokens(&self) -> Vec<Trigger> {
        let mut out: Vec<Trigger> = Vec::new();
        for t in self.triggers.iter().filter(|t| t.from == self.initial) {
            if !out.contains(&t.token) {
                out.push(t.token.clone());
            }
        }
        out
    }

    /// Stay/switch tokens across all plans, first-seen order.
    pub fn navigation_tokens(&self) -> Vec<Trigger> {
        let mut out: Vec<Trigger> = Vec::new();
        for nav in self.roles.values().filter_map(RolePlan::navigation) {
            for t in [&nav.stay, &nav.switch] {
                if !out.contains(t) {
                    out.push(t.clone());
                }
            }
        }
        out
    }

    pub fn target(&self, from: StateId, token: &Trigger) -> Option<StateId> {
        self.triggers.iter().find(|t| t.from == from && &t.token == token).map(|t| t.to)
    }

    /// Step number of each state in rendered prompts: the initial state is
    /// step 0, working states follow in declaration order.
    pub fn step_number(&self, id: StateId) -> Option<usize> {
        if id == self.initial {
            return Some(0);
        }
        self.working_states().position(|s| s.id == id).map(|i| i + 1)
    }

    pub fn has_constraint(&self, kind: ConstraintKind) -> bool {
        self.constraints.iter().any(|c| c.kind == kind)
    }

    /// Checks the cross-element invariants.
    pub fn check(&self) -> Result<(), ProtocolError> {
        if !self.declares(self.initial) {
            return Err(ProtocolError::MissingInitialState);
        }
        for t in &self.triggers {
            for s in [t.from, t.to] {
                if !self.declares(s) {
                    return Err(ProtocolError::UndeclaredState { line: 0, state: s.0 });
                }
            }
        }
        for (id, plan) in &self.roles {
            if !self.declares(*id) {
                return Err(ProtocolError::UndeclaredState { line: 0, state: id.0 });
            }
            if self.finals.contains(id) {
                return Err(ProtocolError::RoleForFinalState { line: 0, state: *id });
            }
            plan.check().map_err(|reason| ProtocolError::InvalidRolePlan { state: *id, reason })?;
            if let Some(nav) = plan.navigation() {
                for tok in [&nav.stay, &nav.switch] {
                    if self.target(*id, tok).is_none() {
                        return Err(ProtocolError::InvalidRolePlan {
                            state: *id,
                            reason: format!("navigation token {tok} has no transition out of this state"),
                        });
                    }
                }
            }
        }
        for s in self.working_states() {
            if !self.roles.contains_key(&s.id) {
                return Err(ProtocolError::MissingRolePlan(s.id));
            }
        }
        Ok(())
    }
}

pub fn compile_protocol(p: &ProtocolSpec) -> Result<FsmSpec, ProtocolError> {
    let mut builder = FsmBuilder::new().initial(p.initial.0);
    for s in &p.states {
        builder = builder.state(s.id.0, s.label.clone());
    }
    for f in &p.finals {
        builder = builder.final_state(f.0);
    }
    for t in &p.triggers {
        builder = builder.transition(t.from.0, t.token.clone(), t.to.0);
    }
    builder.build().map_err(|e| match e {
        FsmError::Invalid(report) => ProtocolError::Compile(report),
        other => ProtocolError::Syntax { line: 0, message: other.to_string() },
    })
}

/// Kindergarten math tutor: INIT branches to symmetric EASY/HARD loops
/// navigated with MORE (stay) and CHANGE (switch).
pub fn canonical_tutor_protocol() -> ProtocolSpec {
    let trig = |s: &str| Trigger::new(s).expect("static token");
    let loop_plan = |level: &str, other: &str| RolePlan {
        actions: vec![
            RoleAction::AskQuestion { level: level.into() },
            RoleAction::Wait,
            RoleAction::Evaluate(VerdictFormat::default()),
            RoleAction::PromptNavigation(Navigation {
                stay: trig("MORE"),
                switch: trig("CHANGE"),
                stay_label: level.into(),
                switch_label: other.into(),
            }),
        ],
    };
    let (init, easy, hard) = (StateId(0), StateId(1), StateId(2));
    let triggers = [
        ("EASY", init, easy),
        ("HARD", init, hard),
        ("MORE", easy, easy),
        ("CHANGE", easy, hard),
        ("MORE", hard, hard),
        ("CHANGE", hard, easy),
    ]
    .into_iter()
    .map(|(tok, from, to)| TriggerDecl { token: trig(tok), from, to })
    .collect();
    let nav_tokens = [trig("MORE"), trig("CHANGE")];
    let constraints =
        [ConstraintKind::NeverRevealAnswer, ConstraintKind::StickToWorkflow, ConstraintKind::RepromptOnInvalid]
            .into_iter()
            .map(|k| ConstraintRule::new(k, "math", &nav_tokens))
            .collect();

    ProtocolSpec {
        name: "kindergarten_tutor".into(),
        subject: "math".into(),
        finals: BTreeSet::new(),
        agents: Agents {
            executor: "I".into(),
            executor_role: "the AI tutor of kindergarten math".into(),
            user: "you".into(),
            user_role: "the kindergarten student".into(),
        },
        states: vec![
            StateDecl { id: init, label: "INIT".into() },
            StateDecl { id: easy, label: "EASY".into() },
            StateDecl { id: hard, label: "HARD".into() },
        ],
        triggers,
        roles: BTreeMap::from([
            (init, RolePlan::implicit_initial()),
            (easy, loop_plan("easy", "hard")),
            (hard, loop_plan("hard", "easy")),
        ]),
        initial: init,
        constraints,
    }
}
