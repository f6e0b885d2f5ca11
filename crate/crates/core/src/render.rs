//! Rendering a protocol as a natural-language prompt at one of four
//! formality levels.
//!
//! * L1: unified working states, condensed actions.
//! * L2: unified states, prescribed verdict format, explicit stay/change rule.
//! * L3: one block per working state with jump sentences, numbered sub-steps.
//! * L4: L3 plus wait statements, `MUST` imperatives and a Critical Rules
//!   section rendered from the constraints.
//!
//! L1 and L2 describe every working state in one step, so they require the
//! working states to share a plan shape.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsm::{StateId, Trigger};
use crate::protocol::{join_alternatives, ProtocolSpec, RoleAction, RolePlan};

pub const BEGIN_MARKER: &str = "===== INSTRUCTION BEGINS =====";
pub const END_MARKER: &str = "===== INSTRUCTION ENDS =====";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FormalityLevel {
    L1,
    L2,
    L3,
    L4,
}

impl FormalityLevel {
    pub const ALL: [FormalityLevel; 4] = [Self::L1, Self::L2, Self::L3, Self::L4];

    fn separated(self) -> bool {
        self >= Self::L3
    }
}

impl fmt::Display for FormalityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::L1 => "L1",
            Self::L2 => "L2",
            Self::L3 => "L3",
            Self::L4 => "L4",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown formality level {0:?} (expected L1, L2, L3 or L4)")]
pub struct ParseLevelError(pub String);

impl FromStr for FormalityLevel {
    type Err = ParseLevelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "L1" | "1" => Ok(Self::L1),
            "L2" | "2" => Ok(Self::L2),
            "L3" | "3" => Ok(Self::L3),
            "L4" | "4" => Ok(Self::L4),
            _ => Err(ParseLevelError(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("{level} unifies all working states, but states {a} and {b} have different role plans")]
    AsymmetricStates { level: FormalityLevel, a: StateId, b: StateId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub level: FormalityLevel,
    /// Whitespace-delimited word count.
    pub token_estimate: usize,
}

/// Structural counts extracted from a rendered prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub separated_blocks: usize,
    pub numbered_substeps: usize,
    pub waits: usize,
    pub imperatives: usize,
    pub critical_rules: bool,
}

struct Block {
    heading: String,
    preamble: Option<String>,
    items: Vec<String>,
}

impl Block {
    fn write(&self, out: &mut String) {
        out.push_str(&self.heading);
        out.push('\n');
        if let Some(p) = &self.preamble {
            out.push_str(p);
            out.push('\n');
        }
        for (i, item) in self.items.iter().enumerate() {
            out.push_str(&format!("{}. {item}\n", i + 1));
        }
    }
}

fn quoted_alternatives(tokens: &[Trigger], conj: &str) -> String {
    join_alternatives(tokens.iter().map(|t| t.to_string()), conj)
}

fn step_title(p: &ProtocolSpec, id: StateId) -> String {
    let n = p.step_number(id).unwrap_or(0);
    match p.label(id) {
        Some(label) if id != p.initial => format!("Step {n}: {label} problems"),
        _ => format!("Step {n}"),
    }
}

fn initial_block(p: &ProtocolSpec, level: FormalityLevel) -> Block {
    let choices = p.choice_tokens();
    let plan = p.plan(p.initial).cloned().unwrap_or_else(RolePlan::implicit_initial);
    let mut items = Vec::new();
    for action in &plan.actions {
        match action {
            RoleAction::AskDifficultyChoice => items
                .push(format!("I will ask you to choose between {} problems.", quoted_alternatives(&choices, "and"))),
            RoleAction::Wait if matches!(level, FormalityLevel::L2 | FormalityLevel::L4) => {
                items.push("I will wait for your answer.".into())
            }
            _ => {}
        }
    }
    match level {
        FormalityLevel::L1 => {}
        FormalityLevel::L2 => {
            if p.working_states().next().is_some() {
                items.push("I will proceed to Step 1.".into());
            }
        }
        FormalityLevel::L3 | FormalityLevel::L4 => {
            let jumps: Vec<String> = choices
                .iter()
                .filter_map(|tok| {
                    let target = p.target(p.initial, tok)?;
                    Some(format!("if you choose {tok}, I will jump to Step {}", p.step_number(target)?))
                })
                .collect();
            if !jumps.is_empty() {
                let mut sentence = jumps.join("; ");
                sentence[..1].make_ascii_uppercase();
                items.push(format!("{sentence}."));
            }
        }
    }
    Block {
        heading: "## Step 0".into(),
        preamble: (level > FormalityLevel::L1).then(|| "I will start with this step.".into()),
        items,
    }
}

fn verdict_sentence(plan: &RolePlan) -> Option<String> {
    plan.evaluation()
        .map(|v| format!("I will evaluate the answer by saying ONLY \"{}\" OR \"{}\".", v.correct, v.wrong))
}

fn unified_block(p: &ProtocolSpec, plan: &RolePlan, level: FormalityLevel) -> Block {
    let evaluated = plan.evaluation().is_some();
    let mut items = Vec::new();
    for action in &plan.actions {
        match (action, level) {
            (RoleAction::AskQuestion { .. }, FormalityLevel::L1) => items
                .push(format!("I will first ask ONE {} question based on your choice of difficulty level.", p.subject)),
            (RoleAction::AskQuestion { .. }, _) => {
                items.push(format!("I will ask ONE {} question based on your choice of difficulty level.", p.subject))
            }
            (RoleAction::Evaluate(_), FormalityLevel::L2) => {
                items.extend(verdict_sentence(plan));
            }
            (RoleAction::PromptNavigation(nav), FormalityLevel::L1) => items.push(format!(
                "After you answer the question, I will then ask you: \"{} at the same level, or {} difficulty level?\"",
                nav.stay, nav.switch
            )),
            (RoleAction::PromptNavigation(nav), _) => {
                let lead = if evaluated { "After evaluating" } else { "After you answer" };
                items.push(format!(
                    "{lead}, I must ask: \"{} at the same level, or {} difficulty level?\".",
                    nav.stay, nav.switch
                ));
                items.push(format!(
                    "If your command is \"{}\", I will stay at the same difficulty level; \
                     if your command is \"{}\", I will change the difficulty level.",
                    nav.stay, nav.switch
                ));
            }
            _ => {}
        }
    }
    Block {
        heading: "## Step 1".into(),
        preamble: (level == FormalityLevel::L2).then(|| "I will now enter a loop based on your choice.".into()),
        items,
    }
}

fn move_clause(p: &ProtocolSpec, from: StateId, tok: &Trigger) -> String {
    match p.target(from, tok) {
        Some(to) if to == from => "I will stay in this step".into(),
        Some(to) => format!("I will jump to {}", step_title(p, to)),
        None => "I will stay in this step".into(),
    }
}

fn separated_block(p: &ProtocolSpec, id: StateId, plan: &RolePlan, level: FormalityLevel) -> Block {
    let evaluated = plan.evaluation().is_some();
    let mut items = Vec::new();
    for action in &plan.actions {
        match action {
            RoleAction::AskDifficultyChoice => items.push(format!(
                "I will ask you to choose between {} problems.",
                quoted_alternatives(&p.choice_tokens(), "and")
            )),
            RoleAction::AskQuestion { level: tag } => {
                items.push(format!("I will ask ONE {tag} {} question.", p.subject))
            }
            RoleAction::Wait if level == FormalityLevel::L4 => items.push("I wait for your answer.".into()),
            RoleAction::Wait => {}
            RoleAction::Evaluate(_) => items.extend(verdict_sentence(plan)),
            RoleAction::PromptNavigation(nav) => {
                let lead = if evaluated { "After evaluating" } else { "After you answer" };
                items.push(if level == FormalityLevel::L4 {
                    format!("{lead}, I MUST ask the following question exactly: \"{}\"", nav.prompt())
                } else {
                    format!("{lead}, I must ask: \"{}\".", nav.prompt())
                });
                items.push(format!(
                    "If your command is \"{}\", {}; if your command is \"{}\", {}.",
                    nav.stay,
                    move_clause(p, id, &nav.stay),
                    nav.switch,
                    move_clause(p, id, &nav.switch)
                ));
            }
        }
    }
    Block { heading: format!("## {}", step_title(p, id)), preamble: None, items }
}

pub fn render_prompt(p: &ProtocolSpec, level: FormalityLevel) -> Result<RenderedPrompt, RenderError> {
    let mut blocks = vec![initial_block(p, level)];
    let working: Vec<_> = p.working_states().filter_map(|s| p.plan(s.id).map(|plan| (s.id, plan))).collect();

    if level.separated() {
        for (id, plan) in &working {
            blocks.push(separated_block(p, *id, plan, level));
        }
    } else if let Some((first_id, first)) = working.first() {
        let shape = first.shape();
        if let Some((other, _)) = working.iter().find(|(_, plan)| plan.shape() != shape) {
            return Err(RenderError::AsymmetricStates { level, a: *first_id, b: *other });
        }
        blocks.push(unified_block(p, first, level));
    }
    if level == FormalityLevel::L4 && !p.constraints.is_empty() {
        blocks.push(Block {
            heading: "## Critical Rules".into(),
            preamble: None,
            items: p.constraints.iter().map(|c| c.text.clone()).collect(),
        });
    }

    let mut text = format!(
        "{BEGIN_MARKER}\nNote: \"{}\" refers to {}; \"{}\" refers to {}.\n",
        p.agents.executor, p.agents.executor_role, p.agents.user, p.agents.user_role
    );
    for block in &blocks {
        text.push('\n');
        block.write(&mut text);
    }
    text.push_str(END_MARKER);
    text.push('\n');

    let token_estimate = text.split_whitespace().count();
    Ok(RenderedPrompt { text, level, token_estimate })
}

pub fn formality_features(r: &RenderedPrompt) -> FeatureVector {
    let mut f = FeatureVector::default();
    for line in r.text.lines() {
        if let Some(rest) = line.strip_prefix("## Step ") {
            let numbered = rest.split(':').next().is_some_and(|n| n.parse::<u32>().is_ok());
            if numbered && rest.contains(':') {
                f.separated_blocks += 1;
            }
        }
        if line == "## Critical Rules" {
            f.critical_rules = true;
        }
        let digits = line.chars().take_while(char::is_ascii_digit).count();
        if digits > 0 && line[digits..].starts_with(". ") {
            f.numbered_substeps += 1;
        }
        if line.to_lowercase().contains("wait for your answer") {
            f.waits += 1;
        }
        f.imperatives += line.split(|c: char| !c.is_alphanumeric()).filter(|w| *w == "MUST" || *w == "ONLY").count();
    }
    f
}
