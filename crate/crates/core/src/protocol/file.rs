//! Sectioned text format for protocol files (`*.fastric`).
//!
//! ```text
//! [protocol]        name = <ident>, subject = <noun>
//! [agents]          executor / executor_role / user / user_role = <text>
//! [states]          <int> = <LABEL>
//! [initial]         <int>
//! [finals]          <int>            (section optional, may be empty)
//! [triggers]        <TOKEN>: <from> -> <to>
//! [roles.<int>]     ask_choice | ask_question level=<tag> | wait
//!                   | evaluate [format=<correct> | <wrong>]
//!                   | prompt_navigation stay=<TOKEN> switch=<TOKEN>
//!                     [stay_label=<tag>] [switch_label=<tag>]
//! [constraints]     never_reveal_answer | stick_to_workflow | reprompt_on_invalid
//! ```
//!
//! `#` starts a comment. The initial state's plan defaults to
//! `ask_choice, wait` when its section is absent.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use super::{
    Agents, ConstraintKind, ConstraintRule, Navigation, ProtocolError, ProtocolSpec, RoleAction, RolePlan, StateDecl,
    TriggerDecl, VerdictFormat,
};
use crate::fsm::{StateId, Trigger};

type Lines<'a> = Vec<(usize, &'a str)>;

struct Section<'a> {
    header_line: usize,
    body: Lines<'a>,
}

enum RawAction {
    Done(RoleAction),
    Navigation { stay: Trigger, switch: Trigger, stay_label: Option<String>, switch_label: Option<String>, line: usize },
}

fn syntax(line: usize, message: impl Into<String>) -> ProtocolError {
    ProtocolError::Syntax { line, message: message.into() }
}

fn split_sections(source: &str) -> Result<BTreeMap<String, Section<'_>>, ProtocolError> {
    let mut sections: BTreeMap<String, Section<'_>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| syntax(line_no, "unterminated section header"))?
                .trim()
                .to_string();
            let known = matches!(
                name.as_str(),
                "protocol" | "agents" | "states" | "initial" | "finals" | "triggers" | "constraints"
            ) || name.starts_with("roles.");
            if !known {
                return Err(ProtocolError::UnknownSection { line: line_no, name });
            }
            if sections.contains_key(&name) {
                return Err(ProtocolError::DuplicateSection { line: line_no, name });
            }
            sections.insert(name.clone(), Section { header_line: line_no, body: Vec::new() });
            current = Some(name);
            continue;
        }
        match &current {
            Some(name) => sections.get_mut(name).expect("inserted").body.push((line_no, line)),
            None => return Err(syntax(line_no, "content before the first section header")),
        }
    }
    Ok(sections)
}

fn parse_int(line: usize, s: &str) -> Result<u32, ProtocolError> {
    s.trim().parse().map_err(|_| syntax(line, format!("expected a state number, found {:?}", s.trim())))
}

fn parse_trigger(line: usize, s: &str) -> Result<Trigger, ProtocolError> {
    Trigger::new(s.trim()).map_err(|e| syntax(line, e.to_string()))
}

fn key_values<'a>(
    section: &Section<'a>,
    name: &str,
    keys: &[&'static str],
) -> Result<BTreeMap<&'static str, String>, ProtocolError> {
    let mut out = BTreeMap::new();
    for &(line, content) in &section.body {
        let (k, v) = content.split_once('=').ok_or_else(|| syntax(line, "expected `key = value`"))?;
        let k = k.trim();
        let key = keys
            .iter()
            .find(|known| **known == k)
            .ok_or_else(|| syntax(line, format!("unknown key {k:?} in [{name}]")))?;
        if out.insert(*key, v.trim().to_string()).is_some() {
            return Err(syntax(line, format!("duplicate key {k:?}")));
        }
    }
    for key in keys {
        if !out.contains_key(key) {
            return Err(syntax(section.header_line, format!("[{name}] is missing `{key}`")));
        }
    }
    Ok(out)
}

fn parse_action(line: usize, content: &str) -> Result<RawAction, ProtocolError> {
    let (keyword, rest) = match content.split_once(char::is_whitespace) {
        Some((k, r)) => (k, r.trim()),
        None => (content, ""),
    };
    if keyword == "evaluate" {
        if rest.is_empty() {
            return Ok(RawAction::Done(RoleAction::Evaluate(VerdictFormat::default())));
        }
        let format = rest
            .strip_prefix("format=")
            .ok_or_else(|| syntax(line, "evaluate accepts only `format=<correct> | <wrong>`"))?;
        let (correct, wrong) =
            format.split_once(" | ").ok_or_else(|| syntax(line, "verdict format must be `<correct> | <wrong>`"))?;
        return Ok(RawAction::Done(RoleAction::Evaluate(VerdictFormat {
            correct: correct.trim().to_string(),
            wrong: wrong.trim().to_string(),
        })));
    }

    let mut args = BTreeMap::new();
    for pair in rest.split_whitespace() {
        let (k, v) =
            pair.split_once('=').ok_or_else(|| syntax(line, format!("expected `key=value`, found {pair:?}")))?;
        if v.is_empty() || args.insert(k, v).is_some() {
            return Err(syntax(line, format!("bad or repeated argument {k:?}")));
        }
    }
    let allow = |names: &[&str]| -> Result<(), ProtocolError> {
        match args.keys().find(|k| !names.contains(k)) {
            Some(k) => Err(syntax(line, format!("unexpected argument {k:?} for {keyword}"))),
            None => Ok(()),
        }
    };
    let required = |name: &str| -> Result<String, ProtocolError> {
        args.get(name).map(|v| v.to_string()).ok_or_else(|| syntax(line, format!("{keyword} requires {name}=")))
    };

    let action = match keyword {
        "ask_choice" => {
            allow(&[])?;
            RoleAction::AskDifficultyChoice
        }
        "wait" => {
            allow(&[])?;
            RoleAction::Wait
        }
        "ask_question" => {
            allow(&["level"])?;
            RoleAction::AskQuestion { level: required("level")? }
        }
        "prompt_navigation" => {
            allow(&["stay", "switch", "stay_label", "switch_label"])?;
            return Ok(RawAction::Navigation {
                stay: parse_trigger(line, &required("stay")?)?,
                switch: parse_trigger(line, &required("switch")?)?,
                stay_label: args.get("stay_label").map(|s| s.to_string()),
                switch_label: args.get("switch_label").map(|s| s.to_string()),
                line,
            });
        }
        other => {
            return Err(ProtocolError::UnknownAction { line, keyword: other.to_string() });
        }
    };
    Ok(RawAction::Done(action))
}

/// Level tag a navigation prompt uses for `state`: its question level, or
/// the lowercased state label.
fn level_tag(state: StateId, states: &[StateDecl], plans: &BTreeMap<StateId, Vec<RawAction>>) -> String {
    plans
        .get(&state)
        .and_then(|actions| {
            actions.iter().find_map(|a| match a {
                RawAction::Done(RoleAction::AskQuestion { level }) => Some(level.clone()),
                _ => None,
            })
        })
        .or_else(|| states.iter().find(|s| s.id == state).map(|s| s.label.to_lowercase()))
        .unwrap_or_default()
}

fn find_target(triggers: &[TriggerDecl], from: StateId, token: &Trigger) -> Option<StateId> {
    triggers.iter().find(|t| t.from == from && &t.token == token).map(|t| t.to)
}

pub fn parse_protocol(source: &str) -> Result<ProtocolSpec, ProtocolError> {
    let sections = split_sections(source)?;
    let get = |name: &'static str| sections.get(name).ok_or(ProtocolError::MissingSection(name));

    let proto = key_values(get("protocol")?, "protocol", &["name", "subject"])?;
    let agents_kv = key_values(get("agents")?, "agents", &["executor", "executor_role", "user", "user_role"])?;
    let agents = Agents {
        executor: agents_kv["executor"].clone(),
        executor_role: agents_kv["executor_role"].clone(),
        user: agents_kv["user"].clone(),
        user_role: agents_kv["user_role"].clone(),
    };

    let mut states: Vec<StateDecl> = Vec::new();
    for &(line, content) in &get("states")?.body {
        let (id, label) = content.split_once('=').ok_or_else(|| syntax(line, "expected `<int> = <LABEL>`"))?;
        let id = StateId(parse_int(line, id)?);
        let label = label.trim();
        if label.is_empty() {
            return Err(syntax(line, "state label is empty"));
        }
        if states.iter().any(|s| s.id == id) {
            return Err(syntax(line, format!("state {id} declared twice")));
        }
        states.push(StateDecl { id, label: label.to_string() });
    }
    let check_declared = |line: usize, id: u32| -> Result<StateId, ProtocolError> {
        if states.iter().any(|s| s.id.0 == id) {
            Ok(StateId(id))
        } else {
            Err(ProtocolError::UndeclaredState { line, state: id })
        }
    };

    let initial_section = sections.get("initial").ok_or(ProtocolError::MissingInitialState)?;
    let initial = match initial_section.body.as_slice() {
        [] => return Err(ProtocolError::MissingInitialState),
        [(line, content)] => check_declared(*line, parse_int(*line, content)?)?,
        [_, (line, _), ..] => return Err(syntax(*line, "[initial] takes exactly one state")),
    };

    let mut finals = BTreeSet::new();
    if let Some(section) = sections.get("finals") {
        for &(line, content) in &section.body {
            finals.insert(check_declared(line, parse_int(line, content)?)?);
        }
    }

    let mut triggers = Vec::new();
    for &(line, content) in &get("triggers")?.body {
        let (token, edge) =
            content.split_once(':').ok_or_else(|| syntax(line, "expected `<TOKEN>: <from> -> <to>`"))?;
        let (from, to) = edge.split_once("->").ok_or_else(|| syntax(line, "expected `<from> -> <to>`"))?;
        triggers.push(TriggerDecl {
            token: parse_trigger(line, token)?,
            from: check_declared(line, parse_int(line, from)?)?,
            to: check_declared(line, parse_int(line, to)?)?,
        });
    }

    let mut raw_plans: BTreeMap<StateId, Vec<RawAction>> = BTreeMap::new();
    for (name, section) in sections.iter().filter(|(n, _)| n.starts_with("roles.")) {
        let line = section.header_line;
        let id = check_declared(line, parse_int(line, &name["roles.".len()..])?)?;
        if finals.contains(&id) {
            return Err(ProtocolError::RoleForFinalState { line, state: id });
        }
        let actions = section.body.iter().map(|&(l, c)| parse_action(l, c)).collect::<Result<Vec<_>, _>>()?;
        raw_plans.insert(id, actions);
    }

    let mut roles = BTreeMap::new();
    for (id, actions) in &raw_plans {
        let mut resolved = Vec::with_capacity(actions.len());
        for action in actions {
            resolved.push(match action {
                RawAction::Done(a) => a.clone(),
                RawAction::Navigation { stay, switch, stay_label, switch_label, line } => {
                    let target = find_target(&triggers, *id, switch).ok_or_else(|| {
                        syntax(*line, format!("switch token {switch} has no transition out of state {id}"))
                    })?;
                    RoleAction::PromptNavigation(Navigation {
                        stay: stay.clone(),
                        switch: switch.clone(),
                        stay_label: stay_label.clone().unwrap_or_else(|| level_tag(*id, &states, &raw_plans)),
                        switch_label: switch_label.clone().unwrap_or_else(|| level_tag(target, &states, &raw_plans)),
                    })
                }
            });
        }
        roles.insert(*id, RolePlan { actions: resolved });
    }
    roles.entry(initial).or_insert_with(RolePlan::implicit_initial);

    let mut spec = ProtocolSpec {
        name: proto["name"].clone(),
        subject: proto["subject"].clone(),
        finals,
        agents,
        states,
        triggers,
        roles,
        initial,
        constraints: Vec::new(),
    };

    let nav_tokens = spec.navigation_tokens();
    if let Some(section) = sections.get("constraints") {
        for &(line, content) in &section.body {
            let kind = ConstraintKind::from_keyword(content)
                .ok_or_else(|| syntax(line, format!("unknown constraint {content:?}")))?;
            spec.constraints.push(ConstraintRule::new(kind, &spec.subject, &nav_tokens));
        }
    }

    spec.check()?;
    Ok(spec)
}

/// Serializes a protocol back into the file format; the inverse of
/// [`parse_protocol`] for valid specs.
pub fn render_protocol_file(p: &ProtocolSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[protocol]\nname = {}\nsubject = {}\n", p.name, p.subject);
    let _ = writeln!(
        out,
        "[agents]\nexecutor = {}\nexecutor_role = {}\nuser = {}\nuser_role = {}\n",
        p.agents.executor, p.agents.executor_role, p.agents.user, p.agents.user_role
    );
    out.push_str("[states]\n");
    for s in &p.states {
        let _ = writeln!(out, "{} = {}", s.id, s.label);
    }
    let _ = writeln!(out, "\n[initial]\n{}\n", p.initial);
    out.push_str("[finals]\n");
    for f in &p.finals {
        let _ = writeln!(out, "{f}");
    }
    out.push_str("\n[triggers]\n");
    for t in &p.triggers {
        let _ = writeln!(out, "{}: {} -> {}", t.token, t.from, t.to);
    }

    let level_of = |id: StateId| {
        p.plan(id)
            .and_then(RolePlan::question_level)
            .map(str::to_string)
            .or_else(|| p.label(id).map(str::to_lowercase))
            .unwrap_or_default()
    };
    for (id, plan) in &p.roles {
        if *id == p.initial && *plan == RolePlan::implicit_initial() {
            continue;
        }
        let _ = writeln!(out, "\n[roles.{id}]");
        for action in &plan.actions {
            match action {
                RoleAction::AskDifficultyChoice => out.push_str("ask_choice\n"),
                RoleAction::Wait => out.push_str("wait\n"),
                RoleAction::AskQuestion { level } => {
                    let _ = writeln!(out, "ask_question level={level}");
                }
                RoleAction::Evaluate(v) if *v == VerdictFormat::default() => out.push_str("evaluate\n"),
                RoleAction::Evaluate(v) => {
                    let _ = writeln!(out, "evaluate format={} | {}", v.correct, v.wrong);
                }
                RoleAction::PromptNavigation(n) => {
                    let _ = write!(out, "prompt_navigation stay={} switch={}", n.stay, n.switch);
                    if n.stay_label != level_of(*id) {
                        let _ = write!(out, " stay_label={}", n.stay_label);
                    }
                    let target = p.target(*id, &n.switch);
                    if target.map(level_of).as_deref() != Some(n.switch_label.as_str()) {
                        let _ = write!(out, " switch_label={}", n.switch_label);
                    }
                    out.push('\n');
                }
            }
        }
    }

    out.push_str("\n[constraints]\n");
    for c in &p.constraints {
        let _ = writeln!(out, "{}", c.kind.keyword());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::canonical_tutor_protocol;

    const SAMPLE: &str = include_str!("../../fixtures/kindergarten.fastric");

    #[test]
    fn sample_file_is_the_canonical_protocol() {
        let p = parse_protocol(SAMPLE).unwrap();
        assert_eq!(p.states.len(), 3);
        assert_eq!(p.triggers.len(), 6);
        assert_eq!(p.constraints.len(), 3);
        assert_eq!(p, canonical_tutor_protocol());
    }

    #[test]
    fn canonical_round_trips() {
        let p = canonical_tutor_protocol();
        assert_eq!(parse_protocol(&render_protocol_file(&p)).unwrap(), p);
    }

    #[test]
    fn missing_initial_section() {
        let src = SAMPLE.replace("[initial]\n0\n", "");
        assert_eq!(parse_protocol(&src), Err(ProtocolError::MissingInitialState));
    }

    #[test]
    fn dangling_trigger_target() {
        let src = SAMPLE.replace("MORE: 1 -> 1", "MORE: 1 -> 9");
        match parse_protocol(&src) {
            Err(ProtocolError::UndeclaredState { state: 9, line }) => assert!(line > 0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_section_reports_line() {
        let src = format!("{SAMPLE}\n[states]\n3 = EXTRA\n");
        assert!(matches!(
            parse_protocol(&src),
            Err(ProtocolError::DuplicateSection { ref name, .. }) if name == "states"
        ));
    }

    #[test]
    fn unknown_action_keyword() {
        let src = SAMPLE.replacen("wait\n", "nap\n", 1);
        assert!(matches!(
            parse_protocol(&src),
            Err(ProtocolError::UnknownAction { ref keyword, .. }) if keyword == "nap"
        ));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let src = SAMPLE.replace("CHANGE: 2 -> 1", "CHANGE 2 -> 1");
        let line = SAMPLE.lines().position(|l| l == "CHANGE: 2 -> 1").unwrap() + 1;
        assert_eq!(
            parse_protocol(&src),
            Err(ProtocolError::Syntax { line, message: "expected `<TOKEN>: <from> -> <to>`".into() })
        );
    }

    #[test]
    fn empty_finals_and_missing_finals_are_equivalent() {
        let without = SAMPLE.replace("[finals]", "");
        assert_eq!(parse_protocol(&without).unwrap().finals, BTreeSet::new());
    }

    #[test]
    fn working_state_needs_a_plan() {
        let cut = SAMPLE.find("[roles.2]").unwrap();
        let end = SAMPLE[cut..].find("\n\n").unwrap() + cut;
        let src = format!("{}{}", &SAMPLE[..cut], &SAMPLE[end..]);
        assert_eq!(parse_protocol(&src), Err(ProtocolError::MissingRolePlan(StateId(2))));
    }

    #[test]
    fn final_state_plans_are_rejected() {
        let src = format!("{}\n", SAMPLE.replace("[finals]", "[finals]\n3").replace("2 = HARD", "2 = HARD\n3 = DONE"))
            + "[roles.3]\nwait\n";
        assert!(matches!(parse_protocol(&src), Err(ProtocolError::RoleForFinalState { state: StateId(3), .. })));
    }

    #[test]
    fn custom_verdict_format_and_labels_survive() {
        let src = SAMPLE.replacen("evaluate\n", "evaluate format=Yes! | No, it is [X]\n", 1).replacen(
            "prompt_navigation stay=MORE switch=CHANGE\n",
            "prompt_navigation stay=MORE switch=CHANGE stay_label=baby switch_label=big\n",
            1,
        );
        let p = parse_protocol(&src).unwrap();
        let plan = p.plan(StateId(1)).unwrap();
        assert_eq!(plan.evaluation().unwrap().wrong, "No, it is [X]");
        assert_eq!(plan.navigation().unwrap().switch_label, "big");
        assert_eq!(parse_protocol(&render_protocol_file(&p)).unwrap(), p);
    }
}
