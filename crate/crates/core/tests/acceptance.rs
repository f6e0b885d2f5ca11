//! Acceptance criteria AC1 to AC9, one PASS/FAIL line each.

mod support;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fastric_core::conformance::{
    canonical_script, fmt_2dp, ingest_annotated_trace, write_run_log, Actor, ExecutionTrace, Judge,
};
use fastric_core::harness::{
    run_experiment, run_session, summarize, AgentRegistry, ChatEndpointConfig, EndpointAgent, ExperimentCondition,
    OracleAgent, SessionContext, TutorAgent,
};
use fastric_core::protocol::{canonical_tutor_protocol, compile_protocol};
use fastric_core::render::{render_prompt, FormalityLevel};
use fastric_core::report::{load_raw_scores, report_table, select_optimal_formality, ReportCell, RunArchive};

use support::*;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn judge() -> Judge {
    Judge::new(canonical_tutor_protocol(), canonical_script()).unwrap()
}

fn ac1_golden_rendering() -> Check {
    let start = Instant::now();
    let p = canonical_tutor_protocol();
    for level in FormalityLevel::ALL {
        let rendered = render_prompt(&p, level).map_err(|e| e.to_string())?;
        let expected = fixture(&format!("prompts/{level}.txt"));
        ensure!(rendered.text == expected, "{level} differs from its fixture");
    }
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(1), "took {took:?}");
    Ok(format!("L1-L4 byte-identical in {took:?}"))
}

fn ac2_oracle_perfection() -> Check {
    let start = Instant::now();
    let conditions: Vec<ExperimentCondition> = FormalityLevel::ALL
        .iter()
        .map(|&level| ExperimentCondition { agent: "oracle".into(), level, runs: 20, seed: 7 })
        .collect();
    let outcomes =
        run_experiment(&AgentRegistry::with_builtins(), &canonical_tutor_protocol(), &canonical_script(), &conditions)
            .map_err(|e| e.to_string())?;
    for o in &outcomes {
        let s = o.summary.as_ref().map_err(|e| e.to_string())?;
        ensure!(o.runs.len() == 20, "{}: {} runs", o.condition.level, o.runs.len());
        ensure!(s.mean == Ratio::from_integer(1), "{}: mean {}", o.condition.level, s.mean);
        ensure!(s.variance == Some(Ratio::from_integer(0)), "{}: variance {:?}", o.condition.level, s.variance);
    }
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(5), "took {took:?}");
    Ok(format!("80 runs, every cell 1.00 (0.00), in {took:?}"))
}

fn ac3_turn_eleven_anchor() -> Check {
    let j = judge();
    let mut trace = oracle_trace(FormalityLevel::L1);
    trace.turns[10].text = "Do you want to switch to HARD?".into();
    let judged = j.judge(&trace).map_err(|e| e.to_string())?;
    let s = judged.score;
    ensure!(s.value() == Ratio::new(10, 21), "score {}", s.value());
    ensure!(s.first_violation == Some(11), "first violation {:?}", s.first_violation);
    let line = format!("{s} (failed turn {})", s.first_violation.unwrap());
    ensure!(line == "10/21 = 0.48 (failed turn 11)", "printed {line:?}");
    // Half-up at two places: floor((200 * 10 + 21) / (2 * 21)) hundredths.
    let hundredths = (200 * s.correct_turns + s.total_turns) / (2 * s.total_turns);
    ensure!(hundredths == 48 && fmt_2dp(s.value()) == "0.48", "rounding");

    let mut log = write_run_log(&oracle_trace(FormalityLevel::L1));
    log = log
        .lines()
        .map(|l| {
            if l.starts_with("run=reference turn=11 ") {
                format!("{l} verdict=fail failure=confirmation_seeking")
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    let annotated = ingest_annotated_trace(&log).map_err(|e| e.to_string())?;
    let s2 = j.score(&annotated).map_err(|e| e.to_string())?;
    ensure!(s2 == s, "annotated log scores {s2}");
    Ok(format!("{line}; annotated log agrees"))
}

fn ac4_fault_oracles() -> Check {
    let expected = [("confirmation_seeker", 10u32), ("ambiguity_misreader", 14), ("case_brittle", 6)];
    let mut conditions = Vec::new();
    for (i, (kind, _)) in expected.iter().enumerate() {
        for level in FormalityLevel::ALL {
            conditions.push(ExperimentCondition { agent: format!("fault:{kind}"), level, runs: 5, seed: i as u64 });
        }
    }
    let protocol = canonical_tutor_protocol();
    let script = canonical_script();
    let outcomes =
        run_experiment(&AgentRegistry::with_builtins(), &protocol, &script, &conditions).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let archive = RunArchive::write(dir.path(), &protocol, &script, &outcomes).map_err(|e| e.to_string())?;

    let references: BTreeMap<FormalityLevel, ExecutionTrace> =
        FormalityLevel::ALL.iter().map(|&l| (l, oracle_trace(l))).collect();
    let mut checked = 0;
    for c in RunArchive::open(archive.root()).and_then(|a| a.conditions()).map_err(|e| e.to_string())? {
        let want = expected
            .iter()
            .find(|(k, _)| c.manifest.agent == format!("fault:{k}"))
            .map(|(_, n)| *n)
            .ok_or("unexpected condition")?;
        ensure!(c.traces.len() == 5, "{}: {} logs", c.dir, c.traces.len());
        for t in &c.traces {
            let brute = brute_force_score(&t.turns, &references[&c.manifest.level].turns, script.len() as u32);
            ensure!(brute == (want, 21), "{} {}: brute force {brute:?}", c.dir, t.run_id);
            let judged = score_pair(&judge().score(t).map_err(|e| e.to_string())?);
            ensure!(judged == brute, "{} {}: judge {judged:?} vs brute force {brute:?}", c.dir, t.run_id);
            checked += 1;
        }
    }
    Ok(format!("{checked} persisted logs: 10/21, 14/21, 6/21 under both scorers"))
}

const JUNK: [&str; 5] = ["Let's sing a song instead!", "The answer is 5.", "ok", "", "MORE"];

/// Random oracle trace with one off-script executor turn.
fn mutated_trace(rng: &mut ChaCha8Rng) -> ExecutionTrace {
    let level = FormalityLevel::ALL[rng.random_range(0..4)];
    let mut trace = oracle_trace(level);
    let pos = 2 * rng.random_range(0..11);
    if rng.random_bool(0.5) {
        trace.turns[pos].text = JUNK[rng.random_range(0..JUNK.len())].to_string();
    } else {
        let s = trace.turns[pos].state.0;
        trace.turns[pos].state.0 = (s + rng.random_range(1..3)) % 3;
    }
    trace
}

fn edit_after(trace: &mut ExecutionTrace, violation: u32, rng: &mut ChaCha8Rng) {
    for t in trace.turns.iter_mut().filter(|t| t.index > violation) {
        match rng.random_range(0..4) {
            0 => t.text = JUNK[rng.random_range(0..JUNK.len())].to_string(),
            1 => t.state.0 = rng.random_range(0..3),
            2 => t.text = t.text.to_lowercase(),
            _ => {}
        }
    }
}

fn ac5_stop_at_first_violation() -> Check {
    let j = judge();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..1000 {
        let mut trace = mutated_trace(&mut rng);
        let before = j.score(&trace).map_err(|e| e.to_string())?;
        let v = before.first_violation.ok_or(format!("case {case}: mutation not detected"))?;
        edit_after(&mut trace, v, &mut rng);
        let after = j.score(&trace).map_err(|e| e.to_string())?;
        ensure!(before == after, "case {case}: {before} became {after}");
    }
    Ok("1000 mutated traces, scores unchanged by later edits".into())
}

fn ac6_oracle_judge_consistency() -> Check {
    let protocol = canonical_tutor_protocol();
    let fsm = compile_protocol(&protocol).map_err(|e| e.to_string())?;
    let script = canonical_script();
    let j = judge();
    let mut turns = 0;
    for level in FormalityLevel::ALL {
        let prompt = render_prompt(&protocol, level).map_err(|e| e.to_string())?.text;
        let ctx = SessionContext { protocol: &protocol, fsm: &fsm, script: &script, level, prompt: &prompt };
        for seed in 0..20 {
            let trace = run_session(&OracleAgent, &ctx, "consistency", seed).map_err(|e| e.error.to_string())?.trace;
            let judged = j.judge(&trace).map_err(|e| e.to_string())?;
            ensure!(judged.verdicts.len() == 21, "{level} seed {seed}: {} verdicts", judged.verdicts.len());
            if let Some((i, v)) = judged.verdicts.iter().enumerate().find(|(_, v)| !v.pass) {
                return Err(format!("{level} seed {seed} turn {}: {}", i + 1, v.note));
            }
            turns += judged.verdicts.len();
        }
    }
    Ok(format!("{turns} oracle turns pass"))
}

fn ac7_statistics() -> Check {
    let cells = load_raw_scores(&fixture("published_raw_scores.csv"), 21).map_err(|e| e.to_string())?;
    let chatgpt: Vec<ReportCell> = cells.into_iter().filter(|c| c.agent == "ChatGPT-5").collect();
    let expected = ["0.46", "0.63", "0.90", "0.39"];
    ensure!(chatgpt.len() == 4, "{} ChatGPT-5 rows", chatgpt.len());
    for (cell, want) in chatgpt.iter().zip(expected) {
        let scores = &cell.summary.as_ref().ok_or("missing summary")?.scores;
        let s = summarize(scores).map_err(|e| e.to_string())?;
        ensure!(fmt_2dp(s.mean) == want, "{}: mean {}", cell.level, fmt_2dp(s.mean));
        let naive = scores.iter().map(|s| s.correct_turns as f64 / 21.0).sum::<f64>() / scores.len() as f64;
        ensure!(format!("{naive:.2}") == want, "{}: float mean {naive}", cell.level);
    }
    let table = report_table(&chatgpt).map_err(|e| e.to_string())?;
    let best = select_optimal_formality(&table.row("ChatGPT-5"));
    ensure!(best == Some(FormalityLevel::L3), "optimum {best:?}");
    Ok(format!("means {} and peak at L3", expected.join(", ")))
}

fn files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn ac8_scale_and_reproducibility() -> Check {
    let agents = [
        "oracle",
        "fault:confirmation_seeker",
        "fault:ambiguity_misreader",
        "fault:case_brittle",
        "fault:random:0.05",
        "fault:random:0.2",
    ];
    let mut conditions = Vec::new();
    for agent in agents {
        for level in FormalityLevel::ALL {
            let seed = fastric_core::harness::derive_seed(2024, conditions.len() as u64);
            conditions.push(ExperimentCondition { agent: agent.into(), level, runs: 15, seed });
        }
    }
    let protocol = canonical_tutor_protocol();
    let script = canonical_script();
    let registry = AgentRegistry::with_builtins();
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    let start = Instant::now();
    let mut total = 0;
    for dir in &dirs {
        let outcomes = run_experiment(&registry, &protocol, &script, &conditions).map_err(|e| e.to_string())?;
        total = outcomes.iter().map(|o| o.runs.len() + o.aborted.len()).sum::<usize>();
        RunArchive::write(dir.path(), &protocol, &script, &outcomes).map_err(|e| e.to_string())?;
    }
    let took = start.elapsed();
    ensure!(total == 360, "{total} runs");
    ensure!(took < Duration::from_secs(10), "two sweeps took {took:?}");
    let (a, b) = (files(dirs[0].path()), files(dirs[1].path()));
    ensure!(a.len() == 24 * 16 + 3, "{} archive files", a.len());
    ensure!(a == b, "archives differ");
    Ok(format!("{total} runs per sweep, two sweeps in {took:?}, {} files byte-identical", a.len()))
}

fn stub_config(url: &str) -> ChatEndpointConfig {
    let mut c = ChatEndpointConfig::new(url, "stub-model");
    c.api_key_env = STUB_KEY_ENV.into();
    c.backoff_ms = 1;
    c.max_retries = 2;
    c.timeout_secs = 5;
    c
}

fn replay_server(level: FormalityLevel, fail_after: Option<usize>) -> StubServer {
    let texts = executor_texts(&oracle_trace(level));
    StubServer::start(move |req, n| {
        if req.authorization.as_deref() != Some(&format!("Bearer {STUB_KEY}")) {
            return (401, "{}".into());
        }
        if fail_after.is_some_and(|limit| n >= limit) {
            return (500, "{\"error\":\"down\"}".into());
        }
        match texts.get(assistant_turns(req)) {
            Some(t) => (200, completion(t)),
            None => (400, "{}".into()),
        }
    })
}

fn endpoint_registry(config: ChatEndpointConfig) -> AgentRegistry {
    let mut r = AgentRegistry::empty();
    r.register("stub", move |_| {
        let agent = EndpointAgent::new(config.clone()).map_err(|e| e.to_string())?;
        Ok(Arc::new(agent) as Arc<dyn TutorAgent>)
    });
    r
}

fn ac9_endpoint_contract() -> Check {
    let protocol = canonical_tutor_protocol();
    let script = canonical_script();
    let level = FormalityLevel::L2;
    let condition = |runs| vec![ExperimentCondition { agent: "stub".into(), level, runs, seed: 1 }];

    let live = replay_server(level, None);
    let outcome = run_experiment(&endpoint_registry(stub_config(&live.url)), &protocol, &script, &condition(1))
        .map_err(|e| e.to_string())?
        .remove(0);
    ensure!(outcome.aborted.is_empty(), "live run aborted: {}", outcome.aborted[0].error);
    let s = outcome.summary.as_ref().map_err(|e| e.to_string())?;
    ensure!(s.mean == Ratio::from_integer(1), "live mean {}", s.mean);
    let executor_turns = outcome.runs[0].trace.turns.iter().filter(|t| t.actor == Actor::Executor).count();
    ensure!(live.hits() == executor_turns, "{} requests for {executor_turns} tutor turns", live.hits());

    let down = StubServer::start(|_, _| (500, "{}".into()));
    let outcome = run_experiment(&endpoint_registry(stub_config(&down.url)), &protocol, &script, &condition(1))
        .map_err(|e| e.to_string())?
        .remove(0);
    ensure!(outcome.aborted.len() == 1 && outcome.runs.is_empty(), "persistent 500: {} aborted", outcome.aborted.len());
    ensure!(down.hits() == 3, "{} attempts with two retries", down.hits());
    let cell = ReportCell::from_outcome(&outcome);
    ensure!(cell.aborted == 1 && cell.summary.is_none(), "report cell {cell:?}");

    // One good session (11 requests), then the server goes down.
    let flaky = replay_server(level, Some(executor_turns));
    let outcome = run_experiment(&endpoint_registry(stub_config(&flaky.url)), &protocol, &script, &condition(2))
        .map_err(|e| e.to_string())?
        .remove(0);
    ensure!(
        outcome.runs.len() == 1 && outcome.aborted.len() == 1,
        "mixed: {} / {}",
        outcome.runs.len(),
        outcome.aborted.len()
    );
    let s = outcome.summary.as_ref().map_err(|e| e.to_string())?;
    ensure!(s.scores.len() == 1 && s.mean == Ratio::from_integer(1), "aborted run leaked into the mean");
    Ok("replayed session 1.00; persistent 500 aborted once and excluded from the mean".into())
}

fn main() {
    std::env::set_var(STUB_KEY_ENV, STUB_KEY);
    let checks: [Criterion; 9] = [
        ("AC1", ac1_golden_rendering),
        ("AC2", ac2_oracle_perfection),
        ("AC3", ac3_turn_eleven_anchor),
        ("AC4", ac4_fault_oracles),
        ("AC5", ac5_stop_at_first_violation),
        ("AC6", ac6_oracle_judge_consistency),
        ("AC7", ac7_statistics),
        ("AC8", ac8_scale_and_reproducibility),
        ("AC9", ac9_endpoint_contract),
    ];
    let mut failed = 0;
    for (id, check) in checks {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("{id} PASS {detail}"),
            Err(detail) => {
                failed += 1;
                println!("{id} FAIL {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
