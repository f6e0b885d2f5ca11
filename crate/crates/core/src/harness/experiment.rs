//! Runs many independent sessions per condition and summarizes them.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::session::{run_session, SessionContext};
use super::stats::{summarize, ConditionSummary, SummaryError};
use super::{derive_seed, Affinity, AgentError, AgentRegistry, RegistryError, TutorAgent};
use crate::conformance::{ConformanceScore, ExecutionTrace, Judge, ScoreError, TestScript};
use crate::protocol::ProtocolSpec;
use crate::render::{render_prompt, FormalityLevel, RenderError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentCondition {
    pub agent: String,
    pub level: FormalityLevel,
    pub runs: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunRecord {
    /// Zero-based position within the condition.
    pub index: u32,
    pub seed: u64,
    pub trace: ExecutionTrace,
    pub score: ConformanceScore,
    pub unparseable_question: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbortedRun {
    pub index: u32,
    pub seed: u64,
    pub error: AgentError,
    pub partial: ExecutionTrace,
}

#[derive(Debug, Clone)]
pub struct ConditionOutcome {
    pub condition: ExperimentCondition,
    pub runs: Vec<RunRecord>,
    pub aborted: Vec<AbortedRun>,
    /// Summary over completed runs; aborted runs are excluded.
    pub summary: Result<ConditionSummary, SummaryError>,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("condition {agent}@{level} must have at least one run")]
    NoRuns { agent: String, level: FormalityLevel },
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

/// Identifier of the run at zero-based `index`.
pub fn run_id(index: u32) -> String {
    format!("run-{:04}", index + 1)
}

enum RunResult {
    Done(RunRecord),
    Aborted(AbortedRun),
}

/// Runs every condition. Sessions execute in parallel unless the agent
/// declares single-session affinity; results keep condition and run order.
pub fn run_experiment(
    registry: &AgentRegistry,
    protocol: &ProtocolSpec,
    script: &TestScript,
    conditions: &[ExperimentCondition],
) -> Result<Vec<ConditionOutcome>, ExperimentError> {
    let judge = Judge::new(protocol.clone(), script.clone())?;
    let mut prepared: Vec<(&ExperimentCondition, Arc<dyn TutorAgent>, String)> = Vec::new();
    for c in conditions {
        if c.runs == 0 {
            return Err(ExperimentError::NoRuns { agent: c.agent.clone(), level: c.level });
        }
        let prompt = render_prompt(protocol, c.level)?.text;
        prepared.push((c, registry.create(&c.agent)?, prompt));
    }

    prepared
        .par_iter()
        .map(|(condition, agent, prompt)| {
            let ctx = SessionContext {
                protocol: judge.protocol(),
                fsm: judge.fsm(),
                script: judge.script(),
                level: condition.level,
                prompt,
            };
            let one = |index: u32| -> Result<RunResult, ScoreError> {
                let seed = derive_seed(condition.seed, index as u64);
                match run_session(agent.as_ref(), &ctx, &run_id(index), seed) {
                    Ok(record) => {
                        let score = judge.score(&record.trace)?;
                        Ok(RunResult::Done(RunRecord {
                            index,
                            seed,
                            trace: record.trace,
                            score,
                            unparseable_question: record.unparseable_question,
                        }))
                    }
                    Err(e) => Ok(RunResult::Aborted(AbortedRun { index, seed, error: e.error, partial: *e.partial })),
                }
            };
            let results: Vec<RunResult> = match agent.affinity() {
                Affinity::Concurrent => (0..condition.runs).into_par_iter().map(one).collect::<Result<_, _>>()?,
                Affinity::SingleSession => (0..condition.runs).map(one).collect::<Result<_, _>>()?,
            };
            let mut runs = Vec::new();
            let mut aborted = Vec::new();
            for r in results {
                match r {
                    RunResult::Done(r) => runs.push(r),
                    RunResult::Aborted(a) => aborted.push(a),
                }
            }
            let scores: Vec<ConformanceScore> = runs.iter().map(|r| r.score).collect();
            Ok(ConditionOutcome { condition: (*condition).clone(), runs, aborted, summary: summarize(&scores) })
        })
        .collect()
}
