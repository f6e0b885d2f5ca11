//! Directory layout for an experiment:
//!
//! ```text
//! <root>/protocol.fastric
//! <root>/test.script
//! <root>/summary.json
//! <root>/conditions/<agent>__<level>/manifest.json
//! <root>/conditions/<agent>__<level>/run-0001.log
//! <root>/conditions/<agent>__<level>/run-0007.aborted.log
//! ```
//!
//! Nothing time-dependent is written, so the same experiment always yields
//! the same bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{fmt_sd, ReportCell};
use crate::conformance::{
    fmt_2dp, ingest_annotated_trace, parse_script, render_script, write_run_log, ExecutionTrace, Judge, RunLogError,
    ScoreError, ScriptError, TestScript,
};
use crate::harness::{run_id, summarize, ConditionOutcome, ConditionSummary};
use crate::protocol::{parse_protocol, render_protocol_file, ProtocolError, ProtocolSpec};
use crate::render::FormalityLevel;

const PROTOCOL_FILE: &str = "protocol.fastric";
const SCRIPT_FILE: &str = "test.script";
const SUMMARY_FILE: &str = "summary.json";
const MANIFEST_FILE: &str = "manifest.json";
const CONDITIONS_DIR: &str = "conditions";

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    RunLog { path: PathBuf, source: RunLogError },
    #[error("{path}: {source}")]
    Protocol { path: PathBuf, source: ProtocolError },
    #[error("{path}: {source}")]
    Script { path: PathBuf, source: ScriptError },
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("{0}")]
    Layout(String),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ArchiveError + '_ {
    move |source| ArchiveError::Io { path: path.to_path_buf(), source }
}

fn write(path: &Path, contents: &str) -> Result<(), ArchiveError> {
    fs::write(path, contents).map_err(io(path))
}

fn read(path: &Path) -> Result<String, ArchiveError> {
    fs::read_to_string(path).map_err(io(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ArchiveError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|source| ArchiveError::Json { path: path.to_path_buf(), source })?;
    text.push('\n');
    write(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ArchiveError> {
    serde_json::from_str(&read(path)?).map_err(|source| ArchiveError::Json { path: path.to_path_buf(), source })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbortRecord {
    pub index: u32,
    pub seed: u64,
    pub error: String,
}

/// Per-condition record: enough to regenerate every log of a simulated agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub agent: String,
    pub level: FormalityLevel,
    pub seed: u64,
    pub runs: u32,
    pub completed: u32,
    pub aborted: Vec<AbortRecord>,
    pub unparseable_question_runs: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionDigest {
    pub dir: String,
    pub agent: String,
    pub level: FormalityLevel,
    pub seed: u64,
    pub runs: u32,
    pub completed: u32,
    pub aborted: u32,
    /// Exact mean as `numerator/denominator`.
    pub mean: Option<String>,
    pub mean_2dp: Option<String>,
    /// Exact sample variance as `numerator/denominator`.
    pub variance: Option<String>,
    pub sd: Option<f64>,
    pub sd_2dp: Option<String>,
    /// min, q1, median, q3, max as exact rationals.
    pub five_number: Option<[String; 5]>,
}

impl ConditionDigest {
    fn new(dir: &str, m: &Manifest, summary: Option<&ConditionSummary>) -> Self {
        ConditionDigest {
            dir: dir.to_string(),
            agent: m.agent.clone(),
            level: m.level,
            seed: m.seed,
            runs: m.runs,
            completed: m.completed,
            aborted: m.aborted.len() as u32,
            mean: summary.map(|s| s.mean.to_string()),
            mean_2dp: summary.map(|s| fmt_2dp(s.mean)),
            variance: summary.and_then(|s| s.variance).map(|v| v.to_string()),
            sd: summary.map(|s| s.sd),
            sd_2dp: summary.map(|s| fmt_sd(s.sd)),
            five_number: summary.and_then(|s| s.five_number).map(|f| f.as_array().map(|v| v.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDigest {
    pub protocol: String,
    pub script_turns: usize,
    pub conditions: Vec<ConditionDigest>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchivedCondition {
    pub dir: String,
    pub manifest: Manifest,
    /// Completed runs in run order.
    pub traces: Vec<ExecutionTrace>,
}

/// Directory name for a condition: the agent with path-unsafe characters
/// replaced, then the level.
pub fn condition_dir(agent: &str, level: FormalityLevel) -> String {
    let slug: String = agent
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    format!("{slug}__{level}")
}

#[derive(Debug, Clone)]
pub struct RunArchive {
    root: PathBuf,
}

impl RunArchive {
    /// Writes a complete archive. An existing archive at `root` is replaced;
    /// any other non-empty directory is refused.
    pub fn write(
        root: &Path,
        protocol: &ProtocolSpec,
        script: &TestScript,
        outcomes: &[ConditionOutcome],
    ) -> Result<RunArchive, ArchiveError> {
        if root.exists() {
            let non_empty = fs::read_dir(root).map_err(io(root))?.next().is_some();
            if non_empty && !root.join(SUMMARY_FILE).exists() {
                return Err(ArchiveError::Layout(format!("{} is not empty and is not an archive", root.display())));
            }
            let conditions = root.join(CONDITIONS_DIR);
            if conditions.exists() {
                fs::remove_dir_all(&conditions).map_err(io(&conditions))?;
            }
        }
        let conditions = root.join(CONDITIONS_DIR);
        fs::create_dir_all(&conditions).map_err(io(&conditions))?;
        write(&root.join(PROTOCOL_FILE), &render_protocol_file(protocol))?;
        write(&root.join(SCRIPT_FILE), &render_script(script))?;

        let mut digests = Vec::new();
        for o in outcomes {
            let name = condition_dir(&o.condition.agent, o.condition.level);
            let dir = conditions.join(&name);
            if dir.exists() {
                return Err(ArchiveError::Layout(format!("two conditions map to {name}")));
            }
            fs::create_dir(&dir).map_err(io(&dir))?;
            for r in &o.runs {
                write(&dir.join(format!("{}.log", run_id(r.index))), &write_run_log(&r.trace))?;
            }
            for a in &o.aborted {
                write(&dir.join(format!("{}.aborted.log", run_id(a.index))), &write_run_log(&a.partial))?;
            }
            let manifest = Manifest {
                agent: o.condition.agent.clone(),
                level: o.condition.level,
                seed: o.condition.seed,
                runs: o.condition.runs,
                completed: o.runs.len() as u32,
                aborted: o
                    .aborted
                    .iter()
                    .map(|a| AbortRecord { index: a.index, seed: a.seed, error: a.error.to_string() })
                    .collect(),
                unparseable_question_runs: o.runs.iter().filter(|r| r.unparseable_question).map(|r| r.index).collect(),
            };
            write_json(&dir.join(MANIFEST_FILE), &manifest)?;
            digests.push(ConditionDigest::new(&name, &manifest, o.summary.as_ref().ok()));
        }
        let digest =
            ExperimentDigest { protocol: protocol.name.clone(), script_turns: script.len(), conditions: digests };
        write_json(&root.join(SUMMARY_FILE), &digest)?;
        Ok(RunArchive { root: root.to_path_buf() })
    }

    pub fn open(root: &Path) -> Result<RunArchive, ArchiveError> {
        if !root.join(SUMMARY_FILE).is_file() {
            return Err(ArchiveError::Layout(format!("{} has no {SUMMARY_FILE}", root.display())));
        }
        Ok(RunArchive { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn digest(&self) -> Result<ExperimentDigest, ArchiveError> {
        read_json(&self.root.join(SUMMARY_FILE))
    }

    pub fn protocol(&self) -> Result<ProtocolSpec, ArchiveError> {
        let path = self.root.join(PROTOCOL_FILE);
        parse_protocol(&read(&path)?).map_err(|source| ArchiveError::Protocol { path, source })
    }

    pub fn script(&self) -> Result<TestScript, ArchiveError> {
        let path = self.root.join(SCRIPT_FILE);
        parse_script(&read(&path)?).map_err(|source| ArchiveError::Script { path, source })
    }

    /// Conditions in summary order with their completed traces.
    pub fn conditions(&self) -> Result<Vec<ArchivedCondition>, ArchiveError> {
        self.digest()?
            .conditions
            .into_iter()
            .map(|d| {
                let dir = self.root.join(CONDITIONS_DIR).join(&d.dir);
                let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
                let mut logs: Vec<PathBuf> = fs::read_dir(&dir)
                    .map_err(io(&dir))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| {
                        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                        name.ends_with(".log") && !name.ends_with(".aborted.log")
                    })
                    .collect();
                logs.sort();
                let traces = logs
                    .iter()
                    .map(|p| {
                        ingest_annotated_trace(&read(p)?)
                            .map_err(|source| ArchiveError::RunLog { path: p.clone(), source })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if traces.len() as u32 != manifest.completed {
                    return Err(ArchiveError::Layout(format!(
                        "{}: manifest lists {} completed runs, found {} logs",
                        d.dir,
                        manifest.completed,
                        traces.len()
                    )));
                }
                Ok(ArchivedCondition { dir: d.dir, manifest, traces })
            })
            .collect()
    }

    /// Scores every archived log again under the archived protocol and script.
    pub fn rescore(
        &self,
        strict_grading: bool,
    ) -> Result<Vec<(ArchivedCondition, Option<ConditionSummary>)>, ArchiveError> {
        let judge = Judge::new(self.protocol()?, self.script()?)?.strict_grading(strict_grading);
        self.conditions()?
            .into_iter()
            .map(|c| {
                let scores = c.traces.iter().map(|t| judge.score(t)).collect::<Result<Vec<_>, _>>()?;
                let summary = summarize(&scores).ok();
                Ok((c, summary))
            })
            .collect()
    }

    /// The summary document recomputed from the logs.
    pub fn rescored_digest(&self) -> Result<ExperimentDigest, ArchiveError> {
        let protocol = self.protocol()?;
        let script_turns = self.script()?.len();
        let conditions =
            self.rescore(false)?.iter().map(|(c, s)| ConditionDigest::new(&c.dir, &c.manifest, s.as_ref())).collect();
        Ok(ExperimentDigest { protocol: protocol.name, script_turns, conditions })
    }

    /// Report cells from rescored logs.
    pub fn report_cells(&self, strict_grading: bool) -> Result<Vec<ReportCell>, ArchiveError> {
        Ok(self
            .rescore(strict_grading)?
            .into_iter()
            .map(|(c, summary)| ReportCell {
                agent: c.manifest.agent,
                level: c.manifest.level,
                summary,
                aborted: c.manifest.aborted.len() as u32,
            })
            .collect())
    }
}
