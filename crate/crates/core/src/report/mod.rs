//! Mean (SD) tables, distribution export, formality selection and the
//! on-disk run archive.

mod archive;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_rational::Ratio;
use thiserror::Error;

use crate::conformance::{fmt_2dp, fmt_decimals, ConformanceScore};
use crate::harness::{summarize, ConditionOutcome, ConditionSummary};
use crate::render::FormalityLevel;

pub use archive::{
    condition_dir, AbortRecord, ArchiveError, ArchivedCondition, ConditionDigest, ExperimentDigest, Manifest,
    RunArchive,
};

/// Placeholder for a cell with no completed runs.
pub const MISSING_CELL: &str = "-";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("more than one summary for {agent} at {level}")]
    DuplicateCondition { agent: String, level: FormalityLevel },
    #[error("{agent} at {level} has no raw scores")]
    MissingRawScores { agent: String, level: FormalityLevel },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One (agent, level) cell. `summary` is absent when every run aborted.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportCell {
    pub agent: String,
    pub level: FormalityLevel,
    pub summary: Option<ConditionSummary>,
    pub aborted: u32,
}

impl ReportCell {
    pub fn from_outcome(o: &ConditionOutcome) -> Self {
        ReportCell {
            agent: o.condition.agent.clone(),
            level: o.condition.level,
            summary: o.summary.as_ref().ok().cloned(),
            aborted: o.aborted.len() as u32,
        }
    }
}

/// Two decimals, half up, for a non-negative float.
pub fn fmt_sd(sd: f64) -> String {
    let hundredths = (sd * 100.0 + 0.5).floor() as u64;
    format!("{}.{:02}", hundredths / 100, hundredths % 100)
}

/// `"mean (sd)"` with two decimals each.
pub fn format_cell(summary: &ConditionSummary) -> String {
    format!("{} ({})", fmt_2dp(summary.mean), fmt_sd(summary.sd))
}

/// Reads a `"mean (sd)"` cell back.
pub fn parse_cell(cell: &str) -> Option<(f64, f64)> {
    let (mean, rest) = cell.trim().split_once(" (")?;
    let sd = rest.strip_suffix(')')?;
    Some((mean.parse().ok()?, sd.parse().ok()?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    /// Row order: first appearance in the input.
    pub agents: Vec<String>,
    pub cells: BTreeMap<(String, FormalityLevel), ReportCell>,
    pub footnotes: Vec<String>,
}

impl ReportTable {
    pub fn cell_text(&self, agent: &str, level: FormalityLevel) -> String {
        self.cells
            .get(&(agent.to_string(), level))
            .and_then(|c| c.summary.as_ref())
            .map(format_cell)
            .unwrap_or_else(|| MISSING_CELL.to_string())
    }

    /// Row of summaries for one agent, for formality selection.
    pub fn row(&self, agent: &str) -> BTreeMap<FormalityLevel, ConditionSummary> {
        FormalityLevel::ALL
            .into_iter()
            .filter_map(|l| {
                let s = self.cells.get(&(agent.to_string(), l))?.summary.clone()?;
                Some((l, s))
            })
            .collect()
    }

    /// Aligned plain-text grid followed by the footnotes.
    pub fn to_text(&self) -> String {
        let header: Vec<String> =
            std::iter::once("agent".to_string()).chain(FormalityLevel::ALL.iter().map(|l| l.to_string())).collect();
        let mut rows = vec![header];
        for agent in &self.agents {
            let mut row = vec![agent.clone()];
            row.extend(FormalityLevel::ALL.iter().map(|&l| self.cell_text(agent, l)));
            rows.push(row);
        }
        let width = |col: usize| rows.iter().map(|r| r[col].chars().count()).max().unwrap_or(0);
        let widths: Vec<usize> = (0..5).map(width).collect();

        let mut out = String::new();
        for row in &rows {
            let mut line = String::new();
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    line.push_str("  ");
                }
                line.push_str(cell);
                line.extend(std::iter::repeat_n(' ', widths[i] - cell.chars().count()));
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        for note in &self.footnotes {
            let _ = writeln!(out, "{note}");
        }
        out
    }

    /// `agent,level,runs,aborted,mean,sd,mean_exact`, one line per present cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("agent,level,runs,aborted,mean,sd,mean_exact\n");
        for agent in &self.agents {
            for level in FormalityLevel::ALL {
                let Some(cell) = self.cells.get(&(agent.clone(), level)) else { continue };
                let (runs, mean, sd, exact) = match &cell.summary {
                    Some(s) => (s.scores.len().to_string(), fmt_2dp(s.mean), fmt_sd(s.sd), s.mean.to_string()),
                    None => ("0".into(), String::new(), String::new(), String::new()),
                };
                let _ = writeln!(out, "{},{level},{runs},{},{mean},{sd},{exact}", csv_field(agent), cell.aborted);
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn report_table(cells: &[ReportCell]) -> Result<ReportTable, ReportError> {
    let mut table = ReportTable {
        agents: Vec::new(),
        cells: BTreeMap::new(),
        footnotes: vec!["Values show mean (SD) conformance rate.".into()],
    };
    for c in cells {
        let key = (c.agent.clone(), c.level);
        if table.cells.contains_key(&key) {
            return Err(ReportError::DuplicateCondition { agent: c.agent.clone(), level: c.level });
        }
        if !table.agents.contains(&c.agent) {
            table.agents.push(c.agent.clone());
        }
        table.cells.insert(key, c.clone());
    }
    for agent in &table.agents {
        for level in FormalityLevel::ALL {
            if let Some(c) = table.cells.get(&(agent.clone(), level)) {
                if c.aborted > 0 {
                    let plural = if c.aborted == 1 { "" } else { "s" };
                    table.footnotes.push(format!("{agent} {level}: {} aborted run{plural} excluded.", c.aborted));
                }
            }
        }
    }
    Ok(table)
}

/// Level with the highest mean; ties go to the lowest level.
pub fn select_optimal_formality(row: &BTreeMap<FormalityLevel, ConditionSummary>) -> Option<FormalityLevel> {
    let mut best: Option<(FormalityLevel, Ratio<u64>)> = None;
    for (&level, s) in row {
        if best.is_none_or(|(_, m)| s.mean > m) {
            best = Some((level, s.mean));
        }
    }
    best.map(|(l, _)| l)
}

/// `agent,level,n,min,q1,median,q3,max,mean`, four decimals, half up.
pub fn export_distributions(cells: &[ReportCell]) -> Result<String, ReportError> {
    let mut out = String::from("agent,level,n,min,q1,median,q3,max,mean\n");
    for c in cells {
        let missing = || ReportError::MissingRawScores { agent: c.agent.clone(), level: c.level };
        let s = c.summary.as_ref().ok_or_else(missing)?;
        let five = s.five_number.as_ref().filter(|_| !s.scores.is_empty()).ok_or_else(missing)?;
        let _ = write!(out, "{},{},{}", csv_field(&c.agent), c.level, s.scores.len());
        for v in five.as_array().into_iter().chain([s.mean]) {
            let _ = write!(out, ",{}", fmt_decimals(v, 4));
        }
        out.push('\n');
    }
    Ok(out)
}

fn csv_rows(source: &str, columns: usize) -> impl Iterator<Item = Result<(usize, Vec<&str>), ReportError>> {
    source.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()).map(move |(i, l)| {
        let fields: Vec<&str> = l.split(',').map(str::trim).collect();
        if fields.len() == columns {
            Ok((i + 1, fields))
        } else {
            Err(ReportError::Parse { line: i + 1, message: format!("expected {columns} columns") })
        }
    })
}

fn parse_level(line: usize, s: &str) -> Result<FormalityLevel, ReportError> {
    s.parse().map_err(|e: crate::render::ParseLevelError| ReportError::Parse { line, message: e.to_string() })
}

/// Reads `agent,level,mean,sd` rows of published cells (moments only).
pub fn load_moment_table(source: &str) -> Result<Vec<ReportCell>, ReportError> {
    csv_rows(source, 4)
        .map(|row| {
            let (line, f) = row?;
            let bad = |what: &str| ReportError::Parse { line, message: format!("bad {what}") };
            let mean_hundredths = parse_hundredths(f[2]).ok_or_else(|| bad("mean"))?;
            let sd: f64 = f[3].parse().map_err(|_| bad("sd"))?;
            Ok(ReportCell {
                agent: f[0].to_string(),
                level: parse_level(line, f[1])?,
                summary: Some(ConditionSummary::from_moments(Ratio::new(mean_hundredths, 100), sd)),
                aborted: 0,
            })
        })
        .collect()
}

fn parse_hundredths(s: &str) -> Option<u64> {
    let (int, frac) = s.split_once('.').unwrap_or((s, "0"));
    if frac.len() > 2 || frac.is_empty() {
        return None;
    }
    let frac: u64 = format!("{frac:0<2}").parse().ok()?;
    Some(int.parse::<u64>().ok()? * 100 + frac)
}

/// Reads `agent,level,correct_turns` rows, where `correct_turns` lists
/// space-separated counts out of `total_turns`, and summarizes each row.
pub fn load_raw_scores(source: &str, total_turns: u32) -> Result<Vec<ReportCell>, ReportError> {
    csv_rows(source, 3)
        .map(|row| {
            let (line, f) = row?;
            let scores = f[2]
                .split_whitespace()
                .map(|k| {
                    let correct: u32 = k
                        .parse()
                        .ok()
                        .filter(|&c| c <= total_turns)
                        .ok_or_else(|| ReportError::Parse { line, message: format!("bad count {k:?}") })?;
                    Ok(ConformanceScore {
                        correct_turns: correct,
                        total_turns,
                        first_violation: (correct < total_turns).then_some(correct + 1),
                        failure: None,
                    })
                })
                .collect::<Result<Vec<_>, ReportError>>()?;
            let summary = summarize(&scores).map_err(|e| ReportError::Parse { line, message: e.to_string() })?;
            Ok(ReportCell {
                agent: f[0].to_string(),
                level: parse_level(line, f[1])?,
                summary: Some(summary),
                aborted: 0,
            })
        })
        .collect()
}
