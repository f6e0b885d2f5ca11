//! `fastric`: validate and render protocol files, run scripted experiments,
//! score traces and report archived results.
//!
//! Exit codes: 0 on success, 1 on usage, validation or scoring errors, 2
//! when a run was aborted by a transport failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use fastric_core::conformance::{canonical_script, ingest_annotated_trace, parse_script, Judge, TestScript};
use fastric_core::fsm::validate_fsm;
use fastric_core::harness::{derive_seed, run_experiment, AgentRegistry, ExperimentCondition};
use fastric_core::protocol::{compile_protocol, parse_protocol, ProtocolSpec};
use fastric_core::render::{render_prompt, FormalityLevel};
use fastric_core::report::{export_distributions, report_table, select_optimal_formality, ReportCell, RunArchive};

#[derive(Parser)]
#[command(name = "fastric", version, about = "Executable interaction protocols and conformance scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and compile a protocol file, reporting errors and warnings.
    Validate { file: PathBuf },
    /// Render a protocol as a prompt at one formality level.
    Render {
        file: PathBuf,
        #[arg(long)]
        level: FormalityLevel,
        /// Write to this file instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run scripted sessions for every agent and level and archive them.
    Run {
        #[arg(long)]
        protocol: PathBuf,
        /// oracle, fault:<kind> or endpoint:<config.toml>; repeatable.
        #[arg(long = "agent", required = true)]
        agents: Vec<String>,
        /// Script file; the built-in 21-turn sequence when omitted.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        runs: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Levels to run; all four when omitted. Repeatable.
        #[arg(long = "level")]
        levels: Vec<FormalityLevel>,
    },
    /// Score one run log.
    Score {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        protocol: PathBuf,
        /// Also require the verdict to match the user's answer.
        #[arg(long)]
        strict_grading: bool,
    },
    /// Rescore an archive and print the mean (SD) table.
    Report {
        #[arg(long)]
        runs_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Print the best-scoring formality level for each agent in an archive.
    Optimum {
        #[arg(long)]
        runs_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
    Quantiles,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_protocol(path: &Path) -> Result<ProtocolSpec> {
    parse_protocol(&read(path)?).with_context(|| format!("{}", path.display()))
}

fn load_script(path: Option<&Path>) -> Result<TestScript> {
    match path {
        Some(p) => parse_script(&read(p)?).with_context(|| format!("{}", p.display())),
        None => Ok(canonical_script()),
    }
}

fn validate(file: &Path) -> Result<ExitCode> {
    let protocol = load_protocol(file)?;
    let fsm = compile_protocol(&protocol).with_context(|| format!("{}", file.display()))?;
    let report = validate_fsm(&fsm);
    for w in &report.warnings {
        eprintln!("warning: {}", w.message);
    }
    println!("{}: ok ({} states, {} transitions)", protocol.name, fsm.states.len(), fsm.transitions.len());
    Ok(ExitCode::SUCCESS)
}

fn render(file: &Path, level: FormalityLevel, output: Option<&Path>) -> Result<ExitCode> {
    let prompt = render_prompt(&load_protocol(file)?, level)?;
    match output {
        Some(p) => fs::write(p, &prompt.text).with_context(|| format!("cannot write {}", p.display()))?,
        None => print!("{}", prompt.text),
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn run(
    protocol: &Path,
    agents: &[String],
    script: Option<&Path>,
    runs: u32,
    seed: u64,
    out: &Path,
    levels: &[FormalityLevel],
) -> Result<ExitCode> {
    let protocol = load_protocol(protocol)?;
    let script = load_script(script)?;
    let levels = if levels.is_empty() { FormalityLevel::ALL.to_vec() } else { levels.to_vec() };
    let mut conditions = Vec::new();
    for agent in agents {
        for &level in &levels {
            let ordinal = conditions.len() as u64;
            conditions.push(ExperimentCondition {
                agent: agent.clone(),
                level,
                runs,
                seed: derive_seed(seed, ordinal),
            });
        }
    }
    let outcomes = run_experiment(&AgentRegistry::with_builtins(), &protocol, &script, &conditions)?;
    RunArchive::write(out, &protocol, &script, &outcomes)?;

    let cells: Vec<ReportCell> = outcomes.iter().map(ReportCell::from_outcome).collect();
    print!("{}", report_table(&cells)?.to_text());
    let aborted: usize = outcomes.iter().map(|o| o.aborted.len()).sum();
    for o in &outcomes {
        for a in &o.aborted {
            eprintln!("{} {} run {}: {}", o.condition.agent, o.condition.level, a.index + 1, a.error);
        }
    }
    Ok(if aborted > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn score(trace: &Path, script: Option<&Path>, protocol: &Path, strict: bool) -> Result<ExitCode> {
    let judge = Judge::new(load_protocol(protocol)?, load_script(script)?)?.strict_grading(strict);
    let trace = ingest_annotated_trace(&read(trace)?).with_context(|| format!("{}", trace.display()))?;
    let judged = judge.judge(&trace)?;
    let s = judged.score;
    match (s.first_violation, judged.verdicts.last()) {
        (Some(turn), Some(v)) => {
            let kind = v.failure.map(|k| k.to_string()).unwrap_or_else(|| "annotated".into());
            println!("{s} (failed turn {turn}: {kind})");
            if !v.note.is_empty() {
                println!("  {}", v.note);
            }
        }
        _ if s.is_perfect() => println!("{s} (perfect)"),
        _ => println!("{s} (trace ends after turn {})", s.correct_turns),
    }
    Ok(ExitCode::SUCCESS)
}

fn report(runs_dir: &Path, format: Format) -> Result<ExitCode> {
    let cells = RunArchive::open(runs_dir)?.report_cells(false)?;
    let text = match format {
        Format::Table => report_table(&cells)?.to_text(),
        Format::Csv => report_table(&cells)?.to_csv(),
        Format::Quantiles => {
            let complete: Vec<ReportCell> = cells.into_iter().filter(|c| c.summary.is_some()).collect();
            export_distributions(&complete)?
        }
    };
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}

fn optimum(runs_dir: &Path) -> Result<ExitCode> {
    let table = report_table(&RunArchive::open(runs_dir)?.report_cells(false)?)?;
    if table.agents.is_empty() {
        bail!("{} holds no conditions", runs_dir.display());
    }
    for agent in &table.agents {
        let row = table.row(agent);
        match select_optimal_formality(&row) {
            Some(level) => println!("{agent}: {level} ({})", table.cell_text(agent, level)),
            None => println!("{agent}: no completed runs"),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // Usage errors exit with 1 so that 2 always means an aborted run.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Validate { file } => validate(file),
        Command::Render { file, level, output } => render(file, *level, output.as_deref()),
        Command::Run { protocol, agents, script, runs, seed, out, levels } => {
            run(protocol, agents, script.as_deref(), *runs, *seed, out, levels)
        }
        Command::Score { trace, script, protocol, strict_grading } => {
            score(trace, script.as_deref(), protocol, *strict_grading)
        }
        Command::Report { runs_dir, format } => report(runs_dir, *format),
        Command::Optimum { runs_dir } => optimum(runs_dir),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
