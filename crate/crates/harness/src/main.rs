use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use prefgame_core::tournament::DEFAULT_CYCLE_CAP;
use prefgame_core::{CycleOptions, TieBreak};
use prefgame_harness::config::{bundled, BUNDLED};
use prefgame_harness::report::{write_comparison_csv, write_refinement_csv, write_solutions_csv};
use prefgame_harness::{analyze_file, parse_grid, run_scenario, sweep, Axis, HarnessError, RunReport, ScenarioConfig, Status};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "prefgame", version, about = "Solve, sweep and analyse tabular preference games")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Master seed, overriding the one in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (default: the config's `output`, else `out`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ties {
    Reject,
    LowerIndexWins,
}

#[derive(Subcommand)]
enum Command {
    /// Run every solver and refinement task of a scenario.
    Solve {
        /// Scenario JSON file, or `bundled:<name>`.
        config: String,
    },
    /// Run a scenario and emit only its refinement table.
    Refine { config: String },
    /// Rerun a scenario over a grid of one parameter.
    Sweep {
        config: String,
        /// alpha, tau, kappa or n.
        #[arg(long)]
        axis: String,
        /// `;`-separated weight vectors for alpha, `,`-separated values
        /// otherwise; n also takes `a..b`.
        #[arg(long)]
        grid: String,
    },
    /// Condorcet winners and cycle statistics of a preference matrix file.
    Analyze {
        matrix: PathBuf,
        #[arg(long, value_enum, default_value_t = Ties::Reject)]
        tie_break: Ties,
        #[arg(long, default_value_t = DEFAULT_CYCLE_CAP)]
        cap: u64,
    },
}

#[derive(Serialize)]
struct StderrLine<'a> {
    status: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    component: Option<&'a str>,
    #[serde(flatten)]
    diagnostic: prefgame_harness::Diagnostic,
}

fn emit_error(component: Option<&str>, diagnostic: prefgame_harness::Diagnostic) {
    let line = StderrLine { status: "error", component, diagnostic };
    eprintln!("{}", serde_json::to_string(&line).expect("diagnostics serialize"));
}

fn load(arg: &str, seed: Option<u64>) -> Result<ScenarioConfig, HarnessError> {
    let mut cfg = match arg.strip_prefix("bundled:") {
        Some(name) => bundled(name).ok_or_else(|| {
            HarnessError::Config(format!("no bundled scenario {name:?}; available: {}", BUNDLED.join(", ")))
        })?,
        None => ScenarioConfig::load(Path::new(arg))?,
    };
    if seed.is_some() {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: Option<&ScenarioConfig>) -> Result<PathBuf, HarnessError> {
    let dir = cli
        .out_dir
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path).map(BufWriter::new).map_err(|e| HarnessError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn write_report(report: &RunReport, dir: &Path, format: Format, refine_only: bool) -> Result<Vec<PathBuf>, HarnessError> {
    let mut written = Vec::new();
    match (format, refine_only) {
        (Format::Json, false) => {
            let p = dir.join("report.json");
            write_text(&p, &report.to_json()?)?;
            written.push(p);
        }
        (Format::Json, true) => {
            let p = dir.join("refinement.json");
            let text = serde_json::to_string_pretty(&report.refinement).map_err(|e| HarnessError::parse("refinement", e))?;
            write_text(&p, &text)?;
            written.push(p);
        }
        (Format::Csv, _) => {
            let p = dir.join("refinement.csv");
            write_refinement_csv(&report.refinement, create(&p)?)?;
            written.push(p);
            if !refine_only {
                let p = dir.join("solutions.csv");
                write_solutions_csv(report, create(&p)?)?;
                written.push(p);
                let p = dir.join("comparison.csv");
                write_comparison_csv(&report.comparison, create(&p)?)?;
                written.push(p);
                for s in report.solutions.iter().filter(|s| !s.diagnostics.trace.is_empty()) {
                    let p = dir.join(format!("trace-{}.csv", s.id));
                    let mut w = csv::Writer::from_writer(create(&p)?);
                    for row in &s.diagnostics.trace {
                        w.serialize(row)?;
                    }
                    w.flush().map_err(|e| HarnessError::io(&p, e))?;
                    written.push(p);
                }
            }
        }
    }
    Ok(written)
}

fn solve(cli: &Cli, config: &str, refine_only: bool) -> Result<bool, HarnessError> {
    let cfg = load(config, cli.seed)?;
    if refine_only && cfg.refinement.is_empty() {
        return Err(HarnessError::Config("the scenario has no refinement tasks".into()));
    }
    let dir = out_dir(cli, Some(&cfg))?;
    let report = run_scenario(&cfg);
    for p in write_report(&report, &dir, cli.format, refine_only)? {
        println!("{}", p.display());
    }
    for e in &report.errors {
        emit_error(Some(&e.component), e.diagnostic.clone());
    }
    Ok(report.status == Status::Ok)
}

fn run(cli: &Cli) -> Result<bool, HarnessError> {
    match &cli.command {
        Command::Solve { config } => solve(cli, config, false),
        Command::Refine { config } => solve(cli, config, true),
        Command::Sweep { config, axis, grid } => {
            let cfg = load(config, cli.seed)?;
            let axis: Axis = axis.parse()?;
            let points = parse_grid(axis, grid)?;
            let dir = out_dir(cli, Some(&cfg))?;
            let outcome = sweep(&cfg, axis, &points)?;
            let p = match cli.format {
                Format::Csv => {
                    let p = dir.join("sweep.csv");
                    prefgame_harness::sweep::write_csv(&outcome.rows, create(&p)?)?;
                    p
                }
                Format::Json => {
                    let p = dir.join("sweep.json");
                    let text = serde_json::to_string_pretty(&outcome.rows).map_err(|e| HarnessError::parse("sweep", e))?;
                    write_text(&p, &text)?;
                    p
                }
            };
            println!("{}", p.display());
            for r in outcome.rows.iter().filter(|r| r.kind == "error") {
                emit_error(
                    Some(&format!("point:{}:{}", r.point, r.subject)),
                    prefgame_harness::Diagnostic {
                        kind: "sweep-point".into(),
                        message: r.error.clone().unwrap_or_default(),
                        line: None,
                        column: None,
                    },
                );
            }
            Ok(!outcome.failed())
        }
        Command::Analyze { matrix, tie_break, cap } => {
            let opts = CycleOptions {
                tie_break: match tie_break {
                    Ties::Reject => TieBreak::Reject,
                    Ties::LowerIndexWins => TieBreak::LowerIndexWins,
                },
                cap: *cap,
            };
            let analysis = analyze_file(matrix, opts)?;
            let dir = out_dir(cli, None)?;
            let text = serde_json::to_string_pretty(&analysis).map_err(|e| HarnessError::parse("analysis", e))?;
            match cli.format {
                Format::Json => write_text(&dir.join("analysis.json"), &text)?,
                Format::Csv => {
                    let p = dir.join("analysis.csv");
                    let mut w = csv::Writer::from_writer(create(&p)?);
                    w.write_record(["context", "condorcet_winner", "cycle_count", "truncated"])?;
                    for (x, c) in analysis.cycles.contexts.iter().enumerate() {
                        w.write_record([
                            analysis.space.contexts()[x].clone(),
                            analysis.condorcet_winners[x].clone().unwrap_or_default(),
                            c.cycle_count.to_string(),
                            c.truncated.to_string(),
                        ])?;
                    }
                    w.flush().map_err(|e| HarnessError::io(&p, e))?;
                }
            }
            println!("{text}");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        // the report was written but some component failed
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            emit_error(None, e.diagnostic());
            ExitCode::from(1)
        }
    }
}
