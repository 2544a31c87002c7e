use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use passivity_opt_cli::builtins::{self, BUILTINS};
use passivity_opt_cli::experiment::write_artifacts;
use passivity_opt_cli::{Experiment, ExperimentError, Overrides, SCHEMA};

#[derive(Parser)]
#[command(name = "ifpsim", version, about = "Passivity-based distributed optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate, simulate and write trajectory.csv, summary.json and manifest.json.
    Run(RunArgs),
    /// Print IFP indices, gain thresholds and structural checks as JSON.
    Analyze(SourceArgs),
    ListBuiltins,
    /// Print the config and artifact schema.
    ExportSchema,
}

#[derive(Args)]
struct SourceArgs {
    /// Config file; may be repeated.
    #[arg(long)]
    config: Vec<PathBuf>,
    /// Builtin experiment name; may be repeated.
    #[arg(long)]
    builtin: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Replace the gains with one expression for every agent, e.g. "0.3 + 0.1*sin(t)".
    #[arg(long)]
    override_gain: Option<String>,
    /// Simulate even if the gains break the bound of the selected algorithm.
    #[arg(long)]
    allow_inadmissible_gain: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Output directory; several experiments go to one subdirectory each.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

struct Source {
    label: String,
    text: String,
}

impl SourceArgs {
    fn sources(&self) -> Result<Vec<Source>> {
        let mut out = Vec::new();
        for p in &self.config {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            out.push(Source { label: p.display().to_string(), text });
        }
        for name in &self.builtin {
            let Some(b) = builtins::find(name) else {
                bail!("unknown builtin `{name}`; see `ifpsim list-builtins`");
            };
            out.push(Source { label: format!("builtin:{}", b.name), text: b.source.to_string() });
        }
        if out.is_empty() {
            bail!("give --config PATH or --builtin NAME");
        }
        Ok(out)
    }

    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            dt: self.dt,
            t_end: self.t_end,
            gain: self.override_gain.clone(),
            allow_inadmissible_gain: self.allow_inadmissible_gain,
        }
    }
}

/// Exit code of one experiment: 0 ok, 2 diverged, 1 invalid or failed.
fn run_one(src: &Source, ov: &Overrides, dir: PathBuf) -> i32 {
    let result = (|| -> Result<i32, ExperimentError> {
        let exp = Experiment::from_toml(&src.text, ov.clone())?;
        let outcome = exp.run()?;
        write_artifacts(&dir, &exp, &outcome, &src.label, &src.text)?;
        let s = &outcome.summary;
        println!(
            "{}: final_gap = {:.3e}, consensus_value = {:?}, diverged = {}, lyapunov violations = {} -> {}",
            exp.config.name,
            s.final_gap,
            s.consensus_value,
            s.diverged,
            s.lyapunov.violations,
            dir.display()
        );
        Ok(outcome.exit_code())
    })();
    result.unwrap_or_else(|e| {
        eprintln!("{}: {e}", src.label);
        1
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::ListBuiltins => {
            for b in BUILTINS {
                let desc = Experiment::from_toml(b.source, Overrides::default())
                    .map(|e| e.config.description)
                    .unwrap_or_default();
                println!("{:<26} {desc}", b.name);
            }
            for (alias, full) in builtins::ALIASES {
                println!("{alias:<26} alias of {full}");
            }
            Ok(0)
        }
        Command::ExportSchema => {
            print!("{SCHEMA}");
            Ok(0)
        }
        Command::Analyze(args) => {
            let ov = args.overrides();
            let mut reports = Vec::new();
            for src in args.sources()? {
                let exp = Experiment::from_toml(&src.text, ov.clone()).with_context(|| src.label.clone())?;
                reports.push(exp.analyze());
            }
            let json = if reports.len() == 1 {
                serde_json::to_string_pretty(&reports[0])?
            } else {
                serde_json::to_string_pretty(&reports)?
            };
            println!("{json}");
            Ok(0)
        }
        Command::Run(args) => {
            let ov = args.source.overrides();
            let sources = args.source.sources()?;
            let single = sources.len() == 1;
            let codes: Vec<i32> = sources
                .par_iter()
                .map(|src| {
                    let dir = if single {
                        args.out.clone()
                    } else {
                        let name = Experiment::from_toml(&src.text, ov.clone())
                            .map(|e| e.config.name)
                            .unwrap_or_else(|_| src.label.replace(['/', ':'], "_"));
                        args.out.join(name)
                    };
                    run_one(src, &ov, dir)
                })
                .collect();
            // Validation failures outrank divergence.
            Ok(if codes.contains(&1) { 1 } else { codes.into_iter().max().unwrap_or(0) })
        }
    }
}
