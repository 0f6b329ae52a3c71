use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use minimuli::engine::{LabelMode, RunOptions, RunResult, SearchMode, Solution};
use minimuli::{compile, engine};

#[derive(Parser)]
#[command(name = "minimuli", version, about = "Symbolic interpreter for MiniMuli programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a method and print every solution.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    All,
    One,
}

#[derive(Clone, Copy, ValueEnum)]
enum Label {
    Off,
    First,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Jsonl,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Guest source file.
    file: PathBuf,
    /// Entry method without parameters, as `name` or `Class.name`.
    #[arg(long, default_value = "main")]
    entry: String,
    #[arg(long, value_enum, default_value = "all")]
    mode: Mode,
    /// Integer domain for logic variables, e.g. `1..16` or `-8..8`.
    #[arg(long, default_value = "-128..127", allow_hyphen_values = true, value_parser = parse_domain)]
    domain: (i64, i64),
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    max_steps: u64,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
    max_structeq_depth: u64,
    #[arg(long, value_enum, default_value = "off")]
    label: Label,
    /// Write the execution tree in DOT format.
    #[arg(long, value_name = "PATH")]
    tree: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

fn parse_domain(s: &str) -> Result<(i64, i64), String> {
    let (lo, hi) = s
        .split_once("..")
        .ok_or_else(|| format!("expected LO..HI, got `{s}`"))?;
    let lo: i64 = lo.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: i64 = hi.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
    if lo > hi {
        return Err(format!("empty domain {lo}..{hi}"));
    }
    Ok((lo, hi))
}

fn render_text(solutions: &[Solution]) -> String {
    let mut out = String::new();
    for (k, s) in solutions.iter().enumerate() {
        let _ = writeln!(out, "solution {}: {}", k + 1, s.outcome);
        if !s.output.is_empty() {
            out.push_str("  output:\n");
            for line in &s.output {
                let _ = writeln!(out, "    {line}");
            }
        }
        if !s.constraints.is_empty() {
            out.push_str("  constraints:\n");
            for c in &s.constraints {
                let _ = writeln!(out, "    {c}");
            }
        }
        if !s.labelings.is_empty() {
            out.push_str("  labelings:\n");
            for l in &s.labelings {
                let bindings: Vec<String> =
                    l.bindings.iter().map(|(k, v)| format!("{k}={v}")).collect();
                let _ = writeln!(out, "    [{}] {}", bindings.join(", "), l.outcome);
                for line in &l.output {
                    let _ = writeln!(out, "      {line}");
                }
            }
            if s.labelings_truncated {
                out.push_str("    ...\n");
            }
        }
    }
    out
}

fn render_jsonl(solutions: &[Solution]) -> String {
    solutions
        .iter()
        .map(|s| s.to_json_line() + "\n")
        .collect()
}

/// Exit status 2 covers unreadable input and guest compile errors.
enum Failure {
    Input(anyhow::Error),
}

fn execute(args: &RunArgs) -> Result<RunResult, Failure> {
    let source = std::fs::read_to_string(&args.file)
        .with_context(|| format!("cannot read {}", args.file.display()))
        .map_err(Failure::Input)?;
    let program = compile(&source)
        .with_context(|| format!("{}", args.file.display()))
        .map_err(Failure::Input)?;
    let options = RunOptions {
        domain: args.domain,
        max_steps: args.max_steps,
        max_structeq_depth: args.max_structeq_depth as usize,
        mode: match args.mode {
            Mode::All => SearchMode::All,
            Mode::One => SearchMode::One,
        },
        labeling: match args.label {
            Label::Off => LabelMode::Off,
            Label::First => LabelMode::First,
            Label::All => LabelMode::All,
        },
        record_tree: args.tree.is_some(),
        ..RunOptions::default()
    };
    engine::run(&program, &args.entry, &options).map_err(|e| Failure::Input(e.into()))
}

fn write_tree(args: &RunArgs, result: &RunResult) -> anyhow::Result<()> {
    if let (Some(path), Some(tree)) = (&args.tree, &result.tree) {
        std::fs::write(path, tree.to_dot())
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run(args) = cli.command;
    let result = match execute(&args) {
        Ok(r) => r,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let rendered = match args.format {
        Format::Text => render_text(&result.solutions),
        Format::Jsonl => render_jsonl(&result.solutions),
    };
    print!("{rendered}");
    if let Err(e) = write_tree(&args, &result) {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    for d in &result.diagnostics {
        eprintln!("warning: {d}");
    }
    let n = result.solutions.len();
    eprintln!(
        "{n} solution{}{}",
        if n == 1 { "" } else { "s" },
        if result.incomplete { " (search incomplete)" } else { "" }
    );
    if result.incomplete {
        ExitCode::from(3)
    } else if n == 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
