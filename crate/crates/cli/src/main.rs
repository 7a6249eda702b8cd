use std::path::PathBuf;
use std::process::ExitCode;

use adn_cli::{emit, parse_config, run, ConfigError, ExperimentConfig, Format, Method, Task};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adn", version, about = "One-shot coding bounds and simulations over acyclic discrete networks")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Evaluate the achievability bound.
    Bound(Common),
    /// Simulate the coding scheme and compare against the bound.
    Simulate(Common),
    /// Monte Carlo check of the rank or refinement lemma.
    Verify(Common),
    /// Single-letter rate conditions and margins.
    Rate(Common),
    /// Run the config's task over its `sweep` list.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long, value_parser = ["exact", "mc"])]
    method: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
}

fn load(verb: &Verb) -> Result<ExperimentConfig, ConfigError> {
    let (c, task) = match verb {
        Verb::Bound(c) => (c, Some(Task::Bound)),
        Verb::Simulate(c) => (c, Some(Task::Simulate)),
        Verb::Rate(c) => (c, Some(Task::Rate)),
        Verb::Verify(c) | Verb::Sweep(c) => (c, None),
    };
    let text = std::fs::read_to_string(&c.config)?;
    let mut cfg = parse_config(&text)?;
    match verb {
        Verb::Verify(_) if !matches!(cfg.task, Task::VerifyPml | Task::VerifyEprl) => {
            return Err(ConfigError::Usage("`verify` needs task verify-pml or verify-eprl in the config".into()));
        }
        Verb::Sweep(_) if cfg.sweep.is_none() => {
            return Err(ConfigError::Usage("`sweep` needs a sweep section in the config".into()));
        }
        _ => {}
    }
    if let Some(t) = task {
        if cfg.scenario.is_none() {
            return Err(ConfigError::Usage("this verb needs a scenario in the config".into()));
        }
        cfg.task = t;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = c.trials {
        cfg.trials = Some(t);
    }
    match c.method.as_deref() {
        Some("mc") => cfg.method = Method::Mc,
        Some(_) => cfg.method = Method::Exact,
        None => {}
    }
    if let Some(o) = &c.out {
        cfg.output = Some(o.clone());
    }
    match c.format.as_deref() {
        Some("json") => cfg.format = Some(Format::Json),
        Some(_) => cfg.format = Some(Format::Csv),
        None => {}
    }
    Ok(cfg)
}

fn format_for(cfg: &ExperimentConfig) -> Format {
    cfg.format.unwrap_or_else(|| match cfg.output.as_ref().and_then(|p| p.extension()) {
        Some(e) if e == "json" => Format::Json,
        _ => Format::Csv,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = load(&cli.verb).and_then(|cfg| {
        let out = run(&cfg)?;
        emit(&out.rows, format_for(&cfg), cfg.output.as_deref())?;
        Ok(out)
    });
    match outcome {
        Ok(out) => {
            for v in &out.violations {
                eprintln!("violation: {v}");
            }
            ExitCode::from(out.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("adn: {e}");
            ExitCode::from(1)
        }
    }
}
