use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use geoflow_core::harness::{configure_threads_from_env, emit_report, Format};
use geoflow_core::{run_experiment, Error, ExperimentConfig};

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RECORDED_ERRORS: u8 = 3;

/// Diffusions on manifolds with time-dependent metrics.
#[derive(Parser, Debug)]
#[command(name = "geoflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample horizontal paths and summarize their terminal law.
    Simulate(RunArgs),
    /// Estimate a semigroup gradient with a derivative formula.
    Gradient(RunArgs),
    /// Run a coupling and bound the Wasserstein distance.
    Couple(RunArgs),
    /// Check curvature inequalities by Monte Carlo.
    Verify(RunArgs),
    /// Recover curvature quantities from short-time asymptotics.
    Recover(RunArgs),
    /// Evaluate non-explosion hypotheses and the volume growth integral.
    Nonexplosion(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Replaces `mc.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; without it the JSON report goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma separated list from json, csv, svg.
    #[arg(long, value_delimiter = ',')]
    format: Option<Vec<Format>>,
}

impl Command {
    fn parts(&self) -> (&'static str, &RunArgs) {
        match self {
            Command::Simulate(a) => ("simulate", a),
            Command::Gradient(a) => ("gradient", a),
            Command::Couple(a) => ("couple", a),
            Command::Verify(a) => ("verify", a),
            Command::Recover(a) => ("recover", a),
            Command::Nonexplosion(a) => ("nonexplosion", a),
        }
    }
}

fn load(kind: &str, args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if cfg.task.name() != kind {
        return Err(Error::ConfigInvalid(vec![format!(
            "task.kind: `{}` does not match the `{kind}` subcommand",
            cfg.task.name()
        )]));
    }
    if let Some(seed) = args.seed {
        cfg.mc.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output.dir = Some(out.clone());
    }
    if let Some(formats) = &args.format {
        cfg.output.formats = formats.clone();
    }
    Ok(cfg)
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::ConfigInvalid(_) => EXIT_CONFIG,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_RECORDED_ERRORS,
    }
}

fn run(cli: &Cli) -> Result<u8, Error> {
    let (kind, args) = cli.command.parts();
    let cfg = load(kind, args)?;
    let bundle = run_experiment(&cfg)?;
    match &cfg.output.dir {
        Some(dir) => {
            for path in emit_report(&bundle, dir, &cfg.output.formats)? {
                eprintln!("wrote {}", path.display());
            }
        }
        None => println!("{}", bundle.to_json()?),
    }
    let errors = bundle.errors();
    for e in &errors {
        eprintln!("error in {}: {}", e["name"], e["error"]);
    }
    Ok(if errors.is_empty() { 0 } else { EXIT_RECORDED_ERRORS })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads_from_env();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("geoflow: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn format_list_parses() {
        let cli = Cli::try_parse_from(["geoflow", "couple", "--config", "c.toml", "--format", "json,svg", "--seed", "3"]).unwrap();
        let (kind, args) = cli.command.parts();
        assert_eq!(kind, "couple");
        assert_eq!(args.format.as_deref(), Some(&[Format::Json, Format::Svg][..]));
        assert_eq!(args.seed, Some(3));
        assert!(Cli::try_parse_from(["geoflow", "couple", "--config", "c.toml", "--format", "png"]).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::ConfigInvalid(vec![])), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::Io("x".into())), EXIT_IO);
        assert_eq!(exit_code(&Error::CutLocusAmbiguity), EXIT_RECORDED_ERRORS);
    }
}
