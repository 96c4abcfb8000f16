use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dcsgd::harness::{
    bounds_csv, certify_all, compare_bounds, counterexample_config, default_certification_set, report_csv,
    run_experiment, CompareBoundsConfig, ExperimentConfig, ExperimentOutcome, MIN_TRIALS,
};
use dcsgd::{CompressorSpec, Error};
use serde::Deserialize;

const EXIT_OTHER: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;

/// Simulator for distributed SGD with compressed communication.
#[derive(Parser)]
#[command(name = "dcsgd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo certification of compressor classes.
    Certify(CertifyArgs),
    /// Run an experiment config across seeds.
    Run(RunArgs),
    /// Tabulate convergence bounds over a grid of node counts.
    CompareBounds(CompareArgs),
    /// Top-1, Top-1 with error feedback and NU Rand-1 on the divergence example.
    Counterexample(CounterexampleArgs),
}

#[derive(Args)]
struct CertifyArgs {
    /// JSON with optional `dim`, `k`, `trials`, `seed` and `compressors`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    /// Budget for the default operator set.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds or inclusive ranges, e.g. `0-4,9`.
    #[arg(long)]
    seeds: Option<String>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CounterexampleArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "0-4")]
    seeds: String,
    #[arg(long, default_value_t = 3000)]
    iterations: usize,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CertifyConfig {
    dim: Option<usize>,
    k: Option<usize>,
    trials: Option<usize>,
    seed: Option<u64>,
    compressors: Option<Vec<CompressorSpec>>,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
                if a > b {
                    bail!("empty seed range {part}");
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().with_context(|| format!("bad seed {part:?}"))?),
        }
    }
    Ok(seeds)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| Error::Json(e).into())
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn certify(args: CertifyArgs) -> Result<u8> {
    let cfg: CertifyConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => CertifyConfig::default(),
    };
    let dim = args.dim.or(cfg.dim).unwrap_or(10);
    let k = args.k.or(cfg.k).unwrap_or(2);
    let trials = args.trials.or(cfg.trials).unwrap_or(10 * MIN_TRIALS);
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let specs = cfg.compressors.unwrap_or_else(|| default_certification_set(dim, k));
    let mut errors = Vec::new();
    if trials < MIN_TRIALS {
        errors.push(format!("trials must be at least {MIN_TRIALS}, got {trials}"));
    }
    for spec in &specs {
        if let Err(e) = spec.validate(dim) {
            errors.push(e.to_string());
        }
    }
    if !errors.is_empty() {
        return Err(Error::Validation(errors).into());
    }
    let rows = certify_all(&specs, dim, trials, seed)?;
    let csv = report_csv(&rows);
    print!("{csv}");
    if let Some(dir) = &args.out {
        write_file(dir, "certification.csv", &csv)?;
    }
    Ok(0)
}

fn report(outcome: &ExperimentOutcome) -> u8 {
    print!("{}", outcome.methods_csv());
    for u in &outcome.unexpected {
        eprintln!("unexpected divergence: method {} seed {} at k = {}", u.method, u.seed, u.k);
    }
    if outcome.unexpected.is_empty() {
        0
    } else {
        EXIT_DIVERGENCE
    }
}

fn run(args: RunArgs) -> Result<u8> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seeds) = &args.seeds {
        cfg.seeds = Some(parse_seeds(seeds).map_err(|e| Error::Validation(vec![format!("--seeds: {e}")]))?);
    }
    let outcome = run_experiment(&cfg, args.out.as_deref())?;
    Ok(report(&outcome))
}

fn compare(args: CompareArgs) -> Result<u8> {
    let cfg: CompareBoundsConfig = read_json(&args.config)?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let csv = bounds_csv(&compare_bounds(&cfg, base)?);
    print!("{csv}");
    if let Some(dir) = &args.out {
        write_file(dir, "bounds.csv", &csv)?;
    }
    Ok(0)
}

fn counterexample(args: CounterexampleArgs) -> Result<u8> {
    let seeds = parse_seeds(&args.seeds).map_err(|e| Error::Validation(vec![format!("--seeds: {e}")]))?;
    let cfg = counterexample_config(seeds, args.iterations);
    let outcome = run_experiment(&cfg, args.out.as_deref())?;
    Ok(report(&outcome))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Validation(_) | Error::Json(_) | Error::Parameter(_)) => EXIT_VALIDATION,
        _ => EXIT_OTHER,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Certify(a) => certify(a),
        Command::Run(a) => run(a),
        Command::CompareBounds(a) => compare(a),
        Command::Counterexample(a) => counterexample(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            match err.downcast_ref::<Error>() {
                Some(Error::Validation(list)) => {
                    eprintln!("invalid configuration:");
                    for e in list {
                        eprintln!("  - {e}");
                    }
                }
                _ => eprintln!("error: {err:#}"),
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
