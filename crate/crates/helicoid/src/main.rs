use clap::{Parser, ValueEnum};
use helicoid::{run, verify, Experiment, ExperimentConfig, Format, HarnessError};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Target {
    LocalEstimate,
    LoomisWhitney,
    MixedNormScan,
    MaximalSuite,
    SparseSuite,
    Endpoint,
    RangeScan,
    Tree,
    Decomposition,
    /// Recompute flagged rows of a JSON report and compare them bitwise.
    Verify,
}

impl Target {
    fn experiment(self) -> Option<Experiment> {
        Some(match self {
            Target::LocalEstimate => Experiment::LocalEstimate,
            Target::LoomisWhitney => Experiment::LoomisWhitney,
            Target::MixedNormScan => Experiment::MixedNormScan,
            Target::MaximalSuite => Experiment::MaximalSuite,
            Target::SparseSuite => Experiment::SparseSuite,
            Target::Endpoint => Experiment::Endpoint,
            Target::RangeScan => Experiment::RangeScan,
            Target::Tree => Experiment::Tree,
            Target::Decomposition => Experiment::Decomposition,
            Target::Verify => return None,
        })
    }
}

/// Seeded numerical experiments on discretized multilinear operators.
///
/// Exit status: 0 when every verdict passes, 2 when a verdict fails,
/// 1 on usage, configuration or computation errors.
#[derive(Parser, Debug)]
#[command(name = "helicoid", version)]
struct Cli {
    target: Target,
    /// JSON configuration; omitted fields take the experiment's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    threads: Option<usize>,
    /// Output file (default: the config's `output`, else stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format (default: from the output extension, else csv).
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// JSON report to check (verify only).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Recompute every row instead of the flagged ones (verify only).
    #[arg(long)]
    all: bool,
}

fn load_config(cli: &Cli, fallback: Option<Experiment>) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
            ExperimentConfig::from_json(&text, fallback)?
        }
        None => ExperimentConfig::canonical(fallback.ok_or_else(|| HarnessError::Config("verify needs --config".into()))?),
    };
    if let Some(seed) = cli.seed {
        cfg.base_seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output = Some(out.clone());
    }
    Ok(cfg)
}

fn set_threads(threads: Option<usize>) -> Result<(), HarnessError> {
    let Some(t) = threads else { return Ok(()) };
    if t == 0 {
        return Err(HarnessError::Config("--threads must be positive".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(())
}

fn execute(cli: &Cli) -> Result<bool, HarnessError> {
    set_threads(cli.threads)?;
    match cli.target.experiment() {
        None => {
            let path = cli.report.as_ref().ok_or_else(|| HarnessError::Config("verify needs --report".into()))?;
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
            let report = helicoid::Report::from_json(&text)?;
            let experiment = serde_json::from_value(serde_json::Value::from(report.experiment.clone())).ok();
            let cfg = load_config(cli, experiment)?;
            let outcome = verify(&cfg, &report, cli.all)?;
            eprintln!("verified {} rows, {} mismatches", outcome.checked, outcome.mismatches.len());
            for i in &outcome.mismatches {
                eprintln!("MISMATCH trial {i}");
            }
            Ok(outcome.mismatches.is_empty())
        }
        Some(experiment) => {
            let cfg = load_config(cli, Some(experiment))?;
            let report = run(&cfg)?;
            let format = cli.format.unwrap_or(match cfg.output.as_ref().and_then(|p| p.extension()) {
                Some(ext) if ext == "json" => Format::Json,
                _ => Format::Csv,
            });
            let text = report.render(format)?;
            match &cfg.output {
                Some(path) => std::fs::write(path, text).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?,
                None => print!("{text}"),
            }
            for v in &report.verdicts {
                eprintln!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
            }
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
