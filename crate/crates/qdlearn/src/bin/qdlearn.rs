//! Command-line front end: validate experiment configs, run seeded
//! experiments and sweeps, and solve exact fixed points.
//!
//! Exit codes: 0 success, 1 configuration/validation failure, 2 runtime or
//! I/O failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qdlearn::config::{preset_names, ExperimentConfigFile};
use qdlearn::error::Error;
use qdlearn::harness::{export_csv, run_experiment, RunSummary, ValidationReport};
use qdlearn::oracle::solve_q_star;

#[derive(Parser)]
#[command(
    name = "qdlearn",
    version,
    about = "Distributed multi-agent Q-learning simulator: networked agents with private \
             random costs learn the network-averaged optimal Q-function over an unreliable \
             communication graph, measured against an exact dynamic-programming oracle."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// Path to a JSON experiment config.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Name of an embedded preset.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
}

impl Source {
    fn load(&self) -> Result<ExperimentConfigFile, Error> {
        match (&self.config, &self.preset) {
            (Some(path), None) => ExperimentConfigFile::load(path),
            (None, Some(name)) => ExperimentConfigFile::from_preset(name),
            _ => Err(Error::Config(format!(
                "provide exactly one of --config PATH or --preset NAME (presets: {})",
                preset_names().join(", ")
            ))),
        }
    }
}

#[derive(Args, Clone, Copy)]
struct WaiverFlags {
    /// Run even if the step-size exponents violate the valid window.
    #[arg(long)]
    allow_m5_violation: bool,
    /// Run even if the mean communication graph is disconnected.
    #[arg(long)]
    allow_disconnected: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config against every pre-run requirement.
    Validate {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        waivers: WaiverFlags,
    },
    /// Run one seeded experiment; write CSV + JSON artifacts and print the
    /// final metrics.
    Run {
        #[command(flatten)]
        source: Source,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Step-count override.
        #[arg(long)]
        steps: Option<u64>,
        /// Output directory for run.csv and summary.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[command(flatten)]
        waivers: WaiverFlags,
    },
    /// Solve the exact fixed point of the config's model and write it as
    /// JSON.
    Solve {
        #[command(flatten)]
        source: Source,
        /// Master seed override (drives random-model generation).
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for oracle.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run one config under several seeds (in parallel) and aggregate the
    /// summaries.
    Sweep {
        #[command(flatten)]
        source: Source,
        /// Comma-separated master seeds, e.g. --seeds 0,1,2,3.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Step-count override.
        #[arg(long)]
        steps: Option<u64>,
        /// Output directory for per-seed artifacts and sweep.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[command(flatten)]
        waivers: WaiverFlags,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let result = match cli.command {
        Command::Validate { source, waivers } => cmd_validate(&source, waivers),
        Command::Run {
            source,
            seed,
            steps,
            out,
            waivers,
        } => cmd_run(&source, seed, steps, &out, waivers),
        Command::Solve { source, seed, out } => cmd_solve(&source, seed, &out),
        Command::Sweep {
            source,
            seeds,
            steps,
            out,
            waivers,
        } => cmd_sweep(&source, &seeds, steps, &out, waivers),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn apply_overrides(
    file: &mut ExperimentConfigFile,
    seed: Option<u64>,
    steps: Option<u64>,
    waivers: WaiverFlags,
) {
    if let Some(seed) = seed {
        file.master_seed = seed;
    }
    if let Some(steps) = steps {
        file.total_steps = steps;
    }
    file.waivers.allow_m5_violation |= waivers.allow_m5_violation;
    file.waivers.allow_disconnected |= waivers.allow_disconnected;
}

fn print_report(report: &ValidationReport) {
    for check in &report.checks {
        let status = if check.passed {
            "PASS  "
        } else if check.waived {
            "WAIVED"
        } else {
            "FAIL  "
        };
        println!("{status} {:<22} {}", check.name, check.detail);
    }
}

fn cmd_validate(source: &Source, waivers: WaiverFlags) -> Result<ExitCode, Error> {
    let mut file = source.load()?;
    apply_overrides(&mut file, None, None, waivers);
    let report = file.validate();
    print_report(&report);
    if report.passed() {
        println!("config ok");
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn resolve_path(out_dir: &Path, configured: &Option<String>, default: &str) -> PathBuf {
    let name = configured.as_deref().unwrap_or(default);
    let path = PathBuf::from(name);
    if path.is_absolute() {
        path
    } else {
        out_dir.join(path)
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::json(format!("serializing {}", path.display()), e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_run(
    source: &Source,
    seed: Option<u64>,
    steps: Option<u64>,
    out: &Path,
    waivers: WaiverFlags,
) -> Result<ExitCode, Error> {
    let mut file = source.load()?;
    apply_overrides(&mut file, seed, steps, waivers);
    let config = file.to_run_config()?;
    let record = match run_experiment(&config) {
        Ok(record) => record,
        Err(Error::Validation(report)) => {
            print_report(&report);
            eprintln!("error: validation failed: {}", report.one_line());
            return Ok(ExitCode::from(1));
        }
        Err(e) => return Err(e),
    };
    let summary = record.summary();

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let csv_path = resolve_path(out, &file.output.csv, "run.csv");
    let summary_path = resolve_path(out, &file.output.summary, "summary.json");
    export_csv(&record, &csv_path)?;
    write_json(&summary_path, &summary)?;

    println!("wrote {} and {}", csv_path.display(), summary_path.display());
    print_summary(&summary);
    Ok(ExitCode::SUCCESS)
}

fn print_summary(summary: &RunSummary) {
    let scale = summary.q_star_sup_norm;
    println!("seed                      {}", summary.seed);
    println!("steps                     {}", summary.total_steps);
    println!("agents                    {}", summary.num_agents);
    println!("|Q*|_inf                  {:.6}", scale);
    println!("q_star_residual           {:.3e}", summary.q_star_residual);
    println!(
        "final consensus distance  {:.6}  ({:.3}% of |Q*|)",
        summary.final_consensus_distance,
        100.0 * summary.final_consensus_distance / scale
    );
    println!(
        "final max agent error     {:.6}  ({:.3}% of |Q*|)",
        summary.final_oracle_error_max,
        100.0 * summary.final_oracle_error_max / scale
    );
    println!(
        "final centralized error   {:.6}  ({:.3}% of |Q*|)",
        summary.final_centralized_error,
        100.0 * summary.final_centralized_error / scale
    );
    println!(
        "error ratio dist/cent     {:.6}",
        summary.error_ratio_distributed_to_centralized
    );
    println!(
        "max |Q_t|_inf             {:.6}  (bound {:.6}, within: {})",
        summary.max_sup_norm, summary.boundedness_bound, summary.within_bound
    );
    if summary.waivers.allow_m5_violation || summary.waivers.allow_disconnected {
        println!("waivers                   {:?}", summary.waivers);
    }
}

fn cmd_solve(source: &Source, seed: Option<u64>, out: &Path) -> Result<ExitCode, Error> {
    let mut file = source.load()?;
    if let Some(seed) = seed {
        file.master_seed = seed;
    }
    let model = file.build_model()?;
    let violations = model.validate_for_solve();
    if !violations.is_empty() {
        return Err(Error::Config(format!(
            "model rejected: {}",
            violations.join("; ")
        )));
    }
    let solution = solve_q_star(&model, file.oracle_tolerance)?;

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let oracle_path = resolve_path(out, &file.output.oracle, "oracle.json");
    write_json(&oracle_path, &solution)?;

    println!("wrote {}", oracle_path.display());
    println!("|Q*|_inf    {:.9}", solution.q_star.sup_norm());
    println!("residual    {:.3e}", solution.sup_norm_residual);
    println!("iterations  {}", solution.iterations);
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(
    source: &Source,
    seeds: &[u64],
    steps: Option<u64>,
    out: &Path,
    waivers: WaiverFlags,
) -> Result<ExitCode, Error> {
    if seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one seed".into()));
    }
    let base = source.load()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let mut results: Vec<Result<(u64, RunSummary), Error>> = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let mut file = base.clone();
                scope.spawn(move || -> Result<(u64, RunSummary), Error> {
                    apply_overrides(&mut file, Some(seed), steps, waivers);
                    let config = file.to_run_config()?;
                    let record = run_experiment(&config)?;
                    let summary = record.summary();
                    export_csv(&record, &out.join(format!("run_{seed}.csv")))?;
                    write_json(&out.join(format!("summary_{seed}.json")), &summary)?;
                    Ok((seed, summary))
                })
            })
            .collect();
        for handle in handles {
            results.push(handle.join().expect("sweep worker panicked"));
        }
    });

    let mut summaries = Vec::new();
    for result in results {
        summaries.push(result?);
    }
    summaries.sort_by_key(|(seed, _)| *seed);

    println!("seed  final_max_err  centralized_err  consensus");
    for (seed, summary) in &summaries {
        println!(
            "{seed:<5} {:<14.6} {:<16.6} {:.6}",
            summary.final_oracle_error_max,
            summary.final_centralized_error,
            summary.final_consensus_distance
        );
    }
    let sweep: Vec<&RunSummary> = summaries.iter().map(|(_, s)| s).collect();
    write_json(&out.join("sweep.json"), &sweep)?;
    println!("wrote {}", out.join("sweep.json").display());
    Ok(ExitCode::SUCCESS)
}
