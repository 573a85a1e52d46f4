use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sccdso_core::experiment::{emit, summary_table, run_experiment, ExperimentConfig, ExperimentError, Format};
use sccdso_core::sched::{run_oracle, AcoConfig, ObjectiveKind, Preset, SchedulerKind};

#[derive(Parser)]
#[command(name = "sccdso", version, about = "Locality-aware scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep and write result tables.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        preset: Option<Preset>,
        /// Selection objective: `weighted` or `makespan`.
        #[arg(long)]
        objective: Option<ObjectiveKind>,
        /// Comma-separated scheduler list.
        #[arg(long, value_delimiter = ',')]
        schedulers: Option<Vec<SchedulerKind>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: Format,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Check a config and the files it references.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare the colony against exhaustive search on small instances.
    Oracle {
        #[arg(long, default_value_t = 8)]
        max_tasks: usize,
        #[arg(long, default_value_t = 4)]
        max_nodes: usize,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value = "standard")]
        preset: Preset,
        /// Required share of instances within 5% of the optimum.
        #[arg(long, default_value_t = 0.95)]
        required: f64,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn load(config: &Path) -> Result<ExperimentConfig, Failure> {
    let cfg = ExperimentConfig::load(config)?;
    cfg.validate()?;
    cfg.load_cluster()?;
    cfg.load_workload()?;
    Ok(cfg)
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run { config, preset, objective, schedulers, out, format, seed, reps } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.preset = preset.unwrap_or(cfg.preset);
            cfg.objective = objective.or(cfg.objective);
            cfg.schedulers = schedulers.unwrap_or(cfg.schedulers);
            cfg.output_dir = out.unwrap_or(cfg.output_dir);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.repetitions = reps.unwrap_or(cfg.repetitions);
            cfg.validate()?;
            let result = run_experiment(&cfg)?;
            let files = emit(&result, &cfg.output_dir, format)?;
            print!("{}", summary_table(&result).to_markdown());
            let failed = result.runs.iter().filter(|r| !r.is_ok()).count();
            for f in files {
                log::info!("wrote {}", f.display());
            }
            if failed > 0 {
                eprintln!("{failed} of {} runs failed; see runs.csv", result.runs.len());
            }
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            let cells = cfg.cells(cfg.load_cluster()?.nodes.len());
            for w in AcoConfig::preset(cfg.preset).validate().map_err(|e| Failure::Config(e.to_string()))? {
                eprintln!("warning: {w}");
            }
            println!("ok: {} cells x {} schedulers x {} repetitions", cells.len(), cfg.schedulers.len(), cfg.repetitions);
            Ok(())
        }
        Command::Oracle { max_tasks, max_nodes, seeds, preset, required } => {
            let report = run_oracle(&AcoConfig::preset(preset), seeds, max_tasks, max_nodes, 0.05).map_err(|e| Failure::Config(e.to_string()))?;
            println!("{}", serde_json::json!({
                "instances": report.instances,
                "within_5pct": report.within,
                "worst_ratio": report.worst_ratio,
            }));
            if (report.within as f64) < required * report.instances as f64 {
                return Err(Failure::Runtime(format!("only {} of {} instances within 5% of optimum", report.within, report.instances)));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // usage errors count as config errors, not runtime failures
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
