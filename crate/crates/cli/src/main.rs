//! `oed`: local experiments, benchmarks and the HTTP service.
//!
//! Exit status is 0 on success, 1 for usage or input errors and 2 for
//! internal failures.

use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use oed::archive;
use oed::benchmark::{comparison_config, run_benchmark, Benchmark};
use oed::config::{EvalMode, Preset, RunConfig};
use oed::problem::Problem;
use oed::scheduler::{self, EvaluatorBinding, OptimizerSuggester, SchedulerError, StopSignal};
use oed::store::{Experiment, Store, StoreError, SystemClock};
use oed_service::{AppState, UserDb};

#[derive(Parser)]
#[command(name = "oed", version, about = "Multi-objective Bayesian experiment design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create an experiment file from a problem and a run configuration.
    Init {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        db: PathBuf,
    },
    /// Run the optimize/evaluate loop. Without an evaluator, store and print
    /// the next suggested designs, then exit.
    Run {
        #[arg(long)]
        db: PathBuf,
        /// An evaluation program, or `builtin:zdt1|zdt2|dtlz2`.
        #[arg(long)]
        evaluator: Option<String>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        mode: Option<EvalMode>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Records, Pareto front and hypervolume trajectory.
    Report {
        #[arg(long)]
        db: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Enter a measured result for a record.
    Enter {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        record: u64,
        /// Comma-separated objective values in problem order.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        objectives: Vec<f64>,
        #[arg(long, default_value = "")]
        note: String,
    },
    /// Write the experiment archive to a directory.
    Export {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Create an experiment file from an archive directory.
    Import {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        db: PathBuf,
    },
    /// Serve the HTTP API over a directory of experiments.
    Serve {
        #[arg(long)]
        db_root: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        users: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
    /// Hypervolume-vs-evaluations CSV on a synthetic problem.
    Benchmark {
        #[arg(long)]
        problem: Benchmark,
        #[arg(long)]
        preset: Preset,
        #[arg(long, default_value_t = 40)]
        budget: usize,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value_t = 6)]
        dim: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

enum Failure {
    User(String),
    Internal(String),
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io(_) | StoreError::Integrity(_) => Failure::Internal(e.to_string()),
            _ => Failure::User(e.to_string()),
        }
    }
}

impl From<SchedulerError> for Failure {
    fn from(e: SchedulerError) -> Self {
        match e {
            SchedulerError::Store(s) => s.into(),
            SchedulerError::Config(_) => Failure::User(e.to_string()),
            SchedulerError::SuggestFailed { .. } => Failure::Internal(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Failure::User(format!("cannot read {}: {e}", path.display())))
}

fn load_problem(path: &Path) -> Result<Problem> {
    let text = read_input(path)?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        Problem::from_toml_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Failure::User(format!("{}: {e}", path.display())))
}

fn open(db: &Path) -> Result<Arc<Experiment>> {
    Ok(Experiment::open_at(db, Arc::new(SystemClock))?)
}

fn binding(spec: &str, config: &RunConfig) -> Result<EvaluatorBinding> {
    Ok(match spec.strip_prefix("builtin:") {
        Some(name) => EvaluatorBinding::Builtin {
            benchmark: name.parse().map_err(Failure::User)?,
        },
        None => EvaluatorBinding::ExternalProgram {
            path: PathBuf::from(spec),
            timeout_secs: config.evaluator_timeout_secs,
        },
    })
}

/// Writes to stdout; a reader that went away early is not an error.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::Internal(e.to_string())),
        _ => Ok(()),
    }
}

fn print_designs(exp: &Experiment, records: &[oed::store::ExperimentRecord]) -> Result<()> {
    emit(&archive::records_csv(exp.problem(), records)?)
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Init { problem, config, db } => {
            let problem = load_problem(&problem)?;
            let config = match config {
                Some(path) => RunConfig::from_toml_str(&read_input(&path)?).map_err(|e| Failure::User(e.to_string()))?,
                None => RunConfig::default(),
            };
            let name = db
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Failure::User(format!("cannot derive a name from {}", db.display())))?
                .to_string();
            if db.exists() {
                return Err(Failure::User(format!("{} already exists", db.display())));
            }
            let exp = Experiment::create_at(&db, &name, problem, config, Arc::new(SystemClock))?;
            println!("{}", exp.name());
        }
        Command::Run {
            db,
            evaluator,
            budget,
            mode,
            batch,
            seed,
        } => {
            let exp = open(&db)?;
            let mut config = exp.config().clone();
            if let Some(b) = budget {
                config.budget = b;
            }
            if let Some(m) = mode {
                config.eval_mode = m;
                if m == EvalMode::Sequential && batch.is_none() {
                    config.batch_size = 1;
                }
            }
            if let Some(b) = batch {
                config.batch_size = b;
            }
            if let Some(s) = seed {
                config.seed = s;
            }
            let mut suggester = OptimizerSuggester { config: config.clone() };
            match evaluator {
                None => {
                    let pending = scheduler::suggest_step(&exp, &config, &mut suggester)?;
                    print_designs(&exp, &pending)?;
                }
                Some(spec) => {
                    let mut executor = binding(&spec, &config)?.executor(exp.problem())?;
                    let report = scheduler::run(&exp, &config, &mut suggester, executor.as_mut(), &StopSignal::new())?;
                    eprintln!("evaluated {} failed {}", report.evaluated, report.failed);
                }
            }
        }
        Command::Report { db, format } => {
            use std::fmt::Write as _;
            let exp = open(&db)?;
            let records = exp.all_records();
            let stats = exp.statistics();
            let mut out = String::new();
            match format {
                Format::Json => {
                    let doc = serde_json::json!({"name": exp.name(), "statistics": stats, "records": records});
                    out = serde_json::to_string_pretty(&doc).map_err(|e| Failure::Internal(e.to_string()))? + "\n";
                }
                Format::Csv => {
                    out.push_str("# records\n");
                    out.push_str(&archive::records_csv(exp.problem(), &records)?);
                    out.push_str("\n# pareto_front\nrecord_id\n");
                    for id in &stats.front {
                        let _ = writeln!(out, "{id}");
                    }
                    out.push_str("\n# hypervolume\niteration,hypervolume\n");
                    for p in &stats.hypervolume {
                        let _ = writeln!(out, "{},{}", p.iteration, p.hypervolume);
                    }
                }
            }
            emit(&out)?;
        }
        Command::Enter {
            db,
            record,
            objectives,
            note,
        } => {
            let exp = open(&db)?;
            let r = exp.complete(record, objectives, &note, "cli")?;
            println!("record {} {}", r.id, r.status);
        }
        Command::Export { db, out } => {
            open(&db)?.export(&out)?;
        }
        Command::Import { input, db } => {
            if db.exists() {
                return Err(Failure::User(format!("{} already exists", db.display())));
            }
            let exp = Experiment::import_at(&input, &db, None, Arc::new(SystemClock))?;
            println!("{}", exp.name());
        }
        Command::Serve {
            db_root,
            port,
            users,
            host,
        } => {
            let store = Store::open(&db_root)?;
            let users = UserDb::load(&users).map_err(|e| Failure::User(e.to_string()))?;
            let addr = SocketAddr::new(host, port);
            eprintln!("listening on http://{addr}");
            oed_service::serve_blocking(addr, AppState::new(Arc::new(store), users))
                .map_err(|e| Failure::Internal(e.to_string()))?;
        }
        Command::Benchmark {
            problem,
            preset,
            budget,
            seeds,
            dim,
        } => {
            let config = RunConfig {
                budget,
                ..comparison_config(preset)
            };
            config.validate().map_err(|e| Failure::User(e.to_string()))?;
            let seeds: Vec<u64> = (0..seeds).collect();
            let points = run_benchmark(problem, dim, &config, &seeds).map_err(|e| Failure::Internal(e.to_string()))?;
            println!("seed,evaluations,hypervolume");
            for p in points {
                println!("{},{},{}", p.seed, p.evaluations, p.hypervolume);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::User(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
    }
}
