use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use msekit::approx::compare_expansions;
use msekit::scenario::{builtin_scenarios, parse_scenarios};
use msekit::{
    estimate, run_study, sample_table, solve_cell_probabilities, z_vector, CountTable, Estimator,
    ModelSpec, RandomStream, ScenarioSpec, SimSummary,
};

mod report;

/// Seed used when neither `--seed` nor `MSEKIT_SEED` is given.
const DEFAULT_SEED: u64 = 20_240_229;

#[derive(Parser)]
#[command(
    name = "mse-kit",
    version,
    about = "Dual- and multiple-systems population size estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the population size from an observed count table.
    Estimate {
        /// Table file (optional `k=<int>` header, then `pattern,count` lines); `-` reads stdin.
        #[arg(long)]
        input: PathBuf,
        /// Log-linear model, e.g. `sat`, `ind`, `pairs=AB,BC`, `k=4;terms=AB,BC,ABC`.
        #[arg(long, default_value = "sat")]
        model: String,
        /// Comma-separated estimators, or `all`. Defaults to the set for the table's k.
        #[arg(long)]
        estimator: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run a Monte Carlo study over one or more scenarios.
    Simulate {
        /// Scenario JSON file, or `builtin:dse` / `builtin:mse`.
        #[arg(long)]
        scenarios: String,
        /// Restrict to these scenario ids (comma-separated).
        #[arg(long)]
        scenario: Option<String>,
        /// Fitted model: `true` (generating model), `saturated`, or a model string.
        #[arg(long, default_value = "saturated")]
        fit: String,
        #[arg(long)]
        estimators: Option<String>,
        #[arg(long, default_value_t = 20_000)]
        reps: usize,
        #[arg(long, env = "MSEKIT_SEED", default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
        out: TableFormat,
        /// Write to this file instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Worker threads (default: all cores). Results do not depend on it.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the intercept row z of the design's pseudoinverse and its negative part.
    Zvector {
        #[arg(long)]
        k: Option<usize>,
        /// Pair list (`AB,BC`), `none` or `all`.
        #[arg(long)]
        pairs: Option<String>,
        /// Full model string; overrides `--pairs`.
        #[arg(long)]
        model: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Compare Taylor and inverse-factorial expansions of E[1/n], n ~ Poisson(m).
    Approx {
        #[arg(long, default_value_t = 20.0)]
        m: f64,
        #[arg(long, default_value_t = 1_000_000)]
        draws: usize,
        #[arg(long, env = "MSEKIT_SEED", default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Emit one sampled count table for a scenario.
    Gen {
        /// Scenario id, e.g. `MSE4`.
        #[arg(long)]
        scenario: String,
        /// Scenario JSON file, or `builtin:dse` / `builtin:mse` (default: both bundles).
        #[arg(long)]
        scenarios: Option<String>,
        /// Replication index selecting the random stream.
        #[arg(long, default_value_t = 0)]
        rep: u64,
        #[arg(long, env = "MSEKIT_SEED", default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Csv,
    Md,
    Json,
}

enum Failure {
    Data(String),
    /// Results were emitted but at least one estimate failed.
    Estimates,
}

impl From<msekit::Error> for Failure {
    fn from(e: msekit::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(msg)) => {
            eprintln!("mse-kit: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Estimates) => {
            eprintln!("mse-kit: at least one estimate failed");
            ExitCode::from(4)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Estimate {
            input,
            model,
            estimator,
            format,
        } => cmd_estimate(input, &model, estimator, format),
        Command::Simulate {
            scenarios,
            scenario,
            fit,
            estimators,
            reps,
            seed,
            out,
            output,
            threads,
        } => {
            let specs = select(load_scenarios(&scenarios)?, scenario.as_deref())?;
            let body = with_threads(threads, || {
                simulate(&specs, &fit, estimators.as_deref(), reps, seed, out)
            })??;
            emit(output, &body)
        }
        Command::Zvector {
            k,
            pairs,
            model,
            format,
        } => cmd_zvector(k, pairs, model, format),
        Command::Approx { m, draws, seed } => {
            let rep = compare_expansions(m, draws, seed)?;
            emit(None, &report::approx_csv(&rep))
        }
        Command::Gen {
            scenario,
            scenarios,
            rep,
            seed,
        } => {
            let pool = match scenarios {
                Some(src) => load_scenarios(&src)?,
                None => [builtin_scenarios("dse")?, builtin_scenarios("mse")?].concat(),
            };
            let spec = select(pool, Some(&scenario))?.remove(0);
            let q = solve_cell_probabilities(&spec)?;
            let table = sample_table(
                &q,
                spec.population,
                &mut RandomStream::new(seed, &spec.id, rep),
            );
            emit(None, &table.to_text())
        }
    }
}

fn emit(path: Option<PathBuf>, body: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(&p, body).map_err(|e| Failure::Data(format!("{}: {e}", p.display()))),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(body.as_bytes())?;
            Ok(out.flush()?)
        }
    }
}

fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, Failure> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Failure::Data("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::Data(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn read_input(path: &PathBuf) -> Result<String, Failure> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
    }
}

fn parse_estimators(list: Option<&str>, k: usize) -> Result<Vec<Estimator>, Failure> {
    let default = if k == 2 {
        Estimator::dse_set()
    } else {
        Estimator::mse_set()
    };
    let list = match list.map(str::trim) {
        None | Some("") => return Ok(default),
        Some("all") => {
            return Ok(Estimator::ALL
                .into_iter()
                .filter(|e| e.supports(k))
                .collect())
        }
        Some("dse") => return Ok(Estimator::dse_set()),
        Some("mse") => return Ok(Estimator::mse_set()),
        Some(l) => l,
    };
    Ok(list
        .split(',')
        .map(str::parse)
        .collect::<msekit::Result<Vec<_>>>()?)
}

fn cmd_estimate(
    input: PathBuf,
    model: &str,
    estimator: Option<String>,
    format: Format,
) -> Result<(), Failure> {
    let table = CountTable::parse(&read_input(&input)?)?;
    let model = ModelSpec::parse_with_k(model, Some(table.k()))?;
    let estimators = parse_estimators(estimator.as_deref(), table.k())?;
    let results = estimators
        .iter()
        .map(|&e| estimate(&table, &model, e))
        .collect::<msekit::Result<Vec<_>>>()?;
    let body = match format {
        Format::Text => report::estimates_text(&results),
        Format::Csv => report::estimates_csv(&results),
        Format::Json => report::estimates_json(&results),
    };
    emit(None, &body)?;
    if results.iter().any(|r| !r.is_ok()) {
        return Err(Failure::Estimates);
    }
    Ok(())
}

fn load_scenarios(src: &str) -> Result<Vec<ScenarioSpec>, Failure> {
    match src.strip_prefix("builtin:") {
        Some(name) => Ok(builtin_scenarios(name)?),
        None => {
            let text = fs::read_to_string(src).map_err(|e| Failure::Data(format!("{src}: {e}")))?;
            Ok(parse_scenarios(&text)?)
        }
    }
}

fn select(specs: Vec<ScenarioSpec>, ids: Option<&str>) -> Result<Vec<ScenarioSpec>, Failure> {
    let Some(ids) = ids else { return Ok(specs) };
    ids.split(',')
        .map(str::trim)
        .map(|id| {
            specs
                .iter()
                .find(|s| s.id.eq_ignore_ascii_case(id))
                .cloned()
                .ok_or_else(|| Failure::Data(format!("no scenario {id:?}")))
        })
        .collect()
}

fn fitted_model(spec: &ScenarioSpec, fit: &str) -> Result<ModelSpec, Failure> {
    Ok(match fit.trim() {
        "true" => spec.generating_model()?,
        "saturated" | "sat" => ModelSpec::saturated(spec.k)?,
        other => ModelSpec::parse_with_k(other, Some(spec.k))?,
    })
}

fn simulate(
    specs: &[ScenarioSpec],
    fit: &str,
    estimators: Option<&str>,
    reps: usize,
    seed: u64,
    out: TableFormat,
) -> Result<String, Failure> {
    let mut studies: Vec<Vec<SimSummary>> = Vec::new();
    for spec in specs {
        let model = fitted_model(spec, fit)?;
        let list = parse_estimators(estimators, spec.k)?;
        studies.push(run_study(spec, &model, &list, reps, seed)?);
    }
    Ok(match out {
        TableFormat::Csv => report::study_csv(&studies),
        TableFormat::Md => report::study_markdown(&studies),
        TableFormat::Json => report::study_json(&studies),
    })
}

fn cmd_zvector(
    k: Option<usize>,
    pairs: Option<String>,
    model: Option<String>,
    format: Format,
) -> Result<(), Failure> {
    let model = match (model, pairs) {
        (Some(m), _) => ModelSpec::parse_with_k(&m, k)?,
        (None, Some(p)) => {
            let body = if p.contains('=') {
                p
            } else {
                format!("pairs={p}")
            };
            ModelSpec::parse_with_k(&body, k)?
        }
        (None, None) => ModelSpec::parse_with_k("sat", k)?,
    };
    let z = z_vector(&model)?;
    let body = match format {
        Format::Text => report::zvector_text(&z),
        Format::Csv => report::zvector_csv(&z),
        Format::Json => report::zvector_json(&z),
    };
    emit(None, &body)
}
