//! `cellnas` command-line front end.
//!
//! Exit codes: 0 success, 1 other failure, 2 bad configuration or input,
//! 3 evaluator failure.

mod worker;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use cellnas::pareto::{read_candidates_csv, write_front_csv};
use cellnas::surrogate::{extract_time_features, TIME_FEATURE_NAMES};
use cellnas::{
    apply_time_constraint, assemble_network, build_pareto_front, cardinality_upper_bound, compare_reports,
    enumerate_initial_blocks, expand_cell, export_graph, load_run, report, resume, run_search, CellSpec,
    DynamicReindexTable, Error, Evaluator, ExportFormat, ExternalConfig, ExternalEvaluator, RunControl, SearchMode,
    SearchOptions, SearchSpaceConfig, SyntheticEvaluator, SyntheticParams, TableEvaluator,
};

const EXIT_FAILURE: u8 = 1;
const EXIT_BAD_INPUT: u8 = 2;
const EXIT_EVALUATOR: u8 = 3;

#[derive(Parser)]
#[command(name = "cellnas", version, about = "Progressive Pareto-guided cell architecture search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a new search into a fresh run directory.
    Search(SearchArgs),
    /// Continue an interrupted run.
    Resume(ResumeArgs),
    /// List the canonical one-block expansions of a cell.
    Expand {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        cell: String,
    },
    /// Print the time-predictor features of a cell.
    Features {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        cell: String,
        /// `operator,index` CSV, as written to a run's reindex.csv.
        #[arg(long)]
        reindex: PathBuf,
    },
    /// Build the Pareto front of a `cell,a_hat,t_hat` CSV.
    Pareto {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        input: PathBuf,
        /// Front size; defaults to the configured beam size.
        #[arg(long)]
        k: Option<usize>,
        /// Time constraint in seconds; defaults to the configured one.
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Export the network assembled from a cell.
    ExportArch {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        cell: String,
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Summarize a run, or compare a pnas run with a popnas run.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Print the single-block count and the search-space size bound.
    SpaceStats {
        #[command(flatten)]
        space: SpaceArg,
    },
    /// Serve evaluation requests on stdio with the synthetic evaluator.
    #[command(hide = true)]
    Worker {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        synthetic_params: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SpaceArg {
    /// Search-space TOML; the default space when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluatorArgs {
    /// `synthetic`, `table:<csv>` or `external`.
    #[arg(long, default_value = "synthetic")]
    evaluator: String,
    /// Parameter TOML for the synthetic evaluator.
    #[arg(long)]
    synthetic_params: Option<PathBuf>,
    /// Worker command for `external`; falls back to $CELLNAS_WORKER_CMD.
    #[arg(long)]
    worker_cmd: Option<String>,
    /// Per-request timeout in seconds for `external`.
    #[arg(long, default_value_t = 3600.0)]
    timeout: f64,
    /// Concurrent evaluations; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "popnas")]
    mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = cellnas::surrogate::DEFAULT_FOLDS)]
    folds: usize,
    /// Run directory; defaults to `runs/<mode>-seed<seed>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stop after this step; continue later with `resume`.
    #[arg(long)]
    stop_after_step: Option<usize>,
    #[command(flatten)]
    eval: EvaluatorArgs,
}

#[derive(Args)]
struct ResumeArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    stop_after_step: Option<usize>,
    #[command(flatten)]
    eval: EvaluatorArgs,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn bad_input(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: EXIT_BAD_INPUT,
            error: error.into(),
        }
    }

    fn evaluator(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: EXIT_EVALUATOR,
            error: error.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Evaluator(_) | Error::EvaluatorCascade { .. } => EXIT_EVALUATOR,
            Error::Config(_)
            | Error::TomlDe(_)
            | Error::CellParse { .. }
            | Error::InvalidCell { .. }
            | Error::CellTooLarge { .. }
            | Error::CellFull(_)
            | Error::UnknownFormat(_) => EXIT_BAD_INPUT,
            _ => EXIT_FAILURE,
        };
        Failure { code, error: e.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure {
            code: EXIT_FAILURE,
            error,
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Search(a) => cmd_search(a),
        Command::Resume(a) => cmd_resume(a),
        Command::Expand { space, cell } => {
            let cfg = space.load()?;
            let cell = CellSpec::parse(&cell, &cfg.catalog()?)?;
            let catalog = cfg.catalog()?;
            let mut out = String::new();
            for c in expand_cell(&cell, &cfg)? {
                out.push_str(&c.to_text(&catalog));
                out.push('\n');
            }
            emit(&out)
        }
        Command::Features { space, cell, reindex } => {
            let cfg = space.load()?;
            let catalog = cfg.catalog()?;
            let cell = CellSpec::parse(&cell, &catalog)?;
            let file = fs::File::open(&reindex).with_context(|| format!("cannot open {}", reindex.display()))?;
            let table = DynamicReindexTable::read_csv(&catalog, file).map_err(Failure::bad_input)?;
            let net = assemble_network(&cell, &cfg);
            let values = extract_time_features(&cell, &table, &net)?.to_array();
            let mut out = String::from("feature,value\n");
            for (name, v) in TIME_FEATURE_NAMES.iter().zip(values) {
                out.push_str(&format!("{name},{v}\n"));
            }
            emit(&out)
        }
        Command::Pareto {
            space,
            input,
            k,
            t,
            output,
        } => {
            let cfg = space.load()?;
            let catalog = cfg.catalog()?;
            let file = fs::File::open(&input).with_context(|| format!("cannot open {}", input.display()))?;
            let candidates = read_candidates_csv(file, &catalog).map_err(Failure::bad_input)?;
            let kept = apply_time_constraint(candidates, t.or(cfg.time_constraint_seconds));
            let front = build_pareto_front(&kept, k.unwrap_or(cfg.beam_size))?;
            let mut buf = Vec::new();
            write_front_csv(&front, &catalog, &mut buf)?;
            match output {
                Some(p) => fs::write(&p, buf).with_context(|| format!("cannot write {}", p.display()))?,
                None => std::io::stdout().write_all(&buf)?,
            }
            Ok(())
        }
        Command::ExportArch { space, cell, format } => {
            let cfg = space.load()?;
            let catalog = cfg.catalog()?;
            let format: ExportFormat = format.parse()?;
            let cell = CellSpec::parse(&cell, &catalog)?;
            emit(&export_graph(&assemble_network(&cell, &cfg), format, &catalog))
        }
        Command::Report { run, compare } => cmd_report(&run, compare.as_deref()),
        Command::SpaceStats { space } => {
            let cfg = space.load()?;
            let bound = cardinality_upper_bound(&cfg);
            emit(&format!(
                "operators: {}\ninitial blocks: {}\nblocks: {}\ncardinality upper bound: {} (~{:.2e})\n",
                cfg.operators.len(),
                enumerate_initial_blocks(&cfg).len(),
                cfg.blocks,
                bound.exact,
                bound.approx()
            ))
        }
        Command::Worker {
            space,
            synthetic_params,
        } => {
            let cfg = space.load()?;
            let params = load_synthetic_params(synthetic_params.as_deref())?;
            let evaluator = SyntheticEvaluator::new(cfg.catalog()?, params);
            worker::serve(&evaluator, &cfg.catalog()?, std::io::stdin().lock(), std::io::stdout().lock())?;
            Ok(())
        }
    }
}

fn emit(text: &str) -> CliResult {
    std::io::stdout().write_all(text.as_bytes())?;
    Ok(())
}

impl SpaceArg {
    fn load(&self) -> CliResult<SearchSpaceConfig> {
        match &self.config {
            Some(p) => load_config(p),
            None => Ok(SearchSpaceConfig::default()),
        }
    }
}

fn load_config(path: &Path) -> CliResult<SearchSpaceConfig> {
    SearchSpaceConfig::load(path)
        .with_context(|| format!("cannot load config {}", path.display()))
        .map_err(Failure::bad_input)
}

fn load_synthetic_params(path: Option<&Path>) -> CliResult<SyntheticParams> {
    let Some(path) = path else {
        return Ok(SyntheticParams::default());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::bad_input)?;
    toml::from_str(&text)
        .with_context(|| format!("invalid synthetic parameters in {}", path.display()))
        .map_err(Failure::bad_input)
}

fn build_evaluator(args: &EvaluatorArgs, cfg: &SearchSpaceConfig) -> CliResult<Box<dyn Evaluator>> {
    let catalog = cfg.catalog()?;
    if args.evaluator == "synthetic" {
        let params = load_synthetic_params(args.synthetic_params.as_deref())?;
        return Ok(Box::new(SyntheticEvaluator::new(catalog, params)));
    }
    if let Some(path) = args.evaluator.strip_prefix("table:") {
        let table = TableEvaluator::load(Path::new(path), &catalog)
            .with_context(|| format!("cannot load table {path}"))
            .map_err(Failure::evaluator)?;
        return Ok(Box::new(table));
    }
    if args.evaluator == "external" {
        if !args.timeout.is_finite() || args.timeout <= 0.0 {
            return Err(Failure::bad_input(anyhow!("--timeout must be positive")));
        }
        let timeout = Duration::from_secs_f64(args.timeout);
        let workers = match args.workers {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            n => n,
        };
        let config = match &args.worker_cmd {
            Some(command) => ExternalConfig {
                command: command.clone(),
                workers,
                timeout,
            },
            None => ExternalConfig::from_env(workers, timeout).map_err(Failure::evaluator)?,
        };
        return Ok(Box::new(ExternalEvaluator::new(catalog, config).map_err(Failure::evaluator)?));
    }
    Err(Failure::bad_input(anyhow!(
        "unknown evaluator {:?}; expected synthetic, table:<path> or external",
        args.evaluator
    )))
}

fn cmd_search(a: SearchArgs) -> CliResult {
    let cfg = load_config(&a.config)?;
    let mode: SearchMode = a.mode.parse().map_err(Failure::bad_input)?;
    let evaluator = build_evaluator(&a.eval, &cfg)?;
    let out = a
        .out
        .unwrap_or_else(|| PathBuf::from(format!("runs/{mode}-seed{}", a.seed)));
    let options = SearchOptions {
        mode,
        seed: a.seed,
        folds: a.folds,
        ..SearchOptions::default()
    };
    let control = RunControl {
        workers: a.eval.workers,
        stop_after_step: a.stop_after_step,
        run_dir: Some(out.clone()),
    };
    let state = run_search(&cfg, evaluator.as_ref(), options, &control)?;
    finish(&out, &state)
}

fn cmd_resume(a: ResumeArgs) -> CliResult {
    let cfg = load_config(&a.config)?;
    let evaluator = build_evaluator(&a.eval, &cfg)?;
    let control = RunControl {
        workers: a.eval.workers,
        stop_after_step: a.stop_after_step,
        run_dir: None,
    };
    let state = resume(&a.run, evaluator.as_ref(), Some(&cfg), &control)?;
    finish(&a.run, &state)
}

fn finish(dir: &Path, state: &cellnas::RunState) -> CliResult {
    println!("run directory: {}", dir.display());
    if state.is_complete() {
        print!("{}", report(state).summary_text(&state.config.catalog()?));
    } else {
        println!("stopped after step {} of {}", state.steps.len() - 1, state.config.blocks);
    }
    Ok(())
}

fn cmd_report(run: &Path, compare: Option<&Path>) -> CliResult {
    let state = load_run(run)?;
    let rep = report(&state);
    let Some(other) = compare else {
        return emit(&rep.summary_text(&state.config.catalog()?));
    };
    let other_rep = report(&load_run(other)?);
    let (pnas, popnas) = match (rep.mode, other_rep.mode) {
        (SearchMode::Pnas, SearchMode::Popnas) => (&rep, &other_rep),
        (SearchMode::Popnas, SearchMode::Pnas) => (&other_rep, &rep),
        _ => {
            return Err(Failure::bad_input(anyhow!(
                "--compare needs one pnas run and one popnas run"
            )))
        }
    };
    emit(&compare_reports(pnas, popnas).summary_text())
}
