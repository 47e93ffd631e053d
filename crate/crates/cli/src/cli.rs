//! Argument parsing and subcommand dispatch.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use trajsim::analysis::benchmark::{tracin_methods, BenchmarkOptions};
use trajsim::analysis::{compare_methods, cost_model, Method, SimulatorPredictor};
use trajsim::fitting::{build_design, check_identifiability, ParamsDocument};
use trajsim::run_model::{parse_run_log, serialize_run_set};
use trajsim::toy_lab::{
    generate_synthetic_runs, make_run_collection, CollectionConfig, CurriculumSource, L0Sampler, TracesDocument,
};
use trajsim::{CurriculumEdit, ExecMode, Run, RunRole, RunSet, SimulatorVariant, TestId};

use crate::api::{
    fit_request, simulate_request, whatif_request, ApiError, CurriculumDocument, FitRequest, InitialLoss, LambdaChoice,
    SimulateRequest, WhatIfRequest,
};
use crate::service::{serve, AppState};
use crate::store::{Store, RUNS_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Errors in how the command was invoked rather than in the data it read.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "trajsim", version, about = "Fit, simulate and evaluate learned training-run simulators")]
struct Cli {
    /// Run every data-parallel kernel sequentially.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Produce a run log from the toy trainer or from a known simulator.
    #[command(subcommand)]
    Generate(Generate),
    /// Fit simulators on the past runs of a run log.
    Fit(FitArgs),
    /// Roll fitted simulators out over a curriculum.
    Simulate(SimulateArgs),
    /// Compare a run's curriculum with an edited version of it.
    Whatif(WhatIfArgs),
    /// Score simulators (and optional TracIn-CP baselines) on future runs.
    Evaluate(EvaluateArgs),
    /// Report whether each test example's regression is identifiable.
    Diagnose(DiagnoseArgs),
    /// Compare the compute cost of fitting against TracIn-CP.
    Cost(CostArgs),
    /// Serve a store over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
enum Generate {
    /// Train softmax-regression runs on a Gaussian-mixture dataset.
    Toy(GenerateToyArgs),
    /// Sample runs whose losses follow a given simulator.
    Synthetic(GenerateSyntheticArgs),
}

#[derive(Debug, Args)]
struct GenerateToyArgs {
    /// TOML collection config; defaults are used for absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the fit runs' checkpoints (for TracIn-CP in `evaluate`).
    #[arg(long)]
    traces: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenerateSyntheticArgs {
    /// Params document holding the true simulators.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    runs: usize,
    /// Mark the last this-many runs as future runs.
    #[arg(long, default_value_t = 0)]
    future: usize,
    /// Use the block batching curriculum with batch size K (n must be divisible by K+1).
    #[arg(long, value_name = "K", conflicts_with_all = ["epochs", "batch_size"])]
    q_block: Option<usize>,
    /// Passes over the block curriculum.
    #[arg(long, default_value_t = 1, requires = "q_block")]
    repeats: usize,
    /// Randomly relabel example ids per run (block curriculum only).
    #[arg(long, requires = "q_block")]
    relabel: bool,
    /// Shuffled epochs over all n examples.
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    #[arg(long, default_value_t = 1)]
    batch_size: usize,
    /// Fixed initial loss.
    #[arg(long, conflicts_with_all = ["l0_low", "l0_high"])]
    l0: Option<f64>,
    #[arg(long, requires = "l0_high")]
    l0_low: Option<f64>,
    #[arg(long, requires = "l0_low")]
    l0_high: Option<f64>,
    /// Standard deviation of Gaussian noise added to each loss.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StoreArg {
    /// Store directory (holds runs.log and params/).
    #[arg(long, env = "TRAJSIM_STORE")]
    store: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Run log; defaults to the store's runs.log.
    #[arg(long)]
    runs: Option<PathBuf>,
    #[command(flatten)]
    store: StoreArg,
    /// Test example to fit (repeatable); defaults to all.
    #[arg(long = "test-id")]
    test_ids: Vec<TestId>,
    #[arg(long, default_value = "linear")]
    variant: SimulatorVariant,
    /// "auto" selects λ on the last --validation-runs past runs.
    #[arg(long, default_value = "auto")]
    lambda: LambdaChoice,
    #[arg(long, default_value_t = 2)]
    validation_runs: usize,
    /// Output file; without it the params are appended to the store.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    params: PathBuf,
    /// Curriculum document `{"steps": [[ids…], …]}`.
    #[arg(long, requires = "l0", conflicts_with_all = ["runs", "run_id"])]
    curriculum: Option<PathBuf>,
    /// Initial loss for every simulated test example.
    #[arg(long)]
    l0: Option<f64>,
    /// Take the curriculum and initial losses from a recorded run.
    #[arg(long, requires = "run_id")]
    runs: Option<PathBuf>,
    #[arg(long, requires = "runs")]
    run_id: Option<String>,
    #[arg(long = "test-id")]
    test_ids: Vec<TestId>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct WhatIfArgs {
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    runs: PathBuf,
    #[arg(long)]
    run_id: String,
    /// JSON array of edits; omitted means no edits.
    #[arg(long)]
    edits: Option<PathBuf>,
    #[arg(long = "test-id")]
    test_ids: Vec<TestId>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    runs: PathBuf,
    /// Params document to score (repeatable).
    #[arg(long, required = true)]
    params: Vec<PathBuf>,
    /// Checkpoint document from `generate toy --traces`; adds TracIn-CP baselines.
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Checkpoints per run for the subsampled TracIn-CP baseline.
    #[arg(long, default_value_t = 10)]
    tracin_checkpoints: usize,
    /// Emit the full report as JSON instead of a table.
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[arg(long)]
    runs: PathBuf,
    #[arg(long = "test-id")]
    test_ids: Vec<TestId>,
    #[arg(long, default_value = "linear")]
    variant: SimulatorVariant,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct CostArgs {
    /// Training examples.
    #[arg(long)]
    n: f64,
    /// Test examples.
    #[arg(long)]
    m: f64,
    /// TracIn-CP checkpoints.
    #[arg(long)]
    checkpoints: f64,
    /// Cost of one loss evaluation.
    #[arg(long, default_value_t = 1.0)]
    vl: f64,
    /// Cost of one gradient evaluation.
    #[arg(long, default_value_t = 2.0)]
    vg: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    store: StoreArg,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
}

/// Parses `argv`, runs the subcommand and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(matches!(cli.command, Command::Serve(_)));
    let mode = if cli.sequential { ExecMode::Sequential } else { ExecMode::default() };
    match dispatch(cli.command, mode) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                EXIT_USAGE
            } else {
                EXIT_DATA
            }
        }
    }
}

fn init_logging(verbose: bool) {
    let default = if verbose { "info" } else { "warn" };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

fn dispatch(command: Command, mode: ExecMode) -> Result<()> {
    match command {
        Command::Generate(Generate::Toy(args)) => generate_toy(args, mode),
        Command::Generate(Generate::Synthetic(args)) => generate_synthetic(args),
        Command::Fit(args) => fit(args, mode),
        Command::Simulate(args) => simulate(args),
        Command::Whatif(args) => whatif(args),
        Command::Evaluate(args) => evaluate(args, mode),
        Command::Diagnose(args) => diagnose(args),
        Command::Cost(args) => cost(args),
        Command::Serve(args) => serve_store(args, mode),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn read_runs(path: &Path) -> Result<RunSet> {
    parse_run_log(&read(path)?).with_context(|| format!("invalid run log {}", path.display()))
}

fn read_params(path: &Path) -> Result<ParamsDocument> {
    ParamsDocument::from_bytes(&read(path)?).with_context(|| format!("invalid params document {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    serde_json::from_slice(&read(path)?).with_context(|| format!("invalid {what} {}", path.display()))
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn api(e: ApiError) -> anyhow::Error {
    anyhow!(e)
}

fn generate_toy(args: GenerateToyArgs, mode: ExecMode) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => {
            let text = String::from_utf8(read(path)?).with_context(|| format!("{} is not UTF-8", path.display()))?;
            CollectionConfig::from_toml(&text).with_context(|| format!("invalid config {}", path.display()))?
        }
        None => CollectionConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let collection = make_run_collection(&config, mode)?;
    write_output(Some(&args.out), &serialize_run_set(&collection.run_set))?;
    if let Some(path) = &args.traces {
        let traces = collection.fit_traces();
        write_output(Some(path), &TracesDocument::new(&collection.problem, &traces).to_bytes())?;
    }
    eprintln!(
        "wrote {} runs ({} fit, {} validation, {} future) over n = {} examples and m = {} test examples",
        config.runs, config.fit_runs, config.validation_runs, config.test_runs, config.pool, config.test_examples
    );
    Ok(())
}

fn generate_synthetic(args: GenerateSyntheticArgs) -> Result<()> {
    let truth = read_params(&args.truth)?;
    if args.future > args.runs {
        return Err(usage(format!("--future {} exceeds --runs {}", args.future, args.runs)));
    }
    let source = match args.q_block {
        Some(k) => CurriculumSource::QMatrix { k, repeats: args.repeats, relabel: args.relabel },
        None => CurriculumSource::ShuffledEpochs { epochs: args.epochs, batch_size: args.batch_size },
    };
    let l0 = match (args.l0, args.l0_low, args.l0_high) {
        (Some(value), _, _) => L0Sampler::Fixed { value },
        (None, Some(low), Some(high)) => L0Sampler::Uniform { low, high },
        _ => L0Sampler::Fixed { value: 1.0 },
    };
    let generated = generate_synthetic_runs(&truth.simulators, args.runs, &source, &l0, args.noise, args.seed)?;
    let (n, m) = (generated.n(), generated.m());
    let first_future = args.runs - args.future;
    let runs: Vec<Run> = generated
        .into_runs()
        .into_iter()
        .enumerate()
        .map(|(r, run)| if r >= first_future { run.with_role(RunRole::Future) } else { run })
        .collect();
    let run_set = RunSet::with_default_names(n, m, runs)?;
    write_output(Some(&args.out), &serialize_run_set(&run_set))
}

fn fit(args: FitArgs, mode: ExecMode) -> Result<()> {
    let runs_path = match (&args.runs, &args.store.store) {
        (Some(path), _) => path.clone(),
        (None, Some(store)) => store.join(RUNS_FILE),
        (None, None) => return Err(usage("fit needs --runs or a store (--store / TRAJSIM_STORE)")),
    };
    if args.out.is_none() && args.store.store.is_none() {
        return Err(usage("fit needs --out or a store (--store / TRAJSIM_STORE) to write to"));
    }
    let runs = read_runs(&runs_path)?;
    let req = FitRequest {
        test_ids: (!args.test_ids.is_empty()).then_some(args.test_ids),
        variant: args.variant,
        lambda: args.lambda,
        validation_runs: args.validation_runs,
    };
    let doc = fit_request(&runs, &req, mode).map_err(api)?;
    for p in &doc.simulators {
        eprintln!("test example {}: {} λ = {}", p.test_example_id, p.variant.as_str(), p.lambda);
    }
    match (&args.out, &args.store.store) {
        (Some(out), _) => write_output(Some(out), &doc.to_bytes()),
        (None, Some(root)) => {
            let reference = Store::open(root)?.append_params(doc)?;
            println!("{reference}");
            Ok(())
        }
        (None, None) => unreachable!("checked above"),
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let params = read_params(&args.params)?;
    let (curriculum, l0) = match (&args.curriculum, args.l0, &args.runs, &args.run_id) {
        (Some(path), Some(l0), _, _) => {
            (read_json::<CurriculumDocument>(path, "curriculum document")?, InitialLoss::All(l0))
        }
        (None, _, Some(runs), Some(run_id)) => {
            let runs = read_runs(runs)?;
            let run = runs.run(run_id).ok_or_else(|| anyhow!("run {run_id} not found in the run log"))?;
            let l0 = run.trajectories().iter().map(|t| (t.test_example_id, t.initial_loss)).collect();
            (CurriculumDocument { steps: run.curriculum().steps().to_vec() }, InitialLoss::PerTest(l0))
        }
        _ => return Err(usage("simulate needs --curriculum with --l0, or --runs with --run-id")),
    };
    let req = SimulateRequest {
        params: args.params.display().to_string(),
        curriculum,
        l0,
        test_ids: (!args.test_ids.is_empty()).then_some(args.test_ids),
    };
    let doc = simulate_request(&params, &req).map_err(api)?;
    write_output(args.out.as_deref(), &doc.to_bytes())
}

fn whatif(args: WhatIfArgs) -> Result<()> {
    let params = read_params(&args.params)?;
    let runs = read_runs(&args.runs)?;
    let run = runs.run(&args.run_id).ok_or_else(|| anyhow!("run {} not found in the run log", args.run_id))?;
    let edits: Vec<CurriculumEdit> = match &args.edits {
        Some(path) => read_json(path, "edit list")?,
        None => Vec::new(),
    };
    let req = WhatIfRequest {
        params: args.params.display().to_string(),
        run_id: args.run_id.clone(),
        edits,
        test_ids: (!args.test_ids.is_empty()).then_some(args.test_ids),
    };
    let doc = whatif_request(&params, run, &req).map_err(api)?;
    write_output(args.out.as_deref(), &doc.to_bytes())
}

fn evaluate(args: EvaluateArgs, mode: ExecMode) -> Result<()> {
    let runs = read_runs(&args.runs)?;
    let future = runs.future_runs();
    if future.is_empty() {
        bail!("the run log has no future runs to evaluate on");
    }
    let mut methods: Vec<Method> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut test_ids: Vec<TestId> = Vec::new();
    for path in &args.params {
        let doc = read_params(path)?;
        for variant in SimulatorVariant::ALL {
            let sims: Vec<_> = doc.simulators.iter().filter(|p| p.variant == variant).cloned().collect();
            if sims.is_empty() {
                continue;
            }
            for p in &sims {
                if !test_ids.contains(&p.test_example_id) {
                    test_ids.push(p.test_example_id);
                }
            }
            let mut name = variant.as_str().to_string();
            if names.contains(&name) {
                let stem = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into());
                name = format!("{name}@{stem}");
            }
            names.push(name.clone());
            methods.push(Method::new(name, SimulatorPredictor::new(sims)));
        }
    }
    if let Some(path) = &args.traces {
        let doc =
            TracesDocument::from_bytes(&read(path)?).with_context(|| format!("invalid traces {}", path.display()))?;
        let (_, traces) = doc.into_traces()?;
        let options = BenchmarkOptions { tracin_checkpoints: args.tracin_checkpoints, ..BenchmarkOptions::default() };
        test_ids.sort_unstable();
        methods.extend(tracin_methods(&traces, runs.n(), &test_ids, &options, mode)?);
    }
    let report = compare_methods(&methods, &future, mode)?;
    let bytes = if args.json {
        let mut b = trajsim::docfmt::to_bytes(&report);
        b.push(b'\n');
        b
    } else {
        report.to_table().into_bytes()
    };
    write_output(args.out.as_deref(), &bytes)
}

fn diagnose(args: DiagnoseArgs) -> Result<()> {
    let runs = read_runs(&args.runs)?;
    let past = runs.past_runs();
    let ids = if args.test_ids.is_empty() { runs.test_ids() } else { args.test_ids };
    let mut reports = Vec::with_capacity(ids.len());
    for id in ids {
        let problem = build_design(&past, id, args.variant)?;
        reports.push((id, check_identifiability(&problem)));
    }
    let mut out = Vec::new();
    if args.json {
        let docs: Vec<_> =
            reports.iter().map(|(id, r)| serde_json::json!({ "test_example_id": id, "report": r })).collect();
        out = trajsim::docfmt::to_bytes(&docs);
        out.push(b'\n');
    } else {
        let list = |v: &[u32]| if v.is_empty() { "none".to_string() } else { format!("{v:?}") };
        for (id, r) in &reports {
            writeln!(
                out,
                "test {id}: {} rows × {} columns, rank {}; too few rows: {}; under-observed: {}; collinear: {}; identifiable: {}",
                r.rows,
                r.columns,
                r.rank,
                if r.too_few_rows { "yes" } else { "no" },
                list(&r.under_observed),
                list(&r.collinear),
                if r.all_conditions_pass() && r.full_rank { "yes" } else { "no" },
            )?;
        }
    }
    write_output(None, &out)
}

fn cost(args: CostArgs) -> Result<()> {
    let report = cost_model(args.n, args.m, args.checkpoints, args.vl, args.vg)?;
    let mut out = Vec::new();
    if args.json {
        out = trajsim::docfmt::to_bytes(&report);
        out.push(b'\n');
    } else {
        writeln!(out, "additive simulator fit: {}", report.additive_cost)?;
        writeln!(out, "linear simulator fit:   {}", report.linear_cost)?;
        writeln!(out, "TracIn-CP:              {}", report.tracin_cp_cost)?;
        writeln!(out, "break-even checkpoints: {}", report.crossover_checkpoints)?;
    }
    write_output(None, &out)
}

fn serve_store(args: ServeArgs, mode: ExecMode) -> Result<()> {
    let root = args.store.store.ok_or_else(|| usage("serve needs --store or TRAJSIM_STORE"))?;
    let store = Store::open(&root)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(serve(AppState::new(store, mode), args.bind))
}
