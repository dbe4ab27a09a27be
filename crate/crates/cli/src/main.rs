//! `edc`: simulate, fit, select orders and run seeded experiments.
use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use edc_core::bekk::{self, BekkOrder, ParamsFile, PathSample};
use edc_core::diagnostics::{self, DiagnosticTrace, TrueModel};
use edc_core::estimator::{self, BekkFamily, FitOptions};
use edc_core::experiment::{emit_report, ensure_writable, run_experiment, ExperimentConfig, Manifest};
use edc_core::markov::{self, MarkovFamily, MarkovSpec};
use edc_core::nested::{select_order, OrderIndex, PenaltyRule};

#[derive(Parser)]
#[command(name = "edc", version, about = "Penalized-likelihood order selection for BEKK and Markov models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a path from a parameter file.
    Simulate(SimulateArgs),
    /// Fit one order by maximum likelihood.
    Fit(FitArgs),
    /// Select an order up to a bound.
    Select(SelectArgs),
    /// Run a Monte Carlo experiment from a config or manifest.
    Experiment(ExperimentArgs),
    /// Export a diagnostic trace over a grid of sample sizes.
    Diagnose(DiagnoseArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Bekk,
    Markov,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "bekk")]
    model: Model,
    /// Markov alphabet size (markov only).
    #[arg(long, default_value_t = 2)]
    alphabet: usize,
}

#[derive(Args)]
struct OptimizerArgs {
    /// Random starts per fit (bekk only).
    #[arg(long)]
    starts: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
}

impl OptimizerArgs {
    fn apply(&self, mut opts: FitOptions) -> FitOptions {
        if let Some(s) = self.starts {
            opts.starts = s;
        }
        if let Some(m) = self.max_iterations {
            opts.max_iterations = m;
        }
        if let Some(g) = self.grad_tol {
            opts.grad_tol = g;
        }
        opts
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// JSON parameters: `{m,k1,k2,theta}` for bekk, `{alphabet,order,transitions}` for markov.
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    burn_in: usize,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    data: PathBuf,
    /// Order, e.g. `1,1` for bekk or `2` for markov.
    #[arg(long)]
    order: OrderIndex,
    /// Observations conditioned on (bekk; defaults to max(k1,k2)).
    #[arg(long)]
    start: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    data: PathBuf,
    /// Search bound K.
    #[arg(long)]
    bound: OrderIndex,
    /// `bic`, `aic`, `constant:<c>` or `powerlog:<a>,<b>,<d>,<e>`.
    #[arg(long, default_value = "bic")]
    penalty: PenaltyRule,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config (JSON).
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    config: Option<PathBuf>,
    /// Manifest of an earlier run; reruns it.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Penalty rules separated by `;`.
    #[arg(long, value_delimiter = ';')]
    penalties: Option<Vec<String>>,
    /// Acknowledge the bounded-moment assumption for bekk truths.
    #[arg(long)]
    assume_bounded_moments: bool,
    /// Worker threads; does not change the outputs.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Statistic {
    Hessian,
    ScoreLil,
    Underfit,
    Overfit,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// True parameters, same format as for `simulate`.
    #[arg(long)]
    params: PathBuf,
    #[arg(long, value_enum)]
    stat: Statistic,
    /// Order at which the statistic is evaluated.
    #[arg(long)]
    order: OrderIndex,
    #[arg(long, value_delimiter = ',', default_values_t = diagnostics::DEFAULT_GRID)]
    grid: Vec<usize>,
    /// Number of seeds; seeds are `seed, seed+1, ...`.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    burn_in: usize,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let causes: Vec<String> = err.chain().skip(1).map(|c| c.to_string()).collect();
            let line = serde_json::json!({ "error": err.to_string(), "causes": causes });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Select(a) => select(a),
        Command::Experiment(a) => experiment(a),
        Command::Diagnose(a) => diagnose(a),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("cannot parse {}", path.display()))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                ensure_writable(dir)?;
            }
            Box::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?)
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json<T: serde::Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut out = output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn read_path(path: &Path) -> Result<PathSample> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(PathSample::read_csv(BufReader::new(file)).with_context(|| format!("cannot read {}", path.display()))?)
}

fn read_symbols(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(markov::read_symbols_csv(BufReader::new(file)).with_context(|| format!("cannot read {}", path.display()))?)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let out = output(a.out.as_deref())?;
    match a.model.model {
        Model::Bekk => {
            let params = read_json::<ParamsFile>(&a.params)?.to_params()?;
            let path = bekk::simulate(&params, a.n, a.seed, a.burn_in)?;
            path.write_csv(out)?;
        }
        Model::Markov => {
            let spec: MarkovSpec = read_json(&a.params)?;
            spec.validate()?;
            let symbols = markov::markov_simulate(&spec, a.n, a.seed)?;
            markov::write_symbols_csv(&symbols, out)?;
        }
    }
    Ok(())
}

fn two_coords(k: &OrderIndex, what: &str) -> Result<(usize, usize)> {
    match k.coords() {
        [a, b] => Ok((*a, *b)),
        other => bail!("{what} must have two entries (k1,k2) for bekk, got {}", other.len()),
    }
}

fn fit(a: FitArgs) -> Result<()> {
    match a.model.model {
        Model::Bekk => {
            let data = read_path(&a.data)?;
            let (k1, k2) = two_coords(&a.order, "order")?;
            let mut opts = a.optimizer.apply(FitOptions::default());
            opts.seed = a.seed;
            opts.likelihood.start = a.start;
            let result = estimator::fit(&data, &BekkOrder::new(data.dim(), k1, k2), &opts)?;
            write_json(&result, a.out.as_deref())
        }
        Model::Markov => {
            let data = read_symbols(&a.data)?;
            let [k] = a.order.coords() else {
                bail!("order must have one entry for markov");
            };
            let fit = markov::markov_fit(&data, a.model.alphabet, *k)?;
            let value = serde_json::json!({
                "order": k,
                "log_likelihood": fit.log_likelihood,
                "spec": fit.spec,
            });
            write_json(&value, a.out.as_deref())
        }
    }
}

fn select(a: SelectArgs) -> Result<()> {
    let report = match a.model.model {
        Model::Bekk => {
            let data = read_path(&a.data)?;
            two_coords(&a.bound, "bound")?;
            let mut family = BekkFamily::new(data.dim());
            family.options = a.optimizer.apply(family.options);
            select_order(&family, &data, &a.bound, &a.penalty, a.seed)?
        }
        Model::Markov => {
            let data = read_symbols(&a.data)?;
            let family = MarkovFamily::new(a.model.alphabet)?;
            select_order(&family, &data, &a.bound, &a.penalty, a.seed)?
        }
    };
    write_json(&report, a.out.as_deref())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let mut config = match (&a.config, &a.manifest) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot open {}", path.display()))?;
            ExperimentConfig::from_json(&text)?
        }
        (None, Some(path)) => Manifest::read(path)?.config,
        (None, None) => bail!("either --config or --manifest is required"),
    };
    if let Some(out) = a.out {
        config.output_dir = Some(out);
    }
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(r) = a.replications {
        config.replications = r;
    }
    if let Some(n) = a.n {
        config.sample_sizes = n;
    }
    if let Some(p) = a.penalties {
        config.penalties = p;
    }
    if a.assume_bounded_moments {
        config.assume_bounded_moments = true;
    }
    config.validate()?;
    let dir = config
        .output_dir
        .clone()
        .context("no output directory: pass --out or set output_dir")?;
    ensure_writable(&dir)?;
    let results = run_experiment(&config, a.workers)?;
    let files = emit_report(&results, &dir)?;
    for p in [&files.frequencies, &files.reports, &files.manifest] {
        println!("{}", p.display());
    }
    Ok(())
}

fn diagnose(a: DiagnoseArgs) -> Result<()> {
    let seeds: Vec<u64> = (0..a.seeds).map(|i| a.seed.wrapping_add(i)).collect();
    let out = output(a.out.as_deref())?;
    let pool = rayon_pool(a.workers)?;
    let trace = match a.model.model {
        Model::Bekk => {
            let params = read_json::<ParamsFile>(&a.params)?;
            params.to_params()?;
            let truth = TrueModel {
                order: OrderIndex::new(vec![params.k1, params.k2])?,
                theta: params.theta.clone(),
            };
            two_coords(&a.order, "order")?;
            let mut family = BekkFamily::new(params.m);
            family.burn_in = a.burn_in;
            family.options = a.optimizer.apply(family.options);
            pool.install(|| trace_for(&family, &truth, &a, &seeds))?
        }
        Model::Markov => {
            let spec: MarkovSpec = read_json(&a.params)?;
            spec.validate()?;
            let truth = TrueModel {
                order: OrderIndex::new(vec![spec.order])?,
                theta: spec.theta(),
            };
            let family = MarkovFamily::new(spec.alphabet)?;
            pool.install(|| trace_for(&family, &truth, &a, &seeds))?
        }
    };
    trace.write_csv(out)?;
    Ok(())
}

fn trace_for<F: edc_core::NestedModelFamily>(
    family: &F,
    truth: &TrueModel,
    a: &DiagnoseArgs,
    seeds: &[u64],
) -> Result<DiagnosticTrace> {
    let k = &a.order;
    Ok(match a.stat {
        Statistic::Hessian => diagnostics::hessian_trace(family, truth, k, &a.grid, seeds)?,
        Statistic::ScoreLil => diagnostics::score_lil_trace(family, truth, k, &a.grid, seeds)?,
        Statistic::Underfit => diagnostics::underfit_gap_trace(family, truth, k, &a.grid, seeds)?,
        Statistic::Overfit => diagnostics::overfit_gap_trace(family, truth, k, &a.grid, seeds)?,
    })
}

fn rayon_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers.unwrap_or(0)).build()?)
}
