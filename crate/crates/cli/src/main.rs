use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use graphcast::config::RunConfig;
use graphcast::evaluation::{evaluate, parse_report_csv, render_table, MetricSpace, MetricsReport, TableFormat};
use graphcast::models::{load_params, save_params, ModelKind};
use graphcast::synthgen::{self, Process, SynthConfig};
use graphcast::Result;
use graphcast_cli::{artifact_stem, benchmark, prepare, run_job, write_preprocessed};

/// Exit status when `--strict` is set and some report rows failed.
const EXIT_FAILED_ROWS: u8 = 3;

#[derive(Parser)]
#[command(name = "graphcast", version, about = "Graph time-series demand forecasting benchmarks")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean the raw tables and write normalized data, stats and Â.
    Preprocess {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Train one product × model and save its parameters and history.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        product: String,
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score saved parameters on the test split.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        product: String,
        #[arg(long)]
        model: ModelKind,
        /// Directory holding `<product>_<model>.shapes/.bin`.
        #[arg(long)]
        params_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
    },
    /// Train and score every product × model; write reports and a manifest.
    Benchmark {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Exit with status 3 if any row failed.
        #[arg(long)]
        strict: bool,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
    },
    /// Re-render a report CSV.
    Report {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
}

impl From<Format> for TableFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => TableFormat::Csv,
            Format::Markdown => TableFormat::Markdown,
        }
    }
}

/// Config file first, then flags on top.
#[derive(Args)]
struct RunArgs {
    #[arg(long, env = "GRAPHCAST_DATA_DIR")]
    data_dir: PathBuf,
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    zero_threshold: Option<f64>,
    /// Comma-separated subset of MLP,GNN,GCN.
    #[arg(long, value_delimiter = ',')]
    models: Vec<ModelKind>,
    /// Comma-separated product codes.
    #[arg(long, value_delimiter = ',')]
    products: Vec<String>,
    /// Score in original units instead of z-scores.
    #[arg(long)]
    raw_units: bool,
    #[arg(long)]
    random_split: bool,
    /// Keep the parameters of the best validation epoch.
    #[arg(long)]
    select_best_val: bool,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_json(&read(p)?)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { cfg.$field = v; })*
            };
        }
        set!(epochs => epochs, batch_size => batch_size, lr => lr, window => window_size,
             horizon => horizon, seed => seed, zero_threshold => zero_fraction_threshold);
        if !self.models.is_empty() {
            cfg.models = self.models.clone();
        }
        if !self.products.is_empty() {
            cfg.products = Some(self.products.clone());
        }
        if self.raw_units {
            cfg.metric_space = MetricSpace::RawUnits;
        }
        cfg.random_split |= self.random_split;
        cfg.select_best_val |= self.select_best_val;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    products: usize,
    #[arg(long, default_value_t = 221)]
    timepoints: usize,
    #[arg(long, default_value_t = 0.3)]
    edge_probability: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// iid-noise, linear-ar or graph-diffusion.
    #[arg(long, default_value = "linear-ar")]
    process: Process,
    #[arg(long, default_value_t = 0.8)]
    coefficient: f64,
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => graphcast::Error::MissingFile(p.display().to_string()),
        _ => e.into(),
    })
}

fn product_index(prep: &graphcast_cli::Prepared, code: &str) -> Result<usize> {
    prep.product_index(code)
        .ok_or_else(|| graphcast::Error::Config(format!("product {code} not found after preprocessing")))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Preprocess { run, out } => {
            let cfg = run.config()?;
            let prep = prepare(&run.data_dir, &cfg)?;
            let files = write_preprocessed(&prep, &out)?;
            let removed = prep.clean.report.removed_products();
            println!(
                "{} products, {} time points; {} removed; wrote {} files to {}",
                prep.clean.products.len(),
                prep.clean.num_timepoints(),
                removed.len(),
                files.len(),
                out.display()
            );
            for r in &prep.clean.report.removals {
                let feature = r.feature.map(|f| format!(" in {f}")).unwrap_or_default();
                println!("  removed {}{feature}: {:?}", r.product, r.reason);
            }
        }
        Command::Synth(a) => {
            let cfg = SynthConfig {
                num_products: a.products,
                num_timepoints: a.timepoints,
                edge_probability: a.edge_probability,
                seed: a.seed,
                process: a.process,
                coefficient: a.coefficient,
                noise_sigma: a.sigma,
            };
            let (topo, _) = synthgen::generate(&cfg, &a.out)?;
            println!(
                "wrote {} products × {} time points, {} edges to {}",
                cfg.num_products,
                cfg.num_timepoints,
                topo.edges().len(),
                a.out.display()
            );
        }
        Command::Train { run, product, model, out } => {
            let cfg = run.config()?;
            let prep = prepare(&run.data_dir, &cfg)?;
            let job = run_job(&prep, &cfg, product_index(&prep, &product)?, model);
            let stem = artifact_stem(&job.product, model);
            if let (Some(params), Some(history)) = (&job.params, &job.history) {
                save_params(&out, &stem, params)?;
                fs::write(out.join(format!("{stem}.history.csv")), history.to_csv())?;
            }
            let mut report = MetricsReport::default();
            report.push(job.row);
            print!("{}", render_table(&report, TableFormat::Markdown));
            if report.failed_rows() > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Evaluate { run, product, model, params_dir, format } => {
            let cfg = run.config()?;
            let prep = prepare(&run.data_dir, &cfg)?;
            let p = product_index(&prep, &product)?;
            let params = load_params(&params_dir, &artifact_stem(&product, model))?;
            let forecaster = prep.forecaster(&cfg, p, model)?;
            let splits = prep.splits(&cfg, p)?;
            let stats = prep.stats.get(p, cfg.target);
            let row = evaluate(&forecaster, &params, &splits.test, &product, stats, cfg.metric_space)?;
            let mut report = MetricsReport::default();
            report.push(row);
            print!("{}", render_table(&report, format.into()));
        }
        Command::Benchmark { run, out, jobs, strict, format } => {
            let cfg = run.config()?;
            let outcome = benchmark(&run.data_dir, &out, &cfg, jobs)?;
            print!("{}", render_table(&outcome.report, format.into()));
            let failed = outcome.report.failed_rows();
            if failed > 0 {
                eprintln!("{failed} row(s) failed");
                if strict {
                    return Ok(ExitCode::from(EXIT_FAILED_ROWS));
                }
            }
        }
        Command::Report { input, format } => {
            let report = parse_report_csv(&read(&input)?)?;
            print!("{}", render_table(&report, format.into()));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
