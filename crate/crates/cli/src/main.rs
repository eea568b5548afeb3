//! `fidforest`: fit, predict and run coverage studies with fiducial honest forests.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fiducial_forest::experiments::{
    minimal_tree_mass_trace, run_coverage_experiment, sigma_histogram, SimConfig, Target,
    TestFunction,
};
use fiducial_forest::{
    fit_ensemble, load_model, prediction_key, read_csv, read_feature_csv, save_model, write_report,
    ColumnRef, ColumnSpec, Error, ErrorClass, ForestParams, ModelArchive, ReportDocument,
    ReportFormat, SseMode,
};
use serde_json::{json, Value};

const USAGE_EXIT: u8 = 2;
const DATA_EXIT: u8 = 3;
const NUMERIC_EXIT: u8 = 4;

#[derive(Parser)]
#[command(
    name = "fidforest",
    version,
    about = "Honest random forests with fiducial intervals"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Master seed; every random choice derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Number of trees in the forest.
    #[arg(long, global = true)]
    trees: Option<usize>,
    /// Number of fiducial draws.
    #[arg(long, global = true)]
    draws: Option<usize>,
    /// Smallest number of growing rows allowed in a child node.
    #[arg(long, global = true)]
    min_node_size: Option<usize>,
    /// Features considered at each node.
    #[arg(long, global = true)]
    mtry: Option<usize>,
    /// Cap on the leaves of each tree.
    #[arg(long, global = true)]
    max_leaves: Option<usize>,
    /// Residual sum of squares used for tree weights and sigma draws.
    #[arg(long, global = true, value_enum)]
    sse: Option<SseArg>,
    /// Interval level.
    #[arg(long, global = true, default_value_t = 0.95)]
    level: f64,
    /// Report destination; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Worker threads; all outputs are identical for any thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Record wall-clock time in the report (makes reports differ between runs).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SseArg {
    Projection,
    HonestAll,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Mean,
    Sigma,
    Future,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Train a forest and fiducial ensemble on a CSV file and save the model.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// Response column name.
        #[arg(long)]
        target: String,
        /// Feature columns (comma separated); all other columns when absent.
        #[arg(long, value_delimiter = ',')]
        features: Option<Vec<String>>,
        /// Cell text marking a missing value, besides the empty cell.
        #[arg(long)]
        missing: Option<String>,
        /// Where to write the model archive.
        #[arg(long)]
        model: PathBuf,
    },
    /// Point estimates, confidence and prediction intervals for CSV rows.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Observed response column, reported next to the intervals when present.
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        missing: Option<String>,
    },
    /// Coverage study on a synthetic regression function.
    Simulate {
        #[arg(long, value_parser = parse_function)]
        function: TestFunction,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        /// Noise standard deviation.
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Which intervals to report.
        #[arg(long, value_enum, default_value_t = TargetArg::Mean)]
        target: TargetArg,
    },
    /// Histogram of the fiducial sigma sample from one synthetic data set.
    SigmaHist {
        #[arg(long, value_parser = parse_function)]
        function: TestFunction,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 30)]
        bins: usize,
    },
    /// Fiducial mass on the smallest correct trees as the sample size grows.
    Concentrate {
        /// Increasing sample sizes (comma separated).
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "100,200,500,1000,2000,5000"
        )]
        sizes: Vec<usize>,
        /// Number of independent seeds, starting at --seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
}

fn parse_function(s: &str) -> Result<TestFunction, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl GlobalArgs {
    fn forest_params(&self, base: ForestParams) -> ForestParams {
        let mut params = base;
        if let Some(t) = self.trees {
            params.n_trees = t;
        }
        if let Some(m) = self.min_node_size {
            params.min_node_size = m;
        }
        if let Some(m) = self.mtry {
            params.mtry = Some(m);
        }
        if let Some(l) = self.max_leaves {
            params.max_leaves = Some(l);
        }
        match self.sse {
            Some(SseArg::Projection) => params.sse_mode = SseMode::Projection,
            Some(SseArg::HonestAll) => params.sse_mode = SseMode::HonestAll,
            None => {}
        }
        params
    }

    fn report_format(&self) -> ReportFormat {
        match self.format {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }

    fn sim_config(&self, function: TestFunction, n: usize, p: usize, sigma: f64) -> SimConfig {
        let mut config = SimConfig::new(function, n, p);
        config.sigma = sigma;
        config.level = self.level;
        config.master_seed = self.seed;
        config.forest = self.forest_params(config.forest.clone());
        if let Some(d) = self.draws {
            config.draws = d;
        }
        config
    }
}

fn exit_code(error: &Error) -> u8 {
    match error.class() {
        ErrorClass::Usage => USAGE_EXIT,
        ErrorClass::Data => DATA_EXIT,
        ErrorClass::Numeric => NUMERIC_EXIT,
    }
}

fn emit(global: &GlobalArgs, report: ReportDocument) -> Result<(), Error> {
    let format = global.report_format();
    match &global.out {
        Some(path) => write_report(&report, path, format),
        None => {
            print!("{}", report.render(format)?);
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let global = &cli.global;
    if !(global.level > 0.0 && global.level < 1.0) {
        return Err(Error::InvalidInput(format!(
            "--level {} outside (0, 1)",
            global.level
        )));
    }
    let started = Instant::now();
    let report = match cli.command {
        Command::Fit {
            data,
            target,
            features,
            missing,
            model,
        } => {
            let mut spec = ColumnSpec::new(target.as_str());
            if let Some(features) = features {
                spec = spec.with_features(features.into_iter().map(ColumnRef::Name).collect());
            }
            if let Some(m) = &missing {
                spec = spec.with_missing_sentinel(m.clone());
            }
            let csv = read_csv(&data, &spec)?;
            let params = global.forest_params(ForestParams::default());
            let draws = global.draws.unwrap_or(1000);
            let config = json!({
                "command": "fit",
                "version": env!("CARGO_PKG_VERSION"),
                "seed": global.seed,
                "data": data,
                "target": target,
                "features": csv.dataset.feature_names(),
                "missing": missing,
                "params": params,
                "draws": draws,
            });
            log::info!("resolved configuration: {config}");
            let ensemble = fit_ensemble(&csv.dataset, &params, draws, global.seed)?;
            let archive = ModelArchive::new(&ensemble, global.seed, csv.dataset.fingerprint());
            save_model(&archive, &model)?;
            let weights = ensemble.weights();
            let effective = 1.0 / weights.weights.iter().map(|w| w * w).sum::<f64>();
            let sigmas = ensemble.sigmas();
            let record = json!({
                "rows": csv.dataset.n_rows(),
                "dropped_rows": csv.dropped_rows,
                "trees": ensemble.forest().trees.len(),
                "excluded_trees": weights.excluded.len(),
                "effective_trees": effective,
                "draws": ensemble.len(),
                "mean_sigma": sigmas.iter().sum::<f64>() / sigmas.len() as f64,
                "model": model,
            });
            ReportDocument::new(config, vec![record])?
        }
        Command::Predict {
            model,
            data,
            target,
            missing,
        } => {
            let archive = load_model(&model)?;
            let ensemble = archive.ensemble()?;
            let config = json!({
                "command": "predict",
                "version": env!("CARGO_PKG_VERSION"),
                "seed": archive.master_seed,
                "model": model,
                "data": data,
                "target": target,
                "missing": missing,
                "level": global.level,
            });
            log::info!("resolved configuration: {config}");
            let table = read_feature_csv(
                &data,
                &archive.dataset.feature_names,
                target.as_deref(),
                missing.as_deref(),
            )?;
            if table.dropped_rows > 0 {
                log::info!("dropped {} rows with missing features", table.dropped_rows);
            }
            let records = table
                .rows
                .iter()
                .zip(&table.row_ids)
                .zip(&table.extra)
                .map(|((x, &row), observed)| {
                    let mut stream = prediction_key(archive.master_seed, row).stream();
                    let p = ensemble.predict(x, global.level, &mut stream)?;
                    let mut record = json!({
                        "row": row,
                        "level": global.level,
                        "point": p.point,
                        "ci_lower": p.confidence.lower,
                        "ci_upper": p.confidence.upper,
                        "pi_lower": p.prediction.lower,
                        "pi_upper": p.prediction.upper,
                    });
                    if target.is_some() {
                        record["observed"] = json!(observed);
                        record["observed_in_pi"] =
                            json!(observed.map(|y| p.prediction.contains(y)));
                    }
                    Ok(record)
                })
                .collect::<Result<Vec<Value>, Error>>()?;
            ReportDocument::new(config, records)?
        }
        Command::Simulate {
            function,
            n,
            p,
            reps,
            sigma,
            target,
        } => {
            let mut config = global.sim_config(function, n, p, sigma);
            config.reps = reps;
            log::info!(
                "fidforest {}: coverage study {}",
                env!("CARGO_PKG_VERSION"),
                serde_json::to_string(&config).unwrap_or_default()
            );
            let report = run_coverage_experiment(&config)?;
            let wanted: &[Target] = match target {
                TargetArg::Mean => &[Target::ConditionalMean],
                TargetArg::Sigma => &[Target::Sigma],
                TargetArg::Future => &[Target::FutureResponse],
                TargetArg::All => &Target::ALL,
            };
            let records: Vec<_> = report
                .records
                .into_iter()
                .filter(|r| wanted.contains(&r.target))
                .collect();
            ReportDocument::from_records(with_command("simulate", &config), &records)?
        }
        Command::SigmaHist {
            function,
            n,
            p,
            sigma,
            bins,
        } => {
            let config = global.sim_config(function, n, p, sigma);
            log::info!(
                "fidforest {}: sigma histogram {}",
                env!("CARGO_PKG_VERSION"),
                serde_json::to_string(&config).unwrap_or_default()
            );
            let hist = sigma_histogram(&config, bins)?;
            let mut records: Vec<Value> = hist
                .bins
                .iter()
                .map(|b| json!({"kind": "bin", "lower": b.lower, "upper": b.upper, "count": b.count}))
                .collect();
            records.push(json!({
                "kind": "summary",
                "draws": hist.sigmas.len(),
                "mean_sigma": hist.mean,
                "true_sigma": sigma,
            }));
            ReportDocument::new(with_command("sigma-hist", &config), records)?
        }
        Command::Concentrate { sizes, seeds } => {
            if seeds == 0 {
                return Err(Error::InvalidInput("--seeds must be at least 1".into()));
            }
            let config = json!({
                "command": "concentrate",
                "version": env!("CARGO_PKG_VERSION"),
                "seed": global.seed,
                "seeds": seeds,
                "sizes": sizes,
            });
            log::info!("resolved configuration: {config}");
            let mut records = Vec::new();
            for seed in global.seed..global.seed + seeds {
                let trace = minimal_tree_mass_trace(&sizes, seed)?;
                for (n, mass) in trace.sample_sizes.iter().zip(&trace.masses) {
                    records.push(json!({"seed": seed, "n": n, "minimal_mass": mass}));
                }
            }
            ReportDocument::new(config, records)?
        }
    };
    let runtime = global.timing.then(|| started.elapsed().as_millis() as u64);
    emit(global, report.with_runtime_ms(runtime))
}

fn with_command(command: &str, config: &SimConfig) -> Value {
    let mut value = serde_json::to_value(config).unwrap_or(Value::Null);
    if let Value::Object(map) = &mut value {
        map.insert("command".into(), json!(command));
        map.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    }
    value
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.global.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(USAGE_EXIT);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(USAGE_EXIT);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
