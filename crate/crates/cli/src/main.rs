//! `pead`: batch driver for the drift-forecasting pipeline.

mod config;
mod output;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use config::{DriftTimingConfig, RunConfig, TacticModeConfig};
use output::{Outputs, SavedModel};
use pead_core::backtest::{moving_portfolio, quantile_stats};
use pead_core::bundle;
use pead_core::ga;
use pead_core::gbt::LossKind;
use pead_core::synth;
use pead_core::{Dataset, Study};

#[derive(Parser)]
#[command(
    name = "pead",
    about = "Post-earnings drift research pipeline: synthetic data, features, boosted trees, GA tuning, and walk-forward backtests",
    version
)]
struct Cli {
    /// TOML run configuration; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global random seed recorded into every output.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic CSV bundle with a planted drift signal.
    Synth {
        #[arg(long)]
        companies: Option<usize>,
        #[arg(long)]
        quarters: Option<usize>,
        #[arg(long)]
        noise_std: Option<f64>,
        #[arg(long, value_enum)]
        drift_timing: Option<DriftTimingConfig>,
    },
    /// Validate a bundle and summarize what was ingested.
    Ingest {},
    /// Build the engineered feature matrix and export it as CSV.
    Features {},
    /// Genetic-algorithm hyperparameter search with cross-validated fitness.
    Tune {
        #[command(flatten)]
        selector: SelectorArgs,
        #[arg(long, value_enum, default_value = "direction")]
        target: Target,
        #[arg(long)]
        max_generations: Option<usize>,
    },
    /// Fit an ensemble on the walk-forward training side and serialize it.
    Train {
        #[command(flatten)]
        selector: SelectorArgs,
        #[arg(long, value_enum, default_value = "direction")]
        target: Target,
    },
    /// Score every event in the bundle with a saved model.
    Predict {
        /// Saved model document (default `<out>/model.json`).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Walk-forward studies.
    #[command(subcommand)]
    Backtest(StudyCommand),
}

#[derive(Subcommand)]
enum StudyCommand {
    /// Repeated direction-accuracy runs.
    Direction {
        #[command(flatten)]
        selector: SelectorArgs,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Moving-window portfolio curve over prediction-ranked events.
    Portfolio {
        #[command(flatten)]
        selector: SelectorArgs,
        #[arg(long)]
        window: Option<usize>,
    },
    /// Top/bottom quantile portfolio returns.
    Quantile {
        #[command(flatten)]
        selector: SelectorArgs,
        #[arg(long)]
        window: Option<usize>,
    },
    /// Feature-occurrence table over repeated runs.
    Occurrence {
        #[command(flatten)]
        selector: SelectorArgs,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Delayed-entry inference after the day-one move.
    Tactic {
        #[command(flatten)]
        selector: SelectorArgs,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, value_enum)]
        tactic_mode: Option<TacticModeConfig>,
    },
}

#[derive(clap::Args)]
struct SelectorArgs {
    /// Test on events of this fiscal year.
    #[arg(long)]
    year: Option<i32>,
    /// Test on events of this fiscal quarter, e.g. 2018Q4.
    #[arg(long)]
    quarter: Option<String>,
    /// Test on events announcing on this date (ISO).
    #[arg(long)]
    date: Option<String>,
    /// Restrict both sides to one sector.
    #[arg(long)]
    sector: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Target {
    /// Classify the drift direction (logistic loss).
    Direction,
    /// Regress the cumulative abnormal return level (squared error).
    Car,
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = Some(out.clone());
    }
    if let Some(threads) = cli.threads {
        config.threads = Some(threads);
    }
    if let Some(threads) = config.threads {
        anyhow::ensure!(threads >= 1, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("cannot configure thread pool")?;
    }

    let out_dir = config.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    let outputs = Outputs::new(out_dir, config.seed, config.hash())?;

    match cli.command {
        Command::Synth {
            companies,
            quarters,
            noise_std,
            drift_timing,
        } => {
            let mut synth_config = config.synth_config();
            if let Some(v) = companies {
                synth_config.companies = v;
            }
            if let Some(v) = quarters {
                synth_config.quarters = v;
            }
            if let Some(v) = noise_std {
                synth_config.noise_std = v;
            }
            if let Some(t) = drift_timing {
                synth_config.drift_timing = t.into();
            }
            let raw: Dataset = synth::generate(&synth_config)?;
            let bundle_dir = outputs.dir.join("bundle");
            let paths = bundle::write_bundle(&raw, &bundle_dir)?;
            outputs.write_metadata(&bundle_dir)?;
            println!(
                "wrote synthetic bundle: {} companies, {} events, {} trading days -> {}",
                raw.prices.len(),
                raw.events.len(),
                raw.calendar.len(),
                bundle_dir.display()
            );
            println!(
                "  prices={} index={} fundamentals={} short_interest={}",
                paths.prices.display(),
                paths.index.display(),
                paths.fundamentals.display(),
                paths.short_interest.display()
            );
        }

        Command::Ingest {} => {
            let (raw, stats) = load_dataset(&config)?;
            let mut summary = format!(
                "companies: {}\nevents accepted: {}\nevents dropped: {}\ncalendar: {} trading days ({}..{})\n",
                raw.prices.len(),
                stats.events_accepted,
                stats.events_dropped,
                raw.calendar.len(),
                raw.calendar.first(),
                raw.calendar.last()
            );
            for (reason, count) in &stats.drop_reasons {
                summary.push_str(&format!("  dropped[{reason}]: {count}\n"));
            }
            print!("{summary}");
            outputs.write_stamped("ingest_summary.txt", &summary)?;
        }

        Command::Features {} => {
            let (raw, _) = load_dataset(&config)?;
            let spec = config.features.resolve();
            let (matrix, stats) = pead_core::features::build_matrix(&raw, &spec)?;
            let path = outputs.write_stamped("matrix.csv", &matrix_csv(&matrix))?;
            println!(
                "matrix: {} rows x {} columns ({} rows dropped for missing data) -> {}",
                matrix.rows(),
                matrix.cols(),
                stats.rows_dropped_missing,
                path.display()
            );
        }

        Command::Tune {
            selector,
            target,
            max_generations,
        } => {
            let study = build_study(&config)?;
            let plan = study.split(&config.selector(
                selector.year,
                selector.quarter.as_deref(),
                selector.date.as_deref(),
                selector.sector.as_deref(),
            )?)?;
            let space = config.search_space()?;
            let mut ga_config = config.ga_config();
            if let Some(v) = max_generations {
                ga_config.max_generations = v;
            }
            let (loss, labels) = target_labels(&study, target);
            let train_matrix = study.matrix.select_rows(&plan.train);
            let train_labels: Vec<f64> = plan.train.iter().map(|&i| labels[i]).collect();
            let base = config.train.clone();
            let (tuned, result) = ga::optimize_train_config(
                &train_matrix,
                &train_labels,
                &space,
                &ga_config,
                &base,
                loss,
            )?;

            let mut history = String::from("generation,best,mean\n");
            for entry in &result.history {
                history.push_str(&format!(
                    "{},{},{}\n",
                    entry.generation, entry.best, entry.mean
                ));
            }
            outputs.write_stamped("ga_history.csv", &history)?;
            let tuned_toml =
                toml::to_string(&tuned).context("tuned config serializes")?;
            let path = outputs.write_stamped("tuned_train.toml", &tuned_toml)?;
            println!(
                "tuned hyperparameters (cv fitness {:.6}, {} generations) -> {}",
                result.best_fitness,
                result.history.len(),
                path.display()
            );
        }

        Command::Train { selector, target } => {
            let study = build_study(&config)?;
            let plan = study.split(&config.selector(
                selector.year,
                selector.quarter.as_deref(),
                selector.date.as_deref(),
                selector.sector.as_deref(),
            )?)?;
            let (loss, labels) = target_labels(&study, target);
            let train_matrix = study.matrix.select_rows(&plan.train);
            let train_labels: Vec<f64> = plan.train.iter().map(|&i| labels[i]).collect();
            let mut train_config = config.train.clone();
            train_config.seed = config.seed;
            let model = pead_core::gbt::train(&train_matrix, &train_labels, &train_config, loss)?;
            let saved = SavedModel {
                seed: config.seed,
                config_hash: config.hash(),
                model,
            };
            let body = serde_json::to_string_pretty(&saved)?;
            let path = outputs.write_raw("model.json", &body)?;
            println!(
                "trained {} trees on {} events -> {}",
                saved.model.trees.len(),
                plan.train.len(),
                path.display()
            );
        }

        Command::Predict { model } => {
            let model_path = model.unwrap_or_else(|| outputs.dir.join("model.json"));
            let text = std::fs::read_to_string(&model_path)
                .with_context(|| format!("cannot read model {}", model_path.display()))?;
            let saved: SavedModel = serde_json::from_str(&text)
                .with_context(|| format!("cannot parse model {}", model_path.display()))?;
            let (raw, _) = load_dataset(&config)?;
            let spec = config.features.resolve();
            let (matrix, _) = pead_core::features::build_matrix(&raw, &spec)?;
            let mut body = String::from("company_id,fiscal_quarter,prediction\n");
            for i in 0..matrix.rows() {
                let key = &matrix.row_keys()[i];
                let p = saved.model.predict(matrix.row(i))?;
                body.push_str(&format!("{},{},{}\n", key.company, key.quarter, p));
            }
            let path = outputs.write_stamped("predictions.csv", &body)?;
            println!("scored {} events -> {}", matrix.rows(), path.display());
        }

        Command::Backtest(study_command) => run_backtest(&config, &outputs, study_command)?,
    }
    Ok(())
}

fn run_backtest(config: &RunConfig, outputs: &Outputs, command: StudyCommand) -> Result<()> {
    let study = build_study(config)?;
    let mut train_config = config.train.clone();
    train_config.seed = config.seed;

    match command {
        StudyCommand::Direction { selector, runs } => {
            let plan = study.split(&resolve_selector(config, &selector)?)?;
            let runs = runs.unwrap_or(config.backtest.runs);
            let report = study.direction_study(&plan, &train_config, runs)?;
            outputs.write_stamped("direction.csv", &report.csv())?;
            outputs.write_stamped("direction.txt", &(report.summary() + "\n"))?;
            println!("{}", report.summary());
        }
        StudyCommand::Portfolio { selector, window } => {
            let plan = study.split(&resolve_selector(config, &selector)?)?;
            let window = window.unwrap_or(config.backtest.window);
            let forecast = study.rank_forecast(&plan, &train_config)?;
            let curve = moving_portfolio(
                &forecast.predicted,
                &forecast.actual,
                &forecast.keys,
                window,
            )?;
            let path = outputs.write_stamped("portfolio.csv", &curve.csv())?;
            println!(
                "portfolio curve: {} points, window {} -> {}",
                curve.points.len(),
                window,
                path.display()
            );
        }
        StudyCommand::Quantile { selector, window } => {
            let plan = study.split(&resolve_selector(config, &selector)?)?;
            let window = window.unwrap_or(config.backtest.window);
            let forecast = study.rank_forecast(&plan, &train_config)?;
            let report = quantile_stats(
                &forecast.predicted,
                &forecast.actual,
                &forecast.keys,
                window,
            )?;
            outputs.write_stamped("quantile.csv", &report.csv())?;
            outputs.write_stamped("quantile.txt", &(report.summary() + "\n"))?;
            println!("{}", report.summary());
        }
        StudyCommand::Occurrence { selector, runs } => {
            let plan = study.split(&resolve_selector(config, &selector)?)?;
            let runs = runs.unwrap_or(config.backtest.runs);
            let table = study.occurrence_study(&plan, &train_config, runs, 5)?;
            let path = outputs.write_stamped("occurrence.csv", &table.csv())?;
            println!(
                "occurrence table over {} runs -> {}",
                table.runs,
                path.display()
            );
        }
        StudyCommand::Tactic {
            selector,
            epsilon,
            tactic_mode,
        } => {
            let plan = study.split(&resolve_selector(config, &selector)?)?;
            let epsilon = epsilon.unwrap_or(config.backtest.epsilon);
            let mode = tactic_mode.unwrap_or(config.backtest.tactic_mode).into();
            let report = study.tactic_study(&plan, &train_config, epsilon, mode)?;
            outputs.write_stamped("tactic.csv", &report.csv())?;
            outputs.write_stamped("tactic.txt", &(report.summary() + "\n"))?;
            println!("{}", report.summary());
        }
    }
    Ok(())
}

fn resolve_selector(
    config: &RunConfig,
    args: &SelectorArgs,
) -> Result<pead_core::backtest::SplitSelector> {
    config.selector(
        args.year,
        args.quarter.as_deref(),
        args.date.as_deref(),
        args.sector.as_deref(),
    )
}

fn load_dataset(config: &RunConfig) -> Result<(Dataset, bundle::IngestStats)> {
    let paths = config.bundle_paths()?;
    Ok(bundle::ingest(&paths)?)
}

fn build_study(config: &RunConfig) -> Result<Study> {
    let (raw, _) = load_dataset(config)?;
    let spec = config.features.resolve();
    let (study, _) = Study::build(&raw, &spec, config.backtest.horizon)?;
    Ok(study)
}

fn target_labels(study: &Study, target: Target) -> (LossKind, Vec<f64>) {
    match target {
        Target::Direction => (LossKind::Logistic, study.direction_labels()),
        Target::Car => (LossKind::SquaredError, study.car.clone()),
    }
}

fn matrix_csv(matrix: &pead_core::Matrix) -> String {
    let mut body = String::from("company_id,fiscal_quarter");
    for name in matrix.columns() {
        body.push(',');
        body.push_str(name);
    }
    body.push('\n');
    for i in 0..matrix.rows() {
        let key = &matrix.row_keys()[i];
        body.push_str(&format!("{},{}", key.company, key.quarter));
        for j in 0..matrix.cols() {
            body.push(',');
            if let Some(v) = matrix.get(i, j) {
                body.push_str(&v.to_string());
            }
        }
        body.push('\n');
    }
    body
}
