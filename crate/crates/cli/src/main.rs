use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use openset::data::load_features;
use openset::eval::{build_score_table, evaluate, write_oscr_csv, write_roc_csv, EvalMode};
use openset::harness::{
    build_dataset, derive_seed, export_report, fit_model, grid_search, load_test_split, run_experiment, summary_text,
    write_split, ExperimentConfig, ModelParams, RunReport, REPORT_FILE,
};
use openset::mixup::{centroid_stats, generate_mixups, stats_json, write_mixups, MixupConfig};
use openset::model::TrainedModel;
use openset::strategy::{apply_strategy, StrategyKind};

#[derive(Parser)]
#[command(name = "openset", version, about = "Open-set recognition experiments")]
struct Cli {
    /// Log level filter (error, warn, info, debug).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed; overrides the config value.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build the dataset of one repeat and write its split files.
    Split {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        repeat: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Tune and train one configured model on a feature file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Model name (or family) from the config.
        #[arg(long)]
        model: String,
        #[arg(long)]
        strategy: StrategyKind,
        #[arg(long)]
        train: PathBuf,
        /// Feature files start with a header row.
        #[arg(long)]
        header: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Score a test file with a trained model and write metrics and curves.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// One role per test row: kc, kuc or uuc.
        #[arg(long)]
        roles: Option<PathBuf>,
        #[arg(long)]
        header: bool,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Synthesize unknowns by mixup from the known rows of a feature file.
    Mixup {
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        ratio: f64,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long)]
        header: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Run every cell of an experiment config and export the report.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads; defaults to all cores.
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Print the summary table of an exported run.
    Report {
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).init();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Returns whether every cell succeeded.
fn run(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Split { config, repeat, common } => {
            let cfg = load_config(&config, common.seed)?;
            let seed = derive_seed(cfg.seed, &["split", &repeat.to_string()]);
            let ds = build_dataset(&cfg.dataset, seed)?;
            for f in write_split(&ds, &common.out_dir)? {
                println!("{}", f.display());
            }
        }
        Command::Train {
            config,
            model,
            strategy,
            train,
            header,
            common,
        } => {
            let cfg = load_config(&config, common.seed)?;
            let spec = cfg
                .models
                .iter()
                .find(|m| m.label() == model)
                .with_context(|| format!("no model named {model} in the config"))?;
            let samples = load_features(&train, header)?;
            let seed = derive_seed(cfg.seed, &["grid", spec.label(), "0"]);
            let tuned = grid_search(&spec.lattice()?, &samples, cfg.folds, seed)?;
            let view = apply_strategy(&samples, strategy)?;
            let trained = fit_model(&tuned.best, &view, seed)?;
            fs::create_dir_all(&common.out_dir)?;
            let path = common.out_dir.join("model.json");
            fs::write(&path, serde_json::to_string(&trained)?)?;
            let params: &ModelParams = &tuned.best;
            fs::write(
                common.out_dir.join("params.json"),
                serde_json::to_string_pretty(params)?,
            )?;
            println!("{}", path.display());
        }
        Command::Eval {
            model,
            test,
            roles,
            header,
            out_dir,
        } => {
            let trained: TrainedModel = serde_json::from_str(&fs::read_to_string(&model)?)
                .with_context(|| format!("parsing {}", model.display()))?;
            let test = load_test_split(&test, roles.as_deref(), header)?;
            let table = build_score_table(&trained, &test)?;
            fs::create_dir_all(&out_dir)?;
            let mut metrics = Vec::new();
            for mode in EvalMode::ALL {
                match evaluate(&table, mode) {
                    Ok(ev) => {
                        let mut buf = Vec::new();
                        write_oscr_csv(&mut buf, &ev.oscr)?;
                        fs::write(out_dir.join(format!("{mode}-oscr.csv")), buf)?;
                        let mut buf = Vec::new();
                        write_roc_csv(&mut buf, &ev.roc)?;
                        fs::write(out_dir.join(format!("{mode}-roc.csv")), buf)?;
                        println!("{mode}: auc {:.4}", ev.metrics.auc);
                        metrics.push(ev.metrics);
                    }
                    Err(e) => log::warn!("{mode} evaluation skipped: {e}"),
                }
            }
            if metrics.is_empty() {
                bail!("no evaluation mode had both known and unknown rows");
            }
            fs::write(out_dir.join("metrics.json"), serde_json::to_string_pretty(&metrics)?)?;
        }
        Command::Mixup {
            train,
            ratio,
            alpha,
            header,
            common,
        } => {
            let known: Vec<_> = load_features(&train, header)?
                .into_iter()
                .filter(|s| !s.label.is_unknown())
                .collect();
            let stats = centroid_stats(&known)?;
            let cfg = MixupConfig {
                ratio,
                alpha,
                seed: common.seed.unwrap_or(0),
                ..MixupConfig::default()
            };
            let batch = generate_mixups(&known, &stats, &cfg)?;
            fs::create_dir_all(&common.out_dir)?;
            let mut buf = Vec::new();
            write_mixups(&mut buf, &batch)?;
            fs::write(common.out_dir.join("mixups.csv"), buf)?;
            fs::write(
                common.out_dir.join("mixup_stats.json"),
                stats_json(&[batch.stats.clone()])?,
            )?;
            println!(
                "accepted {} of {} attempts ({} requested)",
                batch.stats.accepted, batch.stats.attempted, batch.stats.requested
            );
            return Ok(!batch.is_short());
        }
        Command::Sweep { config, jobs, common } => {
            let cfg = load_config(&config, common.seed)?;
            let report = run_experiment(&cfg, jobs)?;
            export_report(&report, &common.out_dir)?;
            print!("{}", summary_text(&report.summary));
            for c in report.failed() {
                eprintln!("cell {} failed: {}", c.id, c.error.as_deref().unwrap_or("?"));
            }
            return Ok(report.all_ok());
        }
        Command::Report { out_dir } => {
            let path = out_dir.join(REPORT_FILE);
            let report: RunReport = serde_json::from_str(&fs::read_to_string(&path)?)
                .with_context(|| format!("parsing {}", path.display()))?;
            print!("{}", summary_text(&report.summary));
            return Ok(report.all_ok());
        }
    }
    Ok(true)
}
