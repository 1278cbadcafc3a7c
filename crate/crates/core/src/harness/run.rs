use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{load_features, make_split, synth_blobs, synth_toy, OpenSetDataset, Sample, SplitSpec};
use crate::error::{Error, Result};
use crate::eval::{build_score_table, evaluate, Curve, EvalMode, Metrics};
use crate::mixup::{centroid_stats, generate_mixups, MixupConfig, MixupStats};
use crate::strategy::{apply_strategy, StrategyKind};

use super::config::{derive_seed, DatasetSource, ExperimentConfig, ModelParams, ModelSpec};
use super::grid::{fit_model, grid_search};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Genuine,
    Mixup,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellCurves {
    pub mode: EvalMode,
    pub oscr: Curve,
    pub roc: Curve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub id: String,
    pub model: String,
    pub strategy: StrategyKind,
    pub source: Source,
    pub ratio: Option<f64>,
    pub alpha: Option<f64>,
    pub repeat: usize,
    pub seed: u64,
    pub status: Status,
    pub error: Option<String>,
    /// True when the strategy fell back to baseline for lack of unknowns.
    pub degraded: bool,
    pub params: Option<ModelParams>,
    pub mixup: Option<MixupStats>,
    pub metrics: Vec<Metrics>,
    /// Curve files relative to the run directory, in `metrics` order.
    pub curve_files: Vec<String>,
    #[serde(skip)]
    pub curves: Vec<CellCurves>,
    /// Seconds; kept out of the JSON so reports stay byte-identical.
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub strategy: StrategyKind,
    pub source: Source,
    pub ratio: Option<f64>,
    pub alpha: Option<f64>,
    pub mode: EvalMode,
    /// Successful repeats averaged into this row.
    pub repeats: usize,
    pub auc: f64,
    /// Mean CCR at each FPR target, keyed like `0.001`.
    pub ccr_at: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_digest: String,
    pub master_seed: u64,
    pub repeats: usize,
    pub cells: Vec<CellReport>,
    pub summary: Vec<SummaryRow>,
}

impl RunReport {
    pub fn all_ok(&self) -> bool {
        self.cells.iter().all(|c| c.status == Status::Ok)
    }

    pub fn failed(&self) -> impl Iterator<Item = &CellReport> {
        self.cells.iter().filter(|c| c.status == Status::Error)
    }
}

/// Dataset of one repeat.
pub fn build_dataset(source: &DatasetSource, seed: u64) -> Result<OpenSetDataset> {
    let ds = match source {
        DatasetSource::Toy { toy } => synth_toy(toy, seed)?,
        DatasetSource::Blobs {
            n_classes,
            per_class,
            dim,
            spread,
            split,
        } => {
            let pool = synth_blobs(*n_classes, *per_class, *dim, *spread, seed)?;
            make_split(&pool, &SplitSpec { seed, ..split.clone() })?
        }
        DatasetSource::Csv { path, header, split } => {
            let pool = load_features(path, *header)?;
            make_split(&pool, &SplitSpec { seed, ..split.clone() })?
        }
    };
    ds.validate()?;
    Ok(ds)
}

fn fmt_num(v: f64) -> String {
    // ids must be path-safe and stable
    v.to_string().replace('.', "p")
}

struct Job<'a> {
    spec: &'a ModelSpec,
    params: &'a ModelParams,
    strategy: StrategyKind,
    mixup: Option<(f64, f64)>,
    repeat: usize,
    data: &'a OpenSetDataset,
}

fn cell_id(model: &str, strategy: StrategyKind, mixup: Option<(f64, f64)>, repeat: usize) -> String {
    let source = match mixup {
        None => "genuine".to_string(),
        Some((r, a)) => format!("mixup-r{}-a{}", fmt_num(r), fmt_num(a)),
    };
    format!("{model}-{strategy}-{source}-rep{repeat}")
}

fn run_job(cfg: &ExperimentConfig, job: &Job<'_>) -> CellReport {
    let start = Instant::now();
    let rep = job.repeat.to_string();
    let coords: Vec<String> = match job.mixup {
        None => vec![
            "cell".into(),
            job.spec.label().into(),
            job.strategy.to_string(),
            "genuine".into(),
            rep.clone(),
        ],
        Some((r, a)) => vec![
            "cell".into(),
            job.spec.label().into(),
            job.strategy.to_string(),
            r.to_string(),
            a.to_string(),
            rep.clone(),
        ],
    };
    let coord_refs: Vec<&str> = coords.iter().map(String::as_str).collect();
    let seed = derive_seed(cfg.seed, &coord_refs);

    let mut cell = CellReport {
        id: cell_id(job.spec.label(), job.strategy, job.mixup, job.repeat),
        model: job.spec.label().to_string(),
        strategy: job.strategy,
        source: if job.mixup.is_some() {
            Source::Mixup
        } else {
            Source::Genuine
        },
        ratio: job.mixup.map(|m| m.0),
        alpha: job.mixup.map(|m| m.1),
        repeat: job.repeat,
        seed,
        status: Status::Ok,
        error: None,
        degraded: false,
        params: Some(job.params.clone()),
        mixup: None,
        metrics: Vec::new(),
        curve_files: Vec::new(),
        curves: Vec::new(),
        wall_time: 0.0,
    };

    let outcome = (|| -> Result<()> {
        let train: Vec<Sample> = match job.mixup {
            None => job.data.train.clone(),
            Some((ratio, alpha)) => {
                let known: Vec<Sample> = job.data.known_train().cloned().collect();
                let stats = centroid_stats(&known)?;
                // α is not part of the stream seed so every α filters the same candidates
                let mcfg = MixupConfig {
                    ratio,
                    alpha,
                    seed: derive_seed(cfg.seed, &["mixup", &ratio.to_string(), &rep]),
                    ..MixupConfig::default()
                };
                let batch = generate_mixups(&known, &stats, &mcfg)?;
                cell.mixup = Some(batch.stats.clone());
                let mut train = known;
                train.extend(batch.to_samples());
                train
            }
        };
        let view = apply_strategy(&train, job.strategy)?;
        cell.degraded = view.degraded;
        let model = fit_model(job.params, &view, seed)?;
        let table = build_score_table(&model, &job.data.test)?;
        for &mode in &cfg.eval_modes {
            let ev = evaluate(&table, mode)?;
            cell.curve_files.push(format!("curves/{}-{}-oscr.csv", cell.id, mode));
            cell.curve_files.push(format!("curves/{}-{}-roc.csv", cell.id, mode));
            cell.metrics.push(ev.metrics);
            cell.curves.push(CellCurves {
                mode,
                oscr: ev.oscr,
                roc: ev.roc,
            });
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        log::error!("cell {} failed: {e}", cell.id);
        cell.status = Status::Error;
        cell.error = Some(e.to_string());
        cell.metrics.clear();
        cell.curves.clear();
        cell.curve_files.clear();
    }
    cell.wall_time = start.elapsed().as_secs_f64();
    cell
}

fn error_cell(
    spec: &ModelSpec,
    strategy: StrategyKind,
    mixup: Option<(f64, f64)>,
    repeat: usize,
    err: &Error,
) -> CellReport {
    CellReport {
        id: cell_id(spec.label(), strategy, mixup, repeat),
        model: spec.label().to_string(),
        strategy,
        source: if mixup.is_some() {
            Source::Mixup
        } else {
            Source::Genuine
        },
        ratio: mixup.map(|m| m.0),
        alpha: mixup.map(|m| m.1),
        repeat,
        seed: 0,
        status: Status::Error,
        error: Some(err.to_string()),
        degraded: false,
        params: None,
        mixup: None,
        metrics: Vec::new(),
        curve_files: Vec::new(),
        curves: Vec::new(),
        wall_time: 0.0,
    }
}

/// Runs every cell of the config. `jobs` bounds the worker threads; results
/// do not depend on it.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<RunReport> {
    cfg.validate()?;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = jobs {
            b = b.num_threads(n.max(1));
        }
        b.build().map_err(|e| Error::config(format!("thread pool: {e}")))?
    };

    let mut cells = Vec::new();
    for repeat in 0..cfg.repeats {
        let rep = repeat.to_string();
        let data = build_dataset(&cfg.dataset, derive_seed(cfg.seed, &["split", &rep]))?;

        // one grid search per model and repeat, reused by all its cells
        let tuned: Vec<Result<ModelParams>> = pool.install(|| {
            cfg.models
                .par_iter()
                .map(|spec| {
                    let lattice = spec.lattice()?;
                    let seed = derive_seed(cfg.seed, &["grid", spec.label(), &rep]);
                    grid_search(&lattice, &data.train, cfg.folds, seed).map(|r| r.best)
                })
                .collect()
        });

        let mut plan: Vec<(usize, StrategyKind, Option<(f64, f64)>)> = Vec::new();
        for m in 0..cfg.models.len() {
            for &s in &cfg.strategies {
                plan.push((m, s, None));
            }
        }
        if !cfg.mixup.is_empty() {
            for &ratio in &cfg.mixup.ratios {
                for &alpha in &cfg.mixup.alphas {
                    for name in &cfg.mixup.models {
                        let m = cfg.models.iter().position(|m| m.label() == name).expect("validated");
                        for &s in &cfg.mixup.strategies {
                            plan.push((m, s, Some((ratio, alpha))));
                        }
                    }
                }
            }
        }

        let mut slots: Vec<Option<CellReport>> = Vec::new();
        let mut ready: Vec<(usize, Job<'_>)> = Vec::new();
        for (m, strategy, mixup) in plan {
            let spec = &cfg.models[m];
            if !spec.family.supports(strategy) {
                log::info!("skipping {} with {strategy}: unsupported combination", spec.label());
                continue;
            }
            match &tuned[m] {
                Ok(params) => {
                    ready.push((
                        slots.len(),
                        Job {
                            spec,
                            params,
                            strategy,
                            mixup,
                            repeat,
                            data: &data,
                        },
                    ));
                    slots.push(None);
                }
                Err(e) => slots.push(Some(error_cell(spec, strategy, mixup, repeat, e))),
            }
        }
        let done: Vec<(usize, CellReport)> =
            pool.install(|| ready.par_iter().map(|(i, j)| (*i, run_job(cfg, j))).collect());
        for (i, c) in done {
            slots[i] = Some(c);
        }
        cells.extend(slots.into_iter().map(|c| c.expect("every slot filled")));
    }

    let summary = summarize(&cells);
    Ok(RunReport {
        config_digest: cfg.digest()?,
        master_seed: cfg.seed,
        repeats: cfg.repeats,
        cells,
        summary,
    })
}

type GroupKey = (String, StrategyKind, bool, Option<u64>, Option<u64>, EvalMode);

/// Means over the successful repeats of each (model, strategy, source,
/// ratio, α, mode) group, in first-appearance order.
pub fn summarize(cells: &[CellReport]) -> Vec<SummaryRow> {
    let mut order: Vec<GroupKey> = Vec::new();
    let mut groups: BTreeMap<GroupKey, (SummaryRow, usize)> = BTreeMap::new();
    for c in cells.iter().filter(|c| c.status == Status::Ok) {
        for m in &c.metrics {
            let key = (
                c.model.clone(),
                c.strategy,
                c.source == Source::Mixup,
                c.ratio.map(f64::to_bits),
                c.alpha.map(f64::to_bits),
                m.mode,
            );
            let entry = groups.entry(key.clone()).or_insert_with(|| {
                order.push(key);
                (
                    SummaryRow {
                        model: c.model.clone(),
                        strategy: c.strategy,
                        source: c.source.clone(),
                        ratio: c.ratio,
                        alpha: c.alpha,
                        mode: m.mode,
                        repeats: 0,
                        auc: 0.0,
                        ccr_at: m.ccr_at.iter().map(|x| (x.fpr, 0.0)).collect(),
                    },
                    0,
                )
            });
            entry.0.repeats += 1;
            entry.0.auc += m.auc;
            for (acc, x) in entry.0.ccr_at.iter_mut().zip(&m.ccr_at) {
                acc.1 += x.ccr;
            }
        }
    }
    order
        .into_iter()
        .map(|k| {
            let (mut row, _) = groups.remove(&k).expect("key recorded");
            let n = row.repeats as f64;
            row.auc /= n;
            for acc in &mut row.ccr_at {
                acc.1 /= n;
            }
            row
        })
        .collect()
}
