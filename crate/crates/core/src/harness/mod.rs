//! Config-driven experiments: dataset construction, grid search, cell runs
//! over models × strategies × mixup sweeps, and report files.

mod config;
mod grid;
mod report;
mod run;
mod split_io;

pub use config::{derive_seed, DatasetSource, ExperimentConfig, Family, Grid, MixupSweep, ModelParams, ModelSpec};
pub use grid::{assign_folds, fit_model, grid_search, GridResult};
pub use report::{
    export_report, gain_table, gains_csv, report_json, summary_text, GainRow, GAINS_FILE, REPORT_FILE, TIMINGS_FILE,
};
pub use run::{
    build_dataset, run_experiment, summarize, CellCurves, CellReport, RunReport, Source, Status, SummaryRow,
};
pub use split_io::{load_test_split, write_split};
