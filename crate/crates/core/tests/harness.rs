use std::fs;

use openset::harness::{
    build_dataset, derive_seed, export_report, gain_table, report_json, run_experiment, ExperimentConfig, Status,
    GAINS_FILE, REPORT_FILE,
};
use openset::strategy::StrategyKind;

const SMALL_TOY: &str = r#"
seed = 11
folds = 3
strategies = ["baseline"]
eval_modes = ["biased"]
[dataset]
kind = "toy"
toy = { known_classes = 3, per_class = 40, center_radius = 3.0, class_std = 0.8, ring_radius = 7.0, ring_width = 0.5, uuc_center = [9.0, 9.0], uuc_std = 0.8 }
[[models]]
family = "osnn"
"#;

fn cfg(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).unwrap()
}

#[test]
fn single_cell_export_file_counts() {
    let report = run_experiment(&cfg(SMALL_TOY), Some(1)).unwrap();
    assert_eq!(report.cells.len(), 1);
    let dir = tempfile::tempdir().unwrap();
    export_report(&report, dir.path()).unwrap();

    let curves: Vec<_> = fs::read_dir(dir.path().join("curves")).unwrap().collect();
    assert_eq!(curves.len(), 2);
    let json: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
        .collect();
    assert_eq!(json.len(), 1);
    for f in &report.cells[0].curve_files {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }

    // re-export gives identical bytes
    let first = fs::read(dir.path().join(REPORT_FILE)).unwrap();
    let again = tempfile::tempdir().unwrap();
    export_report(&report, again.path()).unwrap();
    assert_eq!(first, fs::read(again.path().join(REPORT_FILE)).unwrap());
    for f in &report.cells[0].curve_files {
        assert_eq!(
            fs::read(dir.path().join(f)).unwrap(),
            fs::read(again.path().join(f)).unwrap()
        );
    }
}

#[test]
fn baseline_only_gains_are_zero() {
    let text = SMALL_TOY.replace("family = \"osnn\"", "family = \"osnn\"\n[[models]]\nfamily = \"evm\"");
    let report = run_experiment(&cfg(&text), None).unwrap();
    let gains = gain_table(&report.summary);
    assert_eq!(gains.len(), 2);
    for g in &gains {
        assert_eq!(g.auc, 0.0);
        assert!(g.ccr_at.iter().all(|(_, v)| *v == 0.0));
    }
    let dir = tempfile::tempdir().unwrap();
    export_report(&report, dir.path()).unwrap();
    let csv = fs::read_to_string(dir.path().join(GAINS_FILE)).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn repeats_use_distinct_split_seeds_and_average() {
    let text = format!("repeats = 3\n{SMALL_TOY}")
        .replace("strategies = [\"baseline\"]", "strategies = [\"baseline\", \"kvr\"]");
    let report = run_experiment(&cfg(&text), None).unwrap();
    assert_eq!(report.cells.len(), 6);
    let seeds: Vec<u64> = (0..3).map(|r| derive_seed(11, &["split", &r.to_string()])).collect();
    let config = cfg(&text);
    let splits: Vec<_> = seeds
        .iter()
        .map(|&s| build_dataset(&config.dataset, s).unwrap().train)
        .collect();
    assert!(splits[0] != splits[1] && splits[1] != splits[2] && splits[0] != splits[2]);

    for row in &report.summary {
        let cells: Vec<_> = report
            .cells
            .iter()
            .filter(|c| c.model == row.model && c.strategy == row.strategy && c.status == Status::Ok)
            .collect();
        assert_eq!(row.repeats, 3);
        assert_eq!(cells.len(), 3);
        let aucs: Vec<f64> = cells
            .iter()
            .map(|c| c.metrics.iter().find(|m| m.mode == row.mode).unwrap().auc)
            .collect();
        let mean = aucs.iter().sum::<f64>() / 3.0;
        assert!((row.auc - mean).abs() < 1e-12);
        for (k, (_, v)) in row.ccr_at.iter().enumerate() {
            let m = cells
                .iter()
                .map(|c| c.metrics.iter().find(|m| m.mode == row.mode).unwrap().ccr_at[k].ccr)
                .sum::<f64>()
                / 3.0;
            assert!((v - m).abs() < 1e-12);
        }
    }
}

#[test]
fn failing_family_is_isolated() {
    // two training samples per class: too few for the SVM families
    let text = r#"
seed = 5
folds = 2
strategies = ["baseline", "kvr"]
[dataset]
kind = "blobs"
n_classes = 5
per_class = 4
dim = 2
spread = 0.3
split = { n_kc = 3, n_kuc = 1, n_uuc = 1, kuc_to_kc_sample_ratio = 0.33 }
[[models]]
family = "wsvm"
[[models]]
family = "osnn"
"#;
    let report = run_experiment(&cfg(text), None).unwrap();
    assert!(!report.all_ok());
    for c in &report.cells {
        match c.model.as_str() {
            "wsvm" => {
                assert_eq!(c.status, Status::Error);
                assert!(c.error.as_deref().unwrap().contains("at least 3"), "{:?}", c.error);
                assert!(c.curve_files.is_empty());
            }
            _ => assert_eq!(c.status, Status::Ok, "{:?}", c.error),
        }
    }
    assert!(report.summary.iter().all(|r| r.model == "osnn"));
}

#[test]
fn removing_a_model_leaves_other_cells_unchanged() {
    let both = SMALL_TOY
        .replace("family = \"osnn\"", "family = \"evm\"\n[[models]]\nfamily = \"osnn\"")
        .replace("strategies = [\"baseline\"]", "strategies = [\"baseline\", \"spl\"]");
    let full = run_experiment(&cfg(&both), None).unwrap();
    let only = run_experiment(
        &cfg(&SMALL_TOY.replace("strategies = [\"baseline\"]", "strategies = [\"baseline\", \"spl\"]")),
        None,
    )
    .unwrap();
    let kept: Vec<_> = full.cells.iter().filter(|c| c.model == "osnn").collect();
    assert_eq!(kept.len(), only.cells.len());
    for (a, b) in kept.iter().zip(&only.cells) {
        assert_eq!(serde_json::to_string(a).unwrap(), serde_json::to_string(b).unwrap());
        assert_eq!(a.curves, b.curves);
    }
}

#[test]
fn mixup_cells_share_candidates_across_alpha() {
    let text = format!(
        "{SMALL_TOY}[mixup]\nratios = [1.0]\nalphas = [0.0, 0.5]\nmodels = [\"osnn\"]\nstrategies = [\"spl\"]\n"
    );
    let report = run_experiment(&cfg(&text), None).unwrap();
    let stats: Vec<_> = report.cells.iter().filter_map(|c| c.mixup.as_ref()).collect();
    assert_eq!(stats.len(), 2);
    assert_eq!(stats[0].accepted, stats[0].requested);
    assert!(stats[1].accepted <= stats[0].accepted);
    assert!(report.cells.iter().all(|c| c.strategy != StrategyKind::Mpl));
    assert_eq!(
        report_json(&report).unwrap(),
        report_json(&run_experiment(&cfg(&text), Some(2)).unwrap()).unwrap()
    );
}
