use rand::seq::SliceRandom;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::evm::{cevm_reduce, fit_evm};
use crate::linear::fit_linear;
use crate::model::{OpenSetModel, TrainedModel};
use crate::osnn::fit_osnn;
use crate::strategy::{apply_strategy, StrategyKind, StrategyView};
use crate::svm::{fit_pisvm, fit_wsvm};
use crate::util::seeded_rng;

use super::config::ModelParams;

/// Trains one model. `seed` only matters for stochastic trainers.
pub fn fit_model(params: &ModelParams, view: &StrategyView, seed: u64) -> Result<TrainedModel> {
    Ok(match params {
        ModelParams::Osnn => TrainedModel::Osnn(fit_osnn(view)?),
        ModelParams::Linear(cfg) => {
            TrainedModel::Linear(fit_linear(view, &crate::linear::TrainConfig { seed, ..*cfg })?)
        }
        ModelParams::Evm(cfg) => TrainedModel::Evm(fit_evm(view, cfg)?),
        ModelParams::Cevm(cfg) => TrainedModel::Evm(fit_evm(&cevm_reduce(view, cfg)?, cfg)?),
        ModelParams::Wsvm(cfg) => TrainedModel::Wsvm(fit_wsvm(view, cfg)?),
        ModelParams::Pisvm(cfg) => TrainedModel::Pisvm(fit_pisvm(view, cfg)?),
    })
}

/// Fold id per sample. Stratified when every class has at least `folds`
/// samples, otherwise a plain shuffled split (with a warning).
pub fn assign_folds(labels: &[&str], folds: usize, seed: u64) -> (Vec<usize>, bool) {
    let mut rng = seeded_rng(seed);
    let mut classes: Vec<&str> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let stratified = classes
        .iter()
        .all(|c| labels.iter().filter(|l| *l == c).count() >= folds);
    let mut fold = vec![0; labels.len()];
    if stratified {
        for c in classes {
            let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            idx.shuffle(&mut rng);
            for (k, i) in idx.into_iter().enumerate() {
                fold[i] = k % folds;
            }
        }
    } else {
        log::warn!("a class has fewer than {folds} samples; using unstratified folds");
        let mut idx: Vec<usize> = (0..labels.len()).collect();
        idx.shuffle(&mut rng);
        for (k, i) in idx.into_iter().enumerate() {
            fold[i] = k % folds;
        }
    }
    (fold, stratified)
}

fn closed_set_accuracy(model: &dyn OpenSetModel, held_out: &[&Sample]) -> Result<f64> {
    let mut correct = 0usize;
    for s in held_out {
        let p = model.predict(&s.features)?;
        let predicted = p.label.map(|k| model.known_classes()[k].as_str());
        if predicted.is_some() && predicted == s.label.known() {
            correct += 1;
        }
    }
    Ok(correct as f64 / held_out.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub best: ModelParams,
    pub index: usize,
    /// Mean validation accuracy per lattice point; `None` when a fold failed.
    pub scores: Vec<Option<f64>>,
    pub stratified: bool,
}

/// Picks the lattice point with the best mean closed-set validation accuracy
/// on the known training samples. Ties keep the earlier point.
pub fn grid_search(lattice: &[ModelParams], train: &[Sample], folds: usize, seed: u64) -> Result<GridResult> {
    if lattice.is_empty() {
        return Err(Error::config("empty hyperparameter grid"));
    }
    if folds < 2 {
        return Err(Error::config("folds must be at least 2"));
    }
    if lattice.len() == 1 {
        return Ok(GridResult {
            best: lattice[0].clone(),
            index: 0,
            scores: vec![None],
            stratified: true,
        });
    }
    let known: Vec<&Sample> = train.iter().filter(|s| !s.label.is_unknown()).collect();
    let labels: Vec<&str> = known.iter().filter_map(|s| s.label.known()).collect();
    if known.len() < folds {
        return Err(Error::invalid("fewer known samples than folds"));
    }
    let (fold, stratified) = assign_folds(&labels, folds, seed);

    let mut scores = Vec::with_capacity(lattice.len());
    for params in lattice {
        let mut total = 0.0;
        let mut failed = false;
        for f in 0..folds {
            let fit_part: Vec<Sample> = (0..known.len())
                .filter(|&i| fold[i] != f)
                .map(|i| known[i].clone())
                .collect();
            let held: Vec<&Sample> = (0..known.len()).filter(|&i| fold[i] == f).map(|i| known[i]).collect();
            let outcome = apply_strategy(&fit_part, StrategyKind::Baseline)
                .and_then(|view| fit_model(params, &view, seed))
                .and_then(|m| closed_set_accuracy(&m, &held));
            match outcome {
                Ok(acc) => total += acc,
                Err(e) => {
                    log::warn!("grid point {params:?} failed on fold {f}: {e}");
                    failed = true;
                    break;
                }
            }
        }
        scores.push((!failed).then(|| total / folds as f64));
    }
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(v) = s {
            if best.is_none_or(|b| *v > scores[b].expect("best is scored")) {
                best = Some(i);
            }
        }
    }
    let index = best.ok_or_else(|| Error::invalid("every grid point failed"))?;
    Ok(GridResult {
        best: lattice[index].clone(),
        index,
        scores,
        stratified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use crate::evm::EvmConfig;

    #[test]
    fn single_point_returns_without_training() {
        // an empty training set would fail any fit
        let r = grid_search(&[ModelParams::Osnn], &[], 5, 0).unwrap();
        assert_eq!(r.best, ModelParams::Osnn);
        assert!(grid_search(&[], &[], 5, 0).is_err());
    }

    #[test]
    fn ties_keep_lattice_order() {
        let train = synth_blobs(2, 20, 2, 0.5, 1).unwrap();
        let a = ModelParams::Evm(EvmConfig {
            tail_size: 5,
            ..EvmConfig::default()
        });
        let b = ModelParams::Evm(EvmConfig {
            tail_size: 6,
            ..EvmConfig::default()
        });
        let r = grid_search(&[a.clone(), b], &train, 4, 3).unwrap();
        assert_eq!(r.scores[0], r.scores[1]);
        assert_eq!(r.best, a);
        assert!(r.stratified);
    }

    #[test]
    fn sparse_class_falls_back_to_plain_folds() {
        let mut train = synth_blobs(2, 10, 2, 0.5, 1).unwrap();
        train.push(Sample::known(vec![100.0, 0.0], "rare"));
        let labels: Vec<&str> = train.iter().filter_map(|s| s.label.known()).collect();
        let (folds, stratified) = assign_folds(&labels, 3, 0);
        assert!(!stratified);
        for f in 0..3 {
            assert_eq!(folds.iter().filter(|&&x| x == f).count(), 7);
        }
    }

    #[test]
    fn stratified_folds_balance_classes() {
        let labels: Vec<&str> = (0..30).map(|i| if i % 3 == 0 { "a" } else { "b" }).collect();
        let (folds, stratified) = assign_folds(&labels, 5, 2);
        assert!(stratified);
        for f in 0..5 {
            let a = (0..30).filter(|&i| folds[i] == f && labels[i] == "a").count();
            assert_eq!(a, 2);
        }
    }
}
