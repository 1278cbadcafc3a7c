//! Single softmax layer on pre-extracted features.
//!
//! Baseline and SPL train with cross-entropy (SPL adds one output for the
//! pseudo class). KvR trains the known outputs only and pushes unknowns
//! towards the uniform distribution (entropic open-set loss).

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{OpenSetModel, Prediction};
use crate::strategy::{StrategyKind, StrategyView};
use crate::util::{check_dim, seeded_rng};

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    /// Only shuffles mini-batches; parameters start at zero.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 100,
            batch_size: 32,
            l2: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch_size must be at least 1"));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::config("l2 must be non-negative"));
        }
        Ok(())
    }
}

/// Training target of one sample.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Target {
    Class(usize),
    /// Unknown sample: uniform over all outputs.
    Uniform,
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Loss and exact gradient with respect to the logits.
///
/// A class target gives cross-entropy; `Uniform` gives the mean negative
/// log-softmax over all outputs, minimized at equal logits.
pub fn entropic_objective(logits: &[f64], target: Target) -> (f64, Vec<f64>) {
    let lse = log_sum_exp(logits);
    let mut grad = softmax(logits);
    let loss = match target {
        Target::Class(t) => {
            grad[t] -= 1.0;
            lse - logits[t]
        }
        Target::Uniform => {
            let k = logits.len() as f64;
            for g in &mut grad {
                *g -= 1.0 / k;
            }
            lse - logits.iter().sum::<f64>() / k
        }
    };
    (loss, grad)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: StrategyKind,
    pub known_classes: Vec<String>,
    pub dim: usize,
    /// `known_classes.len()`, plus one for the SPL pseudo output.
    pub n_outputs: usize,
    /// Row-major `n_outputs × dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// Full-data objective after every epoch.
    #[serde(default)]
    pub loss_history: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(kind: StrategyKind, known_classes: Vec<String>, dim: usize) -> Self {
        let n_outputs = known_classes.len() + usize::from(kind == StrategyKind::Spl);
        LinearModel {
            kind,
            known_classes,
            dim,
            n_outputs,
            weights: vec![0.0; n_outputs * dim],
            bias: vec![0.0; n_outputs],
            loss_history: Vec::new(),
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_outputs)
            .map(|o| {
                let row = &self.weights[o * self.dim..(o + 1) * self.dim];
                self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        Ok(softmax(&self.logits(x)))
    }

    fn objective(&self, data: &[(&[f64], Target)], l2: f64) -> f64 {
        let data_loss: f64 = data
            .iter()
            .map(|(x, t)| entropic_objective(&self.logits(x), *t).0)
            .sum::<f64>()
            / data.len() as f64;
        data_loss + 0.5 * l2 * self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Flat text document: header lines, then one `bias w0 .. wD-1` row per
    /// output in row-major order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "openset-linear 1");
        let _ = writeln!(out, "strategy {}", self.kind);
        let _ = writeln!(out, "dim {}", self.dim);
        let _ = writeln!(out, "outputs {}", self.n_outputs);
        for c in &self.known_classes {
            let _ = writeln!(out, "class {c}");
        }
        let _ = writeln!(out, "params");
        for o in 0..self.n_outputs {
            let _ = write!(out, "{}", self.bias[o]);
            for w in &self.weights[o * self.dim..(o + 1) * self.dim] {
                let _ = write!(out, " {w}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::config(format!("linear model document: {msg}"));
        let mut lines = text.lines();
        if lines.next() != Some("openset-linear 1") {
            return Err(bad("missing header"));
        }
        let mut kind = None;
        let mut dim = None;
        let mut outputs = None;
        let mut classes = Vec::new();
        for line in lines.by_ref() {
            if line == "params" {
                break;
            }
            let (key, value) = line.split_once(' ').ok_or_else(|| bad("malformed line"))?;
            match key {
                "strategy" => kind = Some(value.parse::<StrategyKind>()?),
                "dim" => dim = value.parse::<usize>().ok(),
                "outputs" => outputs = value.parse::<usize>().ok(),
                "class" => classes.push(value.to_string()),
                _ => return Err(bad("unexpected key")),
            }
        }
        let kind = kind.ok_or_else(|| bad("no strategy"))?;
        let dim = dim.ok_or_else(|| bad("no dim"))?;
        let mut model = LinearModel::zeros(kind, classes, dim);
        if outputs != Some(model.n_outputs) {
            return Err(bad("output count does not match classes"));
        }
        for o in 0..model.n_outputs {
            let row: Vec<f64> = lines
                .next()
                .ok_or_else(|| bad("missing parameter row"))?
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad("bad number")))
                .collect::<Result<_>>()?;
            if row.len() != dim + 1 {
                return Err(bad("parameter row width"));
            }
            model.bias[o] = row[0];
            model.weights[o * dim..(o + 1) * dim].copy_from_slice(&row[1..]);
        }
        Ok(model)
    }
}

pub fn fit_linear(view: &StrategyView, cfg: &TrainConfig) -> Result<LinearModel> {
    cfg.validate()?;
    if view.kind == StrategyKind::Mpl {
        return Err(Error::UnsupportedStrategy {
            model: "linear",
            strategy: view.kind.to_string(),
        });
    }
    if view.is_empty() {
        return Err(Error::Empty("training view"));
    }
    let dim = view.dim();
    let mut model = LinearModel::zeros(view.kind, view.known_classes.clone(), dim);
    let data: Vec<(&[f64], Target)> = view
        .samples
        .iter()
        .zip(view.targets())
        .map(|(s, t)| {
            let target = match t {
                Some(c) => Target::Class(*c),
                None => Target::Uniform,
            };
            (s.features.as_slice(), target)
        })
        .collect();

    let mut rng = seeded_rng(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let k = model.n_outputs;
    let mut grad_w = vec![0.0; k * dim];
    let mut grad_b = vec![0.0; k];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            grad_b.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let (x, t) = data[i];
                let (_, g) = entropic_objective(&model.logits(x), t);
                for o in 0..k {
                    grad_b[o] += g[o];
                    for (gw, v) in grad_w[o * dim..(o + 1) * dim].iter_mut().zip(x) {
                        *gw += g[o] * v;
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for (w, g) in model.weights.iter_mut().zip(&grad_w) {
                *w -= cfg.learning_rate * (g * scale + cfg.l2 * *w);
            }
            for (b, g) in model.bias.iter_mut().zip(&grad_b) {
                *b -= cfg.learning_rate * g * scale;
            }
        }
        model.loss_history.push(model.objective(&data, cfg.l2));
    }
    if model.weights.iter().chain(&model.bias).any(|v| !v.is_finite()) {
        return Err(Error::NotConverged {
            solver: "linear gradient descent",
            iterations: cfg.epochs,
            residual: f64::INFINITY,
        });
    }
    Ok(model)
}

impl OpenSetModel for LinearModel {
    fn family(&self) -> &'static str {
        "linear"
    }

    fn known_classes(&self) -> &[String] {
        &self.known_classes
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, query: &[f64]) -> Result<Prediction> {
        let mut p = self.probabilities(query)?;
        let n_known = self.known_classes.len();
        let unknown = if self.n_outputs > n_known { p[n_known] } else { 0.0 };
        p.truncate(n_known);
        Ok(Prediction::from_channels(p, unknown))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_blobs, Sample};
    use crate::strategy::apply_strategy;

    #[test]
    fn objective_reference_values() {
        let (loss, grad) = entropic_objective(&[0.3, 0.3, 0.3, 0.3], Target::Uniform);
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!(grad.iter().all(|g| g.abs() < 1e-15));
        let (loss, _) = entropic_objective(&[800.0, 0.0, -5.0], Target::Class(0));
        assert_eq!(loss, 0.0);
        let (loss, grad) = entropic_objective(&[1000.0, -1000.0], Target::Class(1));
        assert!(loss.is_finite() && (loss - 2000.0).abs() < 1e-9);
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn zero_model_is_uniform() {
        let names: Vec<String> = (0..5).map(|i| format!("c{i}")).collect();
        let m = LinearModel::zeros(StrategyKind::Baseline, names, 3);
        let p = m.predict(&[1.0, -2.0, 3.0]).unwrap();
        assert!(p.known.iter().all(|v| (v - 0.2).abs() < 1e-15));
        assert_eq!(p.unknown, 0.0);
        assert!(m.predict(&[1.0]).is_err());
    }

    #[test]
    fn mpl_unsupported() {
        let train = vec![
            Sample::known(vec![0.0], "a"),
            Sample::known(vec![1.0], "b"),
            Sample::unknown(vec![3.0]),
        ];
        let v = apply_strategy(&train, StrategyKind::Mpl).unwrap();
        assert!(matches!(
            fit_linear(&v, &TrainConfig::default()),
            Err(Error::UnsupportedStrategy { .. })
        ));
    }

    #[test]
    fn separable_blobs_train_accuracy() {
        let samples = synth_blobs(2, 100, 2, 1.0, 4).unwrap();
        let view = apply_strategy(&samples, StrategyKind::Baseline).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.01,
            epochs: 50,
            ..TrainConfig::default()
        };
        let m = fit_linear(&view, &cfg).unwrap();
        let correct = view
            .samples
            .iter()
            .zip(view.targets())
            .filter(|(s, t)| m.predict(&s.features).unwrap().label == **t)
            .count();
        assert!(correct as f64 / view.len() as f64 >= 0.99, "{correct}");
    }

    #[test]
    fn baseline_ignores_unknowns() {
        let mut samples = synth_blobs(2, 20, 2, 1.0, 1).unwrap();
        let base = fit_linear(
            &apply_strategy(&samples, StrategyKind::Baseline).unwrap(),
            &TrainConfig::default(),
        )
        .unwrap();
        samples.push(Sample::unknown(vec![100.0, 100.0]));
        let with_kuc = fit_linear(
            &apply_strategy(&samples, StrategyKind::Baseline).unwrap(),
            &TrainConfig::default(),
        )
        .unwrap();
        assert_eq!(base, with_kuc);
    }

    #[test]
    fn full_batch_loss_non_increasing() {
        let mut samples = synth_blobs(3, 30, 2, 1.5, 9).unwrap();
        samples.extend((0..20).map(|i| Sample::unknown(vec![i as f64, -8.0])));
        for kind in [StrategyKind::Baseline, StrategyKind::Spl, StrategyKind::Kvr] {
            let view = apply_strategy(&samples, kind).unwrap();
            let cfg = TrainConfig {
                learning_rate: 0.002,
                epochs: 60,
                batch_size: usize::MAX,
                l2: 1e-3,
                seed: 0,
            };
            let m = fit_linear(&view, &cfg).unwrap();
            for w in m.loss_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{kind}: {:?}", w);
            }
        }
    }

    #[test]
    fn text_document_round_trip() {
        let mut samples = synth_blobs(3, 10, 2, 1.0, 2).unwrap();
        samples.push(Sample::unknown(vec![50.0, 50.0]));
        let view = apply_strategy(&samples, StrategyKind::Spl).unwrap();
        let mut m = fit_linear(
            &view,
            &TrainConfig {
                epochs: 3,
                ..Default::default()
            },
        )
        .unwrap();
        m.loss_history.clear();
        let back = LinearModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(LinearModel::from_text("nope").is_err());
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn softmax_sums_to_one(z in prop::collection::vec(-50.0f64..50.0, 1..12)) {
            let p = softmax(&z);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn equal_logits_minimize_unknown_loss(v in -20.0f64..20.0, n in 2usize..10) {
            let (loss, grad) = entropic_objective(&vec![v; n], Target::Uniform);
            prop_assert!(grad.iter().all(|g| g.abs() < 1e-15));
            prop_assert!((loss - (n as f64).ln()).abs() < 1e-12);
        }
    }
}
