//! One-vs-rest open-set SVMs: W-SVM and PI-SVM.
//!
//! Raw decision values are turned into probabilities by a Weibull CDF fitted
//! on the positive class's own training scores after shifting them onto the
//! positive axis. W-SVM multiplies a one-class channel with a binary channel;
//! PI-SVM uses the binary machine alone, calibrated on the lowest-scoring
//! positives only.

mod smo;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evt::{fit_tail, WeibullParams};
use crate::model::{OpenSetModel, Prediction};
use crate::strategy::{StrategyKind, StrategyView};
use crate::util::{check_dim, sq_dist};

/// Minimum training samples per positive class.
pub const MIN_CLASS_SAMPLES: usize = 3;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => (-gamma * sq_dist(a, b)).exp(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Kernel::Rbf { gamma } if !(*gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::config("RBF gamma must be positive"))
            }
            _ => Ok(()),
        }
    }

    fn matrix(&self, xs: &[&[f64]]) -> Vec<f64> {
        let n = xs.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = self.eval(xs[i], xs[j]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub support: Vec<Vec<f64>>,
    /// `αᵢyᵢ` per support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
    pub kernel: Kernel,
    pub c: f64,
    pub iterations: usize,
    pub kkt_violation: f64,
}

impl BinarySvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(s, c)| c * self.kernel.eval(s, x))
            .sum::<f64>()
            + self.bias
    }

    /// Dual objective `½ Σ αᵢαⱼyᵢyⱼK - Σ αᵢ` of the stored solution.
    pub fn dual_objective(&self) -> f64 {
        let mut quad = 0.0;
        for (si, ci) in self.support.iter().zip(&self.coef) {
            for (sj, cj) in self.support.iter().zip(&self.coef) {
                quad += ci * cj * self.kernel.eval(si, sj);
            }
        }
        0.5 * quad - self.coef.iter().map(|c| c.abs()).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneClassSvm {
    pub support: Vec<Vec<f64>>,
    pub coef: Vec<f64>,
    pub rho: f64,
    pub kernel: Kernel,
    pub nu: f64,
}

impl OneClassSvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(s, c)| c * self.kernel.eval(s, x))
            .sum::<f64>()
            - self.rho
    }
}

fn check_rows(xs: &[Vec<f64>]) -> Result<usize> {
    let dim = xs.first().ok_or(Error::Empty("SVM training set"))?.len();
    for x in xs {
        check_dim(dim, x.len())?;
    }
    Ok(dim)
}

pub fn smo_train_binary(xs: &[Vec<f64>], y: &[f64], c: f64, kernel: Kernel, tol: f64) -> Result<BinarySvm> {
    check_rows(xs)?;
    let rows: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    train_binary_with(&kernel.matrix(&rows), &rows, y, c, kernel, tol)
}

fn train_binary_with(k: &[f64], xs: &[&[f64]], y: &[f64], c: f64, kernel: Kernel, tol: f64) -> Result<BinarySvm> {
    kernel.validate()?;
    if !(c > 0.0 && c.is_finite()) || !(tol > 0.0) {
        return Err(Error::config("SVM needs C > 0 and tol > 0"));
    }
    if xs.len() != y.len() {
        return Err(Error::invalid("label count differs from sample count"));
    }
    if y.iter().any(|v| *v != 1.0 && *v != -1.0) {
        return Err(Error::invalid("binary labels must be +1 or -1"));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::invalid("binary SVM needs both labels"));
    }
    let n = xs.len();
    let sol = smo::solve(
        smo::Problem {
            kernel: k,
            p: vec![-1.0; n],
            y: y.to_vec(),
            upper: vec![c; n],
            alpha: vec![0.0; n],
        },
        tol,
    )?;
    let (support, coef) = xs
        .iter()
        .zip(sol.alpha.iter().zip(y))
        .filter(|(_, (a, _))| **a > 0.0)
        .map(|(x, (a, yi))| (x.to_vec(), a * yi))
        .unzip();
    Ok(BinarySvm {
        support,
        coef,
        bias: -sol.rho,
        kernel,
        c,
        iterations: sol.iterations,
        kkt_violation: sol.violation,
    })
}

/// ν-one-class SVM with the box `[0, 1/(νn)]` and `Σα = 1`.
pub fn train_one_class(xs: &[Vec<f64>], nu: f64, kernel: Kernel, tol: f64) -> Result<OneClassSvm> {
    check_rows(xs)?;
    let rows: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    train_one_class_with(&kernel.matrix(&rows), &rows, nu, kernel, tol)
}

fn train_one_class_with(k: &[f64], xs: &[&[f64]], nu: f64, kernel: Kernel, tol: f64) -> Result<OneClassSvm> {
    kernel.validate()?;
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::config(format!("nu must lie in (0, 1], got {nu}")));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::invalid("one-class SVM needs at least 2 samples"));
    }
    if xs.iter().all(|x| *x == xs[0]) {
        return Err(Error::Degenerate(
            "one-class SVM input holds a single distinct point".into(),
        ));
    }
    let ub = 1.0 / (nu * n as f64);
    // start from the feasible point that fills the first ⌊νn⌋ boxes
    let mut alpha = vec![0.0; n];
    let mut left = 1.0f64;
    for a in alpha.iter_mut() {
        if left <= 0.0 {
            break;
        }
        *a = ub.min(left);
        left -= *a;
    }
    let sol = smo::solve(
        smo::Problem {
            kernel: k,
            p: vec![0.0; n],
            y: vec![1.0; n],
            upper: vec![ub; n],
            alpha,
        },
        tol,
    )?;
    let (support, coef) = xs
        .iter()
        .zip(&sol.alpha)
        .filter(|(_, a)| **a > 0.0)
        .map(|(x, a)| (x.to_vec(), *a))
        .unzip();
    Ok(OneClassSvm {
        support,
        coef,
        rho: sol.rho,
        kernel,
        nu,
    })
}

/// Maps raw scores to `[0, 1]` through a Weibull CDF of shifted scores.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreCalibration {
    pub shift: f64,
    pub params: WeibullParams,
    pub fallback: bool,
}

impl ScoreCalibration {
    /// Shifts the scores so the smallest lands at 1% of their range (or
    /// 1e-3 for a constant set) and fits the Weibull to them.
    pub fn fit(scores: &[f64]) -> Result<Self> {
        let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(min.is_finite() && max.is_finite()) {
            return Err(Error::Empty("calibration scores"));
        }
        let range = max - min;
        let shift = -min + if range > 0.0 { 0.01 * range } else { 1e-3 };
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        let fit = fit_tail(&shifted)?;
        Ok(ScoreCalibration {
            shift,
            params: fit.params,
            fallback: fit.fallback,
        })
    }

    pub fn probability(&self, score: f64) -> f64 {
        self.params.cdf(score + self.shift)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub kernel: Kernel,
    pub c: f64,
    /// ν of the one-class machine (W-SVM only).
    pub nu: f64,
    pub tol: f64,
    /// Share of lowest positive decision values used for PI-SVM calibration.
    pub boundary_fraction: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            kernel: Kernel::Rbf { gamma: 0.5 },
            c: 1.0,
            nu: 0.1,
            tol: 1e-3,
            boundary_fraction: 0.25,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.c > 0.0) || !(self.tol > 0.0) {
            return Err(Error::config("SVM needs C > 0 and tol > 0"));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::config("nu must lie in (0, 1]"));
        }
        if !(self.boundary_fraction > 0.0 && self.boundary_fraction <= 1.0) {
            return Err(Error::config("boundary_fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WsvmMachine {
    pub one_class: OneClassSvm,
    pub one_class_cal: ScoreCalibration,
    pub binary: BinarySvm,
    pub binary_cal: ScoreCalibration,
}

impl WsvmMachine {
    /// Product of the two calibrated channels.
    pub fn probability(&self, x: &[f64]) -> f64 {
        self.one_class_cal.probability(self.one_class.decision(x))
            * self.binary_cal.probability(self.binary.decision(x))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WsvmModel {
    pub kind: StrategyKind,
    pub known_classes: Vec<String>,
    pub dim: usize,
    /// One machine per positive class; under SPL the last is the pseudo class.
    pub machines: Vec<WsvmMachine>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiSvmMachine {
    pub binary: BinarySvm,
    pub calibration: ScoreCalibration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiSvmModel {
    pub kind: StrategyKind,
    pub known_classes: Vec<String>,
    pub dim: usize,
    pub machines: Vec<PiSvmMachine>,
}

struct Prepared<'a> {
    rows: Vec<&'a [f64]>,
    kernel: Vec<f64>,
}

fn prepare<'a>(view: &'a StrategyView, cfg: &SvmConfig, model: &'static str) -> Result<Prepared<'a>> {
    cfg.validate()?;
    if view.kind == StrategyKind::Mpl {
        return Err(Error::UnsupportedStrategy {
            model,
            strategy: view.kind.to_string(),
        });
    }
    for c in 0..view.n_positive() {
        let count = view.members(c).len();
        if count < MIN_CLASS_SAMPLES {
            return Err(Error::TooFewSamples {
                class: view.positive_classes[c].to_string(),
                count,
                required: MIN_CLASS_SAMPLES,
            });
        }
    }
    if view.n_positive() + usize::from(!view.negative_pool.is_empty()) < 2 {
        return Err(Error::invalid(format!("{model} needs at least two classes")));
    }
    let rows: Vec<&[f64]> = view.samples.iter().map(|s| s.features.as_slice()).collect();
    let kernel = cfg.kernel.matrix(&rows);
    Ok(Prepared { rows, kernel })
}

fn labels_for(view: &StrategyView, class: usize) -> Vec<f64> {
    view.targets()
        .iter()
        .map(|t| if *t == Some(class) { 1.0 } else { -1.0 })
        .collect()
}

fn sub_matrix(k: &[f64], n: usize, idx: &[usize]) -> Vec<f64> {
    idx.iter()
        .flat_map(|&i| idx.iter().map(move |&j| k[i * n + j]))
        .collect()
}

pub fn fit_wsvm(view: &StrategyView, cfg: &SvmConfig) -> Result<WsvmModel> {
    let prep = prepare(view, cfg, "W-SVM")?;
    let n = prep.rows.len();
    let machines = (0..view.n_positive())
        .into_par_iter()
        .map(|c| {
            let members = view.members(c);
            let member_rows: Vec<&[f64]> = members.iter().map(|&i| prep.rows[i]).collect();
            let one_class = train_one_class_with(
                &sub_matrix(&prep.kernel, n, &members),
                &member_rows,
                cfg.nu,
                cfg.kernel,
                cfg.tol,
            )?;
            let binary = train_binary_with(
                &prep.kernel,
                &prep.rows,
                &labels_for(view, c),
                cfg.c,
                cfg.kernel,
                cfg.tol,
            )?;
            let oc_scores: Vec<f64> = member_rows.iter().map(|x| one_class.decision(x)).collect();
            let bin_scores: Vec<f64> = member_rows.iter().map(|x| binary.decision(x)).collect();
            Ok(WsvmMachine {
                one_class_cal: ScoreCalibration::fit(&oc_scores)?,
                one_class,
                binary_cal: ScoreCalibration::fit(&bin_scores)?,
                binary,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WsvmModel {
        kind: view.kind,
        known_classes: view.known_classes.clone(),
        dim: view.dim(),
        machines,
    })
}

pub fn fit_pisvm(view: &StrategyView, cfg: &SvmConfig) -> Result<PiSvmModel> {
    let prep = prepare(view, cfg, "PI-SVM")?;
    let machines = (0..view.n_positive())
        .into_par_iter()
        .map(|c| {
            let binary = train_binary_with(
                &prep.kernel,
                &prep.rows,
                &labels_for(view, c),
                cfg.c,
                cfg.kernel,
                cfg.tol,
            )?;
            let mut scores: Vec<f64> = view.members(c).iter().map(|&i| binary.decision(prep.rows[i])).collect();
            scores.sort_by(f64::total_cmp);
            let keep = ((cfg.boundary_fraction * scores.len() as f64).ceil() as usize)
                .max(2)
                .min(scores.len());
            Ok(PiSvmMachine {
                calibration: ScoreCalibration::fit(&scores[..keep])?,
                binary,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PiSvmModel {
        kind: view.kind,
        known_classes: view.known_classes.clone(),
        dim: view.dim(),
        machines,
    })
}

/// Known-class probabilities first; the SPL pseudo machine, if any, feeds
/// the unknown channel.
fn split_channels(mut probs: Vec<f64>, n_known: usize) -> Prediction {
    let unknown = probs[n_known..].iter().copied().fold(0.0, f64::max);
    probs.truncate(n_known);
    Prediction::from_channels(probs, unknown)
}

impl OpenSetModel for WsvmModel {
    fn family(&self) -> &'static str {
        "wsvm"
    }

    fn known_classes(&self) -> &[String] {
        &self.known_classes
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, query: &[f64]) -> Result<Prediction> {
        check_dim(self.dim, query.len())?;
        let probs = self.machines.iter().map(|m| m.probability(query)).collect();
        Ok(split_channels(probs, self.known_classes.len()))
    }
}

impl OpenSetModel for PiSvmModel {
    fn family(&self) -> &'static str {
        "pisvm"
    }

    fn known_classes(&self) -> &[String] {
        &self.known_classes
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, query: &[f64]) -> Result<Prediction> {
        check_dim(self.dim, query.len())?;
        let probs = self
            .machines
            .iter()
            .map(|m| m.calibration.probability(m.binary.decision(query)))
            .collect();
        Ok(split_channels(probs, self.known_classes.len()))
    }
}
