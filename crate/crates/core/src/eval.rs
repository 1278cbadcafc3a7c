//! Open-set metrics over score tables: OSCR (CCR against FPR), ROC/AUC for
//! known-vs-unknown, and CCR at fixed FPR.
//!
//! A row is accepted at threshold δ when the model predicted a known class
//! and its max known confidence is strictly greater than δ. Thresholds are
//! the distinct observed confidences plus ±∞, so curves are exact.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Category, TestSample};
use crate::error::{Error, Result};
use crate::model::OpenSetModel;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Truth {
    Known(usize),
    KnownUnknown,
    UnknownUnknown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub truth: Truth,
    /// Predicted known class, `None` for `u`.
    pub predicted: Option<usize>,
    /// Max known-class confidence.
    pub confidence: f64,
    pub unknown_confidence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub classes: Vec<String>,
    pub rows: Vec<ScoreRow>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Unknown pool holds KUC and UUC rows.
    Biased,
    /// Unknown pool holds UUC rows only.
    Unbiased,
}

impl EvalMode {
    pub const ALL: [EvalMode; 2] = [EvalMode::Biased, EvalMode::Unbiased];

    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Biased => "biased",
            EvalMode::Unbiased => "unbiased",
        }
    }

    pub fn in_unknown_pool(self, truth: &Truth) -> bool {
        match truth {
            Truth::Known(_) => false,
            Truth::KnownUnknown => self == EvalMode::Biased,
            Truth::UnknownUnknown => true,
        }
    }
}

impl std::fmt::Display for EvalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "biased" => Ok(EvalMode::Biased),
            "unbiased" => Ok(EvalMode::Unbiased),
            other => Err(Error::config(format!("unknown eval mode {other:?}"))),
        }
    }
}

pub fn build_score_table(model: &dyn OpenSetModel, test: &[TestSample]) -> Result<ScoreTable> {
    let classes = model.known_classes().to_vec();
    let rows = test
        .iter()
        .map(|s| {
            let truth = match &s.category {
                Category::Known(c) => Truth::Known(
                    classes
                        .iter()
                        .position(|k| k == c)
                        .ok_or_else(|| Error::UnknownLabel(c.clone()))?,
                ),
                Category::KnownUnknown => Truth::KnownUnknown,
                Category::UnknownUnknown => Truth::UnknownUnknown,
            };
            let p = model.predict(&s.features)?;
            let confidence = p.max_known();
            if !(confidence.is_finite() && p.unknown.is_finite()) {
                return Err(Error::invalid("model produced a non-finite confidence"));
            }
            Ok(ScoreRow {
                truth,
                predicted: p.label,
                confidence,
                unknown_confidence: p.unknown,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreTable { classes, rows })
}

impl ScoreTable {
    pub fn n_known(&self) -> usize {
        self.rows.iter().filter(|r| matches!(r.truth, Truth::Known(_))).count()
    }

    pub fn unknown_pool(&self, mode: EvalMode) -> usize {
        self.rows.iter().filter(|r| mode.in_unknown_pool(&r.truth)).count()
    }

    fn pools(&self, mode: EvalMode) -> Result<(usize, usize)> {
        let (k, u) = (self.n_known(), self.unknown_pool(mode));
        if k == 0 {
            return Err(Error::Empty("known test pool"));
        }
        if u == 0 {
            return Err(Error::Empty("unknown test pool"));
        }
        Ok((k, u))
    }

    /// Distinct confidences, descending, framed by +∞ and -∞.
    fn thresholds(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.rows.iter().map(|r| r.confidence).collect();
        t.sort_by(|a, b| b.total_cmp(a));
        t.dedup();
        let mut out = Vec::with_capacity(t.len() + 2);
        out.push(f64::INFINITY);
        out.extend(t);
        out.push(f64::NEG_INFINITY);
        out
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub delta: f64,
    /// CCR for OSCR curves, TPR for ROC curves.
    pub rate: f64,
    pub fpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    /// Ordered by decreasing δ, hence non-decreasing FPR.
    pub points: Vec<CurvePoint>,
    pub n_positive: usize,
    pub n_unknown: usize,
}

/// Counts for every threshold: accepted rows with `confidence > δ`.
fn sweep<F, G>(table: &ScoreTable, positive: F, negative: G) -> Vec<(f64, usize, usize)>
where
    F: Fn(&ScoreRow) -> bool,
    G: Fn(&ScoreRow) -> bool,
{
    let mut rows: Vec<&ScoreRow> = table.rows.iter().collect();
    rows.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    let mut out = Vec::new();
    let (mut pos, mut neg) = (0usize, 0usize);
    let mut k = 0;
    for delta in table.thresholds() {
        while k < rows.len() && rows[k].confidence > delta {
            pos += usize::from(positive(rows[k]));
            neg += usize::from(negative(rows[k]));
            k += 1;
        }
        out.push((delta, pos, neg));
    }
    out
}

fn to_curve(counts: Vec<(f64, usize, usize)>, n_positive: usize, n_unknown: usize) -> Curve {
    Curve {
        points: counts
            .into_iter()
            .map(|(delta, p, n)| CurvePoint {
                delta,
                rate: p as f64 / n_positive as f64,
                fpr: n as f64 / n_unknown as f64,
            })
            .collect(),
        n_positive,
        n_unknown,
    }
}

pub fn oscr_curve(table: &ScoreTable, mode: EvalMode) -> Result<Curve> {
    let (nk, nu) = table.pools(mode)?;
    let counts = sweep(
        table,
        |r| matches!(r.truth, Truth::Known(c) if r.predicted == Some(c)),
        |r| mode.in_unknown_pool(&r.truth) && r.predicted.is_some(),
    );
    Ok(to_curve(counts, nk, nu))
}

/// ROC of known-vs-unknown on the max known confidence, and its area by the
/// trapezoid rule (ties count one half).
pub fn roc_auc(table: &ScoreTable, mode: EvalMode) -> Result<(Curve, f64)> {
    let (nk, nu) = table.pools(mode)?;
    let counts = sweep(
        table,
        |r| matches!(r.truth, Truth::Known(_)),
        |r| mode.in_unknown_pool(&r.truth),
    );
    let curve = to_curve(counts, nk, nu);
    let auc = curve
        .points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].rate + w[0].rate) * 0.5)
        .sum();
    Ok((curve, auc))
}

/// CCR at a target FPR, linearly interpolated between the bracketing
/// points. Below the smallest achieved FPR the CCR of that point is used.
pub fn ccr_at_fpr(curve: &Curve, target: f64) -> Result<f64> {
    if curve.points.is_empty() {
        return Err(Error::Empty("curve"));
    }
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::invalid(format!("target FPR {target} outside [0, 1]")));
    }
    let pts = &curve.points;
    let Some(lower) = pts.iter().rposition(|p| p.fpr <= target) else {
        let first = pts[0].fpr;
        return Ok(pts
            .iter()
            .filter(|p| p.fpr == first)
            .map(|p| p.rate)
            .fold(f64::NEG_INFINITY, f64::max));
    };
    let lo = pts[lower];
    match pts.get(lower + 1) {
        Some(hi) if lo.fpr < target => {
            let t = (target - lo.fpr) / (hi.fpr - lo.fpr);
            Ok(lo.rate + t * (hi.rate - lo.rate))
        }
        _ => Ok(lo.rate),
    }
}

/// Number of accepted unknowns at the curve point used for `target`; small
/// values mean the CCR estimate rests on few samples.
pub fn support_at(curve: &Curve, target: f64) -> usize {
    let fpr = curve
        .points
        .iter()
        .rev()
        .find(|p| p.fpr <= target)
        .map_or(curve.points.first().map_or(0.0, |p| p.fpr), |p| p.fpr);
    (fpr * curve.n_unknown as f64).round() as usize
}

pub const FPR_TARGETS: [f64; 3] = [0.001, 0.01, 0.1];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcrAt {
    pub fpr: f64,
    pub ccr: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mode: EvalMode,
    pub auc: f64,
    pub ccr_at: Vec<CcrAt>,
    pub n_known: usize,
    pub n_unknown: usize,
}

pub struct Evaluation {
    pub metrics: Metrics,
    pub oscr: Curve,
    pub roc: Curve,
}

pub fn evaluate(table: &ScoreTable, mode: EvalMode) -> Result<Evaluation> {
    let oscr = oscr_curve(table, mode)?;
    let (roc, auc) = roc_auc(table, mode)?;
    let ccr_at = FPR_TARGETS
        .iter()
        .map(|&t| {
            Ok(CcrAt {
                fpr: t,
                ccr: ccr_at_fpr(&oscr, t)?,
                support: support_at(&oscr, t),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation {
        metrics: Metrics {
            mode,
            auc,
            ccr_at,
            n_known: oscr.n_positive,
            n_unknown: oscr.n_unknown,
        },
        oscr,
        roc,
    })
}

fn fmt_delta(d: f64) -> String {
    if d == f64::INFINITY {
        "inf".into()
    } else if d == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        d.to_string()
    }
}

pub fn write_oscr_csv<W: Write>(mut out: W, curve: &Curve) -> Result<()> {
    writeln!(out, "delta,ccr,fpr")?;
    for p in &curve.points {
        writeln!(out, "{},{},{}", fmt_delta(p.delta), p.rate, p.fpr)?;
    }
    Ok(())
}

pub fn write_roc_csv<W: Write>(mut out: W, curve: &Curve) -> Result<()> {
    writeln!(out, "delta,tpr,fpr")?;
    for p in &curve.points {
        writeln!(out, "{},{},{}", fmt_delta(p.delta), p.rate, p.fpr)?;
    }
    Ok(())
}
