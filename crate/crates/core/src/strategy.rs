//! Model-agnostic training-set transformations for exploiting known unknowns.
//!
//! * `Spl` folds every unknown-marked sample into one pseudo class.
//! * `Mpl` gives every unknown-marked sample its own pseudo class.
//! * `Kvr` keeps unknowns out of the positive classes; they only ever act as
//!   rest-class negatives.
//! * `Baseline` drops unknowns.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Label, Sample};
use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Baseline,
    Spl,
    Mpl,
    Kvr,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Baseline,
        StrategyKind::Spl,
        StrategyKind::Mpl,
        StrategyKind::Kvr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Baseline => "baseline",
            StrategyKind::Spl => "spl",
            StrategyKind::Mpl => "mpl",
            StrategyKind::Kvr => "kvr",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown strategy {s:?}")))
    }
}

/// Label inside a view. Pseudo labels live in their own namespace and can
/// never collide with a class identifier.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViewLabel {
    Known(String),
    Pseudo(usize),
    Unknown,
}

impl fmt::Display for ViewLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViewLabel::Known(c) => f.write_str(c),
            ViewLabel::Pseudo(i) => write!(f, "<pseudo:{i}>"),
            ViewLabel::Unknown => f.write_str(crate::data::UNKNOWN_TOKEN),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewSample {
    pub features: Vec<f64>,
    pub label: ViewLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyView {
    pub kind: StrategyKind,
    /// Strategy asked for; differs from `kind` when the view degraded.
    pub requested: StrategyKind,
    /// Set when a KUC-based strategy was requested without any unknowns.
    pub degraded: bool,
    pub samples: Vec<ViewSample>,
    pub known_classes: Vec<String>,
    /// Known classes first (in `known_classes` order), then pseudo classes.
    pub positive_classes: Vec<ViewLabel>,
    /// Sample indices that may only serve as rest-class negatives.
    pub negative_pool: Vec<usize>,
    targets: Vec<Option<usize>>,
}

pub fn apply_strategy(train: &[Sample], kind: StrategyKind) -> Result<StrategyView> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut known_classes: Vec<String> = Vec::new();
    for s in train {
        if let Label::Known(c) = &s.label {
            if !known_classes.contains(c) {
                known_classes.push(c.clone());
            }
        }
    }
    if known_classes.is_empty() {
        return Err(Error::invalid("training set has no known class"));
    }
    let n_unknown = train.iter().filter(|s| s.label.is_unknown()).count();
    let degraded = kind != StrategyKind::Baseline && n_unknown == 0;
    if degraded {
        log::warn!("{kind} requested without unknown samples; using baseline");
    }
    let effective = if degraded { StrategyKind::Baseline } else { kind };

    let mut samples = Vec::with_capacity(train.len());
    let mut negative_pool = Vec::new();
    let mut next_pseudo = 0usize;
    for s in train {
        let label = match (&s.label, effective) {
            (Label::Known(c), _) => ViewLabel::Known(c.clone()),
            (Label::Unknown, StrategyKind::Baseline) => continue,
            (Label::Unknown, StrategyKind::Spl) => ViewLabel::Pseudo(0),
            (Label::Unknown, StrategyKind::Mpl) => {
                next_pseudo += 1;
                ViewLabel::Pseudo(next_pseudo - 1)
            }
            (Label::Unknown, StrategyKind::Kvr) => {
                negative_pool.push(samples.len());
                ViewLabel::Unknown
            }
        };
        samples.push(ViewSample {
            features: s.features.clone(),
            label,
        });
    }
    let n_pseudo = match effective {
        StrategyKind::Spl => 1,
        StrategyKind::Mpl => n_unknown,
        _ => 0,
    };
    StrategyView::from_parts(effective, kind, degraded, samples, known_classes, n_pseudo)
}

impl StrategyView {
    /// Assembles a view from already-labeled samples. Unknown-labeled samples
    /// become the negative pool.
    pub(crate) fn from_parts(
        kind: StrategyKind,
        requested: StrategyKind,
        degraded: bool,
        samples: Vec<ViewSample>,
        known_classes: Vec<String>,
        n_pseudo: usize,
    ) -> Result<Self> {
        let mut positive_classes: Vec<ViewLabel> = known_classes.iter().map(|c| ViewLabel::Known(c.clone())).collect();
        positive_classes.extend((0..n_pseudo).map(ViewLabel::Pseudo));
        let n_known = known_classes.len();
        let mut targets = Vec::with_capacity(samples.len());
        let mut negative_pool = Vec::new();
        for (i, s) in samples.iter().enumerate() {
            let t = match &s.label {
                ViewLabel::Known(c) => Some(
                    known_classes
                        .iter()
                        .position(|k| k == c)
                        .ok_or_else(|| Error::UnknownLabel(c.clone()))?,
                ),
                ViewLabel::Pseudo(p) if *p < n_pseudo => Some(n_known + p),
                ViewLabel::Pseudo(p) => return Err(Error::UnknownLabel(format!("<pseudo:{p}>"))),
                ViewLabel::Unknown => {
                    negative_pool.push(i);
                    None
                }
            };
            targets.push(t);
        }
        Ok(StrategyView {
            kind,
            requested,
            degraded,
            samples,
            known_classes,
            positive_classes,
            negative_pool,
            targets,
        })
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map(|s| s.features.len()).unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_known(&self) -> usize {
        self.known_classes.len()
    }

    pub fn n_positive(&self) -> usize {
        self.positive_classes.len()
    }

    /// Positive-class index of sample `i`; `None` for negative-pool samples.
    pub fn target(&self, i: usize) -> Option<usize> {
        self.targets[i]
    }

    pub fn targets(&self) -> &[Option<usize>] {
        &self.targets
    }

    pub fn is_pseudo(&self, class: usize) -> bool {
        class >= self.n_known()
    }

    pub fn members(&self, class: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.targets[i] == Some(class)).collect()
    }

    /// Every sample that is not a member of `class`, negative pool included.
    pub fn rest(&self, class: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.targets[i] != Some(class)).collect()
    }

    pub fn map_prediction(&self, raw: &ViewLabel) -> Result<Label> {
        match raw {
            ViewLabel::Unknown => Ok(Label::Unknown),
            ViewLabel::Known(c) if self.known_classes.contains(c) => Ok(Label::Known(c.clone())),
            ViewLabel::Pseudo(_) if self.positive_classes.contains(raw) => Ok(Label::Unknown),
            other => Err(Error::UnknownLabel(other.to_string())),
        }
    }
}
