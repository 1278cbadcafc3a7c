//! The uniform contract every open-set classifier implements, plus a
//! serializable wrapper over the concrete model families.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::util::argmax;

/// Model output for one query.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Confidence per known class, in the model's `known_classes` order.
    pub known: Vec<f64>,
    /// Evidence for the unknown label (pseudo classes); 0 for models that
    /// reject purely by threshold.
    pub unknown: f64,
    /// Predicted known class, `None` when the model itself predicts `u`.
    pub label: Option<usize>,
}

impl Prediction {
    /// Predicts `u` when the unknown channel strictly beats every known
    /// class, otherwise the best known class (lowest index on ties).
    pub fn from_channels(known: Vec<f64>, unknown: f64) -> Self {
        let best = argmax(&known);
        let label = match best {
            Some(b) if known[b] >= unknown => Some(b),
            _ => None,
        };
        Prediction { known, unknown, label }
    }

    pub fn max_known(&self) -> f64 {
        self.known.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub trait OpenSetModel: Send + Sync {
    fn family(&self) -> &'static str;
    fn known_classes(&self) -> &[String];
    fn dim(&self) -> usize;
    fn predict(&self, query: &[f64]) -> Result<Prediction>;
}

/// Any trained model, tagged by family for persistence.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum TrainedModel {
    Osnn(crate::osnn::OsnnModel),
    Linear(crate::linear::LinearModel),
    Evm(crate::evm::EvmModel),
    Wsvm(crate::svm::WsvmModel),
    Pisvm(crate::svm::PiSvmModel),
}

impl TrainedModel {
    fn inner(&self) -> &dyn OpenSetModel {
        match self {
            TrainedModel::Osnn(m) => m,
            TrainedModel::Linear(m) => m,
            TrainedModel::Evm(m) => m,
            TrainedModel::Wsvm(m) => m,
            TrainedModel::Pisvm(m) => m,
        }
    }
}

impl OpenSetModel for TrainedModel {
    fn family(&self) -> &'static str {
        self.inner().family()
    }

    fn known_classes(&self) -> &[String] {
        self.inner().known_classes()
    }

    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn predict(&self, query: &[f64]) -> Result<Prediction> {
        self.inner().predict(query)
    }
}
