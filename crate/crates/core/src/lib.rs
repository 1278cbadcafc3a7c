//! Open-set recognition with known-unknown training samples.
//!
//! Training sets mix labeled known classes with unlabeled known unknowns.
//! Strategy views decide how a model sees those unknowns; models expose
//! per-class confidences; the eval module turns them into OSCR and ROC
//! metrics; the harness runs whole experiments from a config file.

pub mod data;
pub mod error;
pub mod eval;
pub mod evm;
pub mod evt;
pub mod harness;
pub mod linear;
pub mod mixup;
pub mod model;
pub mod osnn;
pub mod strategy;
pub mod svm;
pub mod util;

pub use error::{Error, Result};
