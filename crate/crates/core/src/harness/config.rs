use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{SplitSpec, ToySpec};
use crate::error::{Error, Result};
use crate::eval::EvalMode;
use crate::evm::EvmConfig;
use crate::linear::TrainConfig;
use crate::strategy::StrategyKind;
use crate::svm::{Kernel, SvmConfig};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Osnn,
    Linear,
    Evm,
    Cevm,
    Wsvm,
    Pisvm,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Osnn => "osnn",
            Family::Linear => "linear",
            Family::Evm => "evm",
            Family::Cevm => "cevm",
            Family::Wsvm => "wsvm",
            Family::Pisvm => "pisvm",
        }
    }

    pub fn supports(self, kind: StrategyKind) -> bool {
        !(kind == StrategyKind::Mpl && matches!(self, Family::Linear | Family::Wsvm | Family::Pisvm))
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    Toy {
        #[serde(default)]
        toy: ToySpec,
    },
    Blobs {
        n_classes: usize,
        per_class: usize,
        dim: usize,
        spread: f64,
        split: SplitSpec,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        header: bool,
        split: SplitSpec,
    },
}

/// Hyperparameter lists; the lattice is the product of the lists that apply
/// to the family, in field order. Empty lists keep the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub learning_rate: Vec<f64>,
    pub l2: Vec<f64>,
    pub tail_size: Vec<usize>,
    pub cluster_eps: Vec<f64>,
    pub gamma: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: Family,
    /// Cell label; defaults to the family name and must be unique.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub linear: TrainConfig,
    #[serde(default)]
    pub evm: EvmConfig,
    #[serde(default)]
    pub svm: SvmConfig,
    #[serde(default)]
    pub grid: Grid,
}

/// Concrete parameters of one lattice point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModelParams {
    Osnn,
    Linear(TrainConfig),
    Evm(EvmConfig),
    Cevm(EvmConfig),
    Wsvm(SvmConfig),
    Pisvm(SvmConfig),
}

impl ModelSpec {
    pub fn label(&self) -> &str {
        self.name.as_deref().unwrap_or(self.family.as_str())
    }

    fn check_grid(&self) -> Result<()> {
        let g = &self.grid;
        let used: &[(&str, bool)] = &[
            ("learning_rate", !g.learning_rate.is_empty()),
            ("l2", !g.l2.is_empty()),
            ("tail_size", !g.tail_size.is_empty()),
            ("cluster_eps", !g.cluster_eps.is_empty()),
            ("gamma", !g.gamma.is_empty()),
            ("c", !g.c.is_empty()),
        ];
        let allowed: &[&str] = match self.family {
            Family::Osnn => &[],
            Family::Linear => &["learning_rate", "l2"],
            Family::Evm => &["tail_size"],
            Family::Cevm => &["tail_size", "cluster_eps"],
            Family::Wsvm | Family::Pisvm => &["gamma", "c"],
        };
        for (name, set) in used {
            if *set && !allowed.contains(name) {
                return Err(Error::config(format!(
                    "grid key {name} does not apply to {}",
                    self.family
                )));
            }
        }
        Ok(())
    }

    /// All lattice points in lexicographic order of the grid lists.
    pub fn lattice(&self) -> Result<Vec<ModelParams>> {
        self.check_grid()?;
        let g = &self.grid;
        fn axis<T: Copy>(list: &[T], base: T) -> Vec<T> {
            if list.is_empty() {
                vec![base]
            } else {
                list.to_vec()
            }
        }
        let mut out = Vec::new();
        match self.family {
            Family::Osnn => out.push(ModelParams::Osnn),
            Family::Linear => {
                for lr in axis(&g.learning_rate, self.linear.learning_rate) {
                    for l2 in axis(&g.l2, self.linear.l2) {
                        out.push(ModelParams::Linear(TrainConfig {
                            learning_rate: lr,
                            l2,
                            ..self.linear
                        }));
                    }
                }
            }
            Family::Evm | Family::Cevm => {
                for tail_size in axis(&g.tail_size, self.evm.tail_size) {
                    for eps in axis(&g.cluster_eps, self.evm.cluster_eps) {
                        let cfg = EvmConfig {
                            tail_size,
                            cluster_eps: eps,
                            ..self.evm
                        };
                        cfg.validate()?;
                        out.push(if self.family == Family::Evm {
                            ModelParams::Evm(cfg)
                        } else {
                            ModelParams::Cevm(cfg)
                        });
                    }
                }
            }
            Family::Wsvm | Family::Pisvm => {
                let base_gamma = match self.svm.kernel {
                    Kernel::Rbf { gamma } => Some(gamma),
                    Kernel::Linear => None,
                };
                if base_gamma.is_none() && !g.gamma.is_empty() {
                    return Err(Error::config("gamma grid needs an RBF kernel"));
                }
                let gammas: Vec<Option<f64>> = if g.gamma.is_empty() {
                    vec![base_gamma]
                } else {
                    g.gamma.iter().map(|v| Some(*v)).collect()
                };
                for gamma in gammas {
                    for c in axis(&g.c, self.svm.c) {
                        let cfg = SvmConfig {
                            kernel: gamma.map_or(Kernel::Linear, |gamma| Kernel::Rbf { gamma }),
                            c,
                            ..self.svm
                        };
                        cfg.validate()?;
                        out.push(if self.family == Family::Wsvm {
                            ModelParams::Wsvm(cfg)
                        } else {
                            ModelParams::Pisvm(cfg)
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixupSweep {
    pub ratios: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Model labels to run the sweep for.
    pub models: Vec<String>,
    pub strategies: Vec<StrategyKind>,
}

impl MixupSweep {
    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty() || self.alphas.is_empty() || self.models.is_empty() || self.strategies.is_empty()
    }
}

fn default_repeats() -> usize {
    1
}

fn default_folds() -> usize {
    5
}

fn default_modes() -> Vec<EvalMode> {
    EvalMode::ALL.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Cross-validation folds of the grid search.
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_modes")]
    pub eval_modes: Vec<EvalMode>,
    pub strategies: Vec<StrategyKind>,
    pub dataset: DatasetSource,
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub mixup: MixupSweep,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config; relative CSV paths resolve against the config's
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        if let DatasetSource::Csv { path: data, .. } = &mut cfg.dataset {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::config("at least one model is required"));
        }
        if self.strategies.is_empty() {
            return Err(Error::config("at least one strategy is required"));
        }
        if self.repeats == 0 {
            return Err(Error::config("repeats must be at least 1"));
        }
        if self.folds < 2 {
            return Err(Error::config("folds must be at least 2"));
        }
        if self.eval_modes.is_empty() {
            return Err(Error::config("at least one eval mode is required"));
        }
        let mut labels: Vec<&str> = self.models.iter().map(ModelSpec::label).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("model names must be unique"));
        }
        for m in &self.models {
            m.lattice()?;
        }
        for name in &self.mixup.models {
            if !labels.contains(&name.as_str()) {
                return Err(Error::config(format!("mixup sweep names unknown model {name}")));
            }
        }
        if self.mixup.ratios.iter().any(|r| !(*r >= 0.0 && r.is_finite()))
            || self.mixup.alphas.iter().any(|a| !(*a >= 0.0 && a.is_finite()))
        {
            return Err(Error::config("mixup ratios and alphas must be non-negative"));
        }
        match &self.dataset {
            DatasetSource::Blobs { split, .. } | DatasetSource::Csv { split, .. } => split.validate(),
            DatasetSource::Toy { .. } => Ok(()),
        }
    }

    /// Hex SHA-256 of the canonical JSON form of the config.
    pub fn digest(&self) -> Result<String> {
        let json = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&json)))
    }
}

/// Seed of a cell: the first eight bytes of SHA-256 over the master seed and
/// the coordinates.
pub fn derive_seed(master: u64, coords: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    for c in coords {
        h.update((c.len() as u64).to_le_bytes());
        h.update(c.as_bytes());
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("digest has 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
strategies = ["baseline", "kvr"]
[dataset]
kind = "toy"
[[models]]
family = "evm"
grid.tail_size = [5, 10]
"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.repeats, 1);
        assert_eq!(cfg.folds, 5);
        assert_eq!(cfg.eval_modes, EvalMode::ALL.to_vec());
        assert_eq!(cfg.models[0].lattice().unwrap().len(), 2);
        assert_eq!(cfg.digest().unwrap().len(), 64);
    }

    #[test]
    fn rejects_bad_configs() {
        let no_models = "strategies = [\"spl\"]\nmodels = []\n[dataset]\nkind = \"toy\"\n";
        assert!(ExperimentConfig::from_toml(no_models).is_err());
        let wrong_key = MINIMAL.replace("grid.tail_size", "grid.gamma");
        assert!(ExperimentConfig::from_toml(&wrong_key).is_err());
        let zero_repeats = format!("repeats = 0\n{MINIMAL}");
        assert!(ExperimentConfig::from_toml(&zero_repeats).is_err());
        let dup = format!("{MINIMAL}[[models]]\nfamily = \"evm\"\n");
        assert!(ExperimentConfig::from_toml(&dup).is_err());
    }

    #[test]
    fn svm_lattice_order() {
        let spec = ModelSpec {
            family: Family::Pisvm,
            name: None,
            linear: TrainConfig::default(),
            evm: EvmConfig::default(),
            svm: SvmConfig::default(),
            grid: Grid {
                gamma: vec![0.1, 1.0],
                c: vec![1.0, 10.0],
                ..Grid::default()
            },
        };
        let l = spec.lattice().unwrap();
        assert_eq!(l.len(), 4);
        match (&l[0], &l[1]) {
            (ModelParams::Pisvm(a), ModelParams::Pisvm(b)) => {
                assert_eq!(a.kernel, Kernel::Rbf { gamma: 0.1 });
                assert_eq!((a.c, b.c), (1.0, 10.0));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn seeds_depend_only_on_coordinates() {
        let a = derive_seed(7, &["split", "0"]);
        assert_eq!(a, derive_seed(7, &["split", "0"]));
        assert_ne!(a, derive_seed(8, &["split", "0"]));
        assert_ne!(a, derive_seed(7, &["split", "1"]));
        assert_ne!(derive_seed(7, &["ab", "c"]), derive_seed(7, &["a", "bc"]));
    }
}
