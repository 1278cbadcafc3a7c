//! Feature-space mixup of known-class pairs as synthetic known unknowns,
//! with the centroid-distance filter against the occupation problem.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::data::{write_features, Label, Sample};
use crate::error::{Error, Result};
use crate::util::{euclidean, round_half_away, seeded_rng};

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixupConfig {
    pub beta_a: f64,
    pub beta_b: f64,
    pub lambda_range: [f64; 2],
    /// Synthesized samples per known training sample.
    pub ratio: f64,
    pub alpha: f64,
    pub seed: u64,
    /// Attempts allowed per requested sample.
    pub budget_factor: usize,
}

impl Default for MixupConfig {
    fn default() -> Self {
        MixupConfig {
            beta_a: 2.0,
            beta_b: 2.0,
            lambda_range: [0.4, 0.6],
            ratio: 1.0,
            alpha: 0.0,
            seed: 0,
            budget_factor: 100,
        }
    }
}

impl MixupConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.lambda_range;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::config("lambda_range must satisfy 0 < lo < hi < 1"));
        }
        if !(self.beta_a > 0.0 && self.beta_b > 0.0) {
            return Err(Error::config("beta shape parameters must be positive"));
        }
        if !(self.ratio >= 0.0 && self.ratio.is_finite()) {
            return Err(Error::config("mixup ratio must be non-negative"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("alpha must be non-negative"));
        }
        if self.budget_factor == 0 {
            return Err(Error::config("budget_factor must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentroidStats {
    pub classes: Vec<String>,
    pub centroids: Vec<Vec<f64>>,
    /// Mean distance over all unordered centroid pairs.
    pub mean_distance: f64,
}

/// Per-class means of the known samples (unknown-labeled rows are skipped),
/// classes in sorted order.
pub fn centroid_stats(train_kc: &[Sample]) -> Result<CentroidStats> {
    let mut groups: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
    for s in train_kc {
        if let Label::Known(c) = &s.label {
            let e = groups.entry(c.as_str()).or_insert_with(|| (vec![0.0; s.dim()], 0));
            if e.0.len() != s.dim() {
                return Err(Error::DimensionMismatch {
                    expected: e.0.len(),
                    actual: s.dim(),
                });
            }
            for (a, v) in e.0.iter_mut().zip(&s.features) {
                *a += v;
            }
            e.1 += 1;
        }
    }
    if groups.len() < 2 {
        return Err(Error::invalid("centroid statistics need at least two known classes"));
    }
    let classes: Vec<String> = groups.keys().map(|c| c.to_string()).collect();
    let centroids: Vec<Vec<f64>> = groups
        .into_values()
        .map(|(sum, n)| sum.into_iter().map(|v| v / n as f64).collect())
        .collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..centroids.len() {
        for j in i + 1..centroids.len() {
            total += euclidean(&centroids[i], &centroids[j]);
            pairs += 1;
        }
    }
    Ok(CentroidStats {
        classes,
        centroids,
        mean_distance: total / pairs as f64,
    })
}

impl CentroidStats {
    /// True when `x` is farther than `alpha · d̄` from every centroid.
    pub fn passes(&self, x: &[f64], alpha: f64) -> bool {
        let bound = alpha * self.mean_distance;
        self.centroids.iter().all(|c| euclidean(x, c) > bound)
    }

    /// Distance from `x` to its nearest centroid, in units of `d̄`.
    pub fn clearance(&self, x: &[f64]) -> f64 {
        self.centroids
            .iter()
            .map(|c| euclidean(x, c))
            .fold(f64::INFINITY, f64::min)
            / self.mean_distance
    }
}

/// Draws from the Beta distribution until the value lands in the window.
pub fn sample_lambda<R: Rng + ?Sized>(cfg: &MixupConfig, rng: &mut R) -> Result<f64> {
    let beta = Beta::new(cfg.beta_a, cfg.beta_b).map_err(|e| Error::config(format!("beta distribution: {e}")))?;
    let [lo, hi] = cfg.lambda_range;
    loop {
        let l = beta.sample(rng);
        if (lo..=hi).contains(&l) {
            return Ok(l);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixupSample {
    pub features: Vec<f64>,
    pub i: usize,
    pub j: usize,
    pub lambda: f64,
}

impl MixupSample {
    pub fn reconstruct(sources: &[Sample], i: usize, j: usize, lambda: f64) -> Vec<f64> {
        sources[i]
            .features
            .iter()
            .zip(&sources[j].features)
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect()
    }

    pub fn to_sample(&self) -> Sample {
        Sample::unknown(self.features.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixupStats {
    pub requested: usize,
    pub attempted: usize,
    pub accepted: usize,
    pub shortfall: usize,
    pub alpha: f64,
    pub acceptance_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixupBatch {
    pub samples: Vec<MixupSample>,
    pub stats: MixupStats,
}

impl MixupBatch {
    pub fn is_short(&self) -> bool {
        self.stats.shortfall > 0
    }

    pub fn to_samples(&self) -> Vec<Sample> {
        self.samples.iter().map(MixupSample::to_sample).collect()
    }
}

/// Candidate stream: uniform first source, second source resampled until its
/// class differs, λ from the truncated Beta.
struct Candidates<'a, R> {
    sources: &'a [Sample],
    rng: R,
    cfg: MixupConfig,
}

impl<R: Rng> Candidates<'_, R> {
    fn next(&mut self) -> Result<MixupSample> {
        let n = self.sources.len();
        let i = self.rng.random_range(0..n);
        let j = loop {
            let j = self.rng.random_range(0..n);
            if self.sources[j].label != self.sources[i].label {
                break j;
            }
        };
        let lambda = sample_lambda(&self.cfg, &mut self.rng)?;
        Ok(MixupSample {
            features: MixupSample::reconstruct(self.sources, i, j, lambda),
            i,
            j,
            lambda,
        })
    }
}

fn check_sources(train_kc: &[Sample]) -> Result<()> {
    if train_kc.iter().any(|s| s.label.is_unknown()) {
        return Err(Error::invalid("mixup sources must all carry known labels"));
    }
    let first = train_kc.first().ok_or(Error::Empty("mixup sources"))?;
    if train_kc.iter().all(|s| s.label == first.label) {
        return Err(Error::invalid("mixup needs at least two known classes"));
    }
    Ok(())
}

/// Generates `round(ratio · |train_kc|)` accepted mixups, or stops after
/// `budget_factor` times as many attempts and reports the shortfall.
pub fn generate_mixups(train_kc: &[Sample], stats: &CentroidStats, cfg: &MixupConfig) -> Result<MixupBatch> {
    cfg.validate()?;
    check_sources(train_kc)?;
    let requested = round_half_away(cfg.ratio * train_kc.len() as f64);
    let budget = requested.saturating_mul(cfg.budget_factor);
    let mut stream = Candidates {
        sources: train_kc,
        rng: seeded_rng(cfg.seed),
        cfg: *cfg,
    };
    let mut samples = Vec::with_capacity(requested);
    let mut attempted = 0;
    while samples.len() < requested && attempted < budget {
        let cand = stream.next()?;
        attempted += 1;
        if stats.passes(&cand.features, cfg.alpha) {
            samples.push(cand);
        }
    }
    let accepted = samples.len();
    if accepted < requested {
        log::warn!(
            "mixup budget exhausted at alpha {}: {accepted} of {requested} accepted",
            cfg.alpha
        );
    }
    Ok(MixupBatch {
        samples,
        stats: MixupStats {
            requested,
            attempted,
            accepted,
            shortfall: requested - accepted,
            alpha: cfg.alpha,
            acceptance_rate: if attempted == 0 {
                1.0
            } else {
                accepted as f64 / attempted as f64
            },
        },
    })
}

/// The first `count` unfiltered candidates of the stream for `cfg.seed`.
pub fn candidate_stream(train_kc: &[Sample], cfg: &MixupConfig, count: usize) -> Result<Vec<MixupSample>> {
    cfg.validate()?;
    check_sources(train_kc)?;
    let mut stream = Candidates {
        sources: train_kc,
        rng: seeded_rng(cfg.seed),
        cfg: *cfg,
    };
    (0..count).map(|_| stream.next()).collect()
}

/// Indices of the candidates that pass the filter at `alpha`.
pub fn filter_candidates(candidates: &[MixupSample], stats: &CentroidStats, alpha: f64) -> Vec<usize> {
    candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| stats.passes(&c.features, alpha))
        .map(|(i, _)| i)
        .collect()
}

pub fn write_mixups<W: std::io::Write>(out: W, batch: &MixupBatch) -> Result<()> {
    write_features(out, &batch.to_samples())
}

pub fn stats_json(stats: &[MixupStats]) -> Result<String> {
    Ok(serde_json::to_string_pretty(stats)?)
}
