//! Extreme Value Machine and its clustered variant.
//!
//! Every sample of a positive class becomes an anchor carrying a Weibull
//! model of its half-distances to the nearest rest-class samples. A class's
//! confidence at a query is the best inclusion probability among its anchors.
//! Which samples count as rest material is decided by the strategy view: KvR
//! negatives sit in every rest pool but never own anchors.

mod dbscan;

pub use dbscan::dbscan;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evt::{fit_tail, WeibullParams};
use crate::model::{OpenSetModel, Prediction};
use crate::strategy::{StrategyKind, StrategyView, ViewLabel, ViewSample};
use crate::util::{check_dim, euclidean};

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvmConfig {
    pub tail_size: usize,
    /// Multiplier applied to rest distances before fitting (0.5 = margins).
    pub margin_scale: f64,
    pub cluster_eps: f64,
    pub cluster_min_pts: usize,
    /// Greedy set-cover reduction keeping anchors until every class sample
    /// has inclusion at least this high. `None` keeps all anchors.
    pub coverage_threshold: Option<f64>,
}

impl Default for EvmConfig {
    fn default() -> Self {
        EvmConfig {
            tail_size: 20,
            margin_scale: 0.5,
            cluster_eps: 0.5,
            cluster_min_pts: 2,
            coverage_threshold: None,
        }
    }
}

impl EvmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tail_size == 0 {
            return Err(Error::config("tail_size must be at least 1"));
        }
        if !(self.margin_scale > 0.0 && self.margin_scale <= 1.0) {
            return Err(Error::config("margin_scale must lie in (0, 1]"));
        }
        if !(self.cluster_eps > 0.0) || self.cluster_min_pts == 0 {
            return Err(Error::config("cluster_eps must be positive and cluster_min_pts >= 1"));
        }
        if let Some(t) = self.coverage_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::config("coverage_threshold must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremeVector {
    pub anchor: Vec<f64>,
    pub params: WeibullParams,
    /// Index of the anchor sample in the training view.
    pub source: usize,
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassModel {
    pub class: ViewLabel,
    pub vectors: Vec<ExtremeVector>,
}

impl ClassModel {
    pub fn confidence(&self, query: &[f64]) -> f64 {
        self.vectors
            .iter()
            .map(|v| v.params.inclusion(euclidean(&v.anchor, query)))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvmModel {
    pub kind: StrategyKind,
    pub known_classes: Vec<String>,
    pub dim: usize,
    /// One entry per positive class of the view, known classes first.
    pub classes: Vec<ClassModel>,
    /// Tail size actually used (clamped to the smallest rest pool).
    pub effective_tail: usize,
}

pub fn fit_evm(view: &StrategyView, cfg: &EvmConfig) -> Result<EvmModel> {
    cfg.validate()?;
    if view.is_empty() {
        return Err(Error::Empty("training view"));
    }
    let n_classes = view.n_positive();
    let rests: Vec<Vec<usize>> = (0..n_classes).map(|c| view.rest(c)).collect();
    for (c, rest) in rests.iter().enumerate() {
        if rest.is_empty() {
            return Err(Error::invalid(format!(
                "class {} has an empty rest pool",
                view.positive_classes[c]
            )));
        }
    }
    let min_rest = rests.iter().map(Vec::len).min().unwrap_or(0);
    if cfg.tail_size > min_rest {
        log::warn!(
            "tail size {} exceeds the smallest rest pool ({min_rest}); clamping per class",
            cfg.tail_size
        );
    }

    let classes = (0..n_classes)
        .into_par_iter()
        .map(|c| fit_class(view, c, &rests[c], cfg))
        .collect::<Result<Vec<_>>>()?;

    Ok(EvmModel {
        kind: view.kind,
        known_classes: view.known_classes.clone(),
        dim: view.dim(),
        classes,
        effective_tail: cfg.tail_size.min(min_rest),
    })
}

fn fit_class(view: &StrategyView, class: usize, rest: &[usize], cfg: &EvmConfig) -> Result<ClassModel> {
    let tail = cfg.tail_size.min(rest.len());
    let members = view.members(class);
    let mut vectors = Vec::with_capacity(members.len());
    let mut dists = Vec::with_capacity(rest.len());
    for &i in &members {
        let x = &view.samples[i].features;
        dists.clear();
        dists.extend(rest.iter().map(|&j| euclidean(x, &view.samples[j].features)));
        dists.select_nth_unstable_by(tail - 1, f64::total_cmp);
        let mut values: Vec<f64> = dists[..tail].iter().map(|d| d * cfg.margin_scale).collect();
        values.sort_by(f64::total_cmp);
        let fit = fit_tail(&values)?;
        vectors.push(ExtremeVector {
            anchor: x.clone(),
            params: fit.params,
            source: i,
            fallback: fit.fallback,
        });
    }
    if let Some(threshold) = cfg.coverage_threshold {
        vectors = reduce_by_coverage(vectors, threshold);
    }
    Ok(ClassModel {
        class: view.positive_classes[class].clone(),
        vectors,
    })
}

/// Greedy set cover: anchor `a` covers point `p` when `Ψ_a(p) >= threshold`.
/// Picks the anchor covering most uncovered points (lowest index on ties)
/// until everything is covered.
fn reduce_by_coverage(vectors: Vec<ExtremeVector>, threshold: f64) -> Vec<ExtremeVector> {
    let n = vectors.len();
    let covers: Vec<Vec<usize>> = vectors
        .iter()
        .map(|a| {
            (0..n)
                .filter(|&p| a.params.inclusion(euclidean(&a.anchor, &vectors[p].anchor)) >= threshold)
                .collect()
        })
        .collect();
    let mut covered = vec![false; n];
    let mut chosen = Vec::new();
    while covered.iter().any(|c| !c) {
        let (best, gain) = covers
            .iter()
            .enumerate()
            .map(|(a, cv)| (a, cv.iter().filter(|&&p| !covered[p]).count()))
            .fold((0, 0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if gain == 0 {
            break;
        }
        for &p in &covers[best] {
            covered[p] = true;
        }
        chosen.push(best);
    }
    chosen.sort_unstable();
    let mut keep = vec![false; n];
    for c in chosen {
        keep[c] = true;
    }
    vectors
        .into_iter()
        .zip(keep)
        .filter_map(|(v, k)| k.then_some(v))
        .collect()
}

impl EvmModel {
    /// Confidence per positive class (known classes, then pseudo classes).
    pub fn class_confidences(&self, query: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, query.len())?;
        Ok(self.classes.iter().map(|c| c.confidence(query)).collect())
    }

    pub fn n_anchors(&self) -> usize {
        self.classes.iter().map(|c| c.vectors.len()).sum()
    }
}

impl OpenSetModel for EvmModel {
    fn family(&self) -> &'static str {
        "evm"
    }

    fn known_classes(&self) -> &[String] {
        &self.known_classes
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, query: &[f64]) -> Result<Prediction> {
        let mut conf = self.class_confidences(query)?;
        let n_known = self.known_classes.len();
        let unknown = conf[n_known..].iter().copied().fold(0.0, f64::max);
        conf.truncate(n_known);
        Ok(Prediction::from_channels(conf, unknown))
    }
}

/// Cluster-based reduction: every class is clustered with DBSCAN and each
/// cluster replaced by its centroid; noise points stay as they are.
///
/// Under SPL and MPL all pseudo-labeled samples are clustered together, and
/// for MPL every surviving point becomes its own pseudo class again. Under
/// KvR the negative pool is left untouched.
pub fn cevm_reduce(view: &StrategyView, cfg: &EvmConfig) -> Result<StrategyView> {
    cfg.validate()?;
    let n_known = view.n_known();
    let mut samples: Vec<ViewSample> = Vec::new();

    let mut groups: Vec<Vec<usize>> = (0..n_known).map(|c| view.members(c)).collect();
    let pseudo: Vec<usize> = (0..view.len())
        .filter(|&i| matches!(view.target(i), Some(c) if c >= n_known))
        .collect();
    let has_pseudo = !pseudo.is_empty();
    if has_pseudo {
        groups.push(pseudo);
    }

    let mut n_pseudo = 0usize;
    for (g, members) in groups.iter().enumerate() {
        let points: Vec<Vec<f64>> = members.iter().map(|&i| view.samples[i].features.clone()).collect();
        let reduced = reduce_group(&points, cfg)?;
        let is_pseudo_group = has_pseudo && g == groups.len() - 1;
        for features in reduced {
            let label = if !is_pseudo_group {
                ViewLabel::Known(view.known_classes[g].clone())
            } else if view.kind == StrategyKind::Mpl {
                n_pseudo += 1;
                ViewLabel::Pseudo(n_pseudo - 1)
            } else {
                n_pseudo = 1;
                ViewLabel::Pseudo(0)
            };
            samples.push(ViewSample { features, label });
        }
    }
    for &i in &view.negative_pool {
        samples.push(view.samples[i].clone());
    }
    StrategyView::from_parts(
        view.kind,
        view.requested,
        view.degraded,
        samples,
        view.known_classes.clone(),
        n_pseudo,
    )
}

/// Points of one group after reduction, ordered by first appearance.
fn reduce_group(points: &[Vec<f64>], cfg: &EvmConfig) -> Result<Vec<Vec<f64>>> {
    let labels = dbscan(points, cfg.cluster_eps, cfg.cluster_min_pts)?;
    let n_clusters = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let dim = points.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dim]; n_clusters];
    let mut counts = vec![0usize; n_clusters];
    for (p, l) in points.iter().zip(&labels) {
        if let Some(c) = l {
            counts[*c] += 1;
            for (s, v) in sums[*c].iter_mut().zip(p) {
                *s += v;
            }
        }
    }
    let mut emitted = vec![false; n_clusters];
    let mut out = Vec::new();
    for (p, l) in points.iter().zip(&labels) {
        match l {
            None => out.push(p.clone()),
            Some(c) if !emitted[*c] => {
                emitted[*c] = true;
                out.push(sums[*c].iter().map(|s| s / counts[*c] as f64).collect());
            }
            Some(_) => {}
        }
    }
    Ok(out)
}

/// One cell of a 2D confidence raster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterCell {
    pub x: f64,
    pub y: f64,
    /// Known class id, or `u` for the unknown channel.
    pub class: String,
    pub confidence: f64,
}

/// Scores a `resolution × resolution` grid over the rectangle and emits one
/// cell per grid point and channel.
pub fn boundary_raster(
    model: &dyn OpenSetModel,
    x_range: (f64, f64),
    y_range: (f64, f64),
    resolution: usize,
) -> Result<Vec<RasterCell>> {
    if model.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            actual: model.dim(),
        });
    }
    if resolution < 2 {
        return Err(Error::invalid("raster resolution must be at least 2"));
    }
    let step = |(lo, hi): (f64, f64), i: usize| lo + (hi - lo) * i as f64 / (resolution - 1) as f64;
    let mut cells = Vec::new();
    for iy in 0..resolution {
        for ix in 0..resolution {
            let (x, y) = (step(x_range, ix), step(y_range, iy));
            let p = model.predict(&[x, y])?;
            for (c, conf) in model.known_classes().iter().zip(&p.known) {
                cells.push(RasterCell {
                    x,
                    y,
                    class: c.clone(),
                    confidence: *conf,
                });
            }
            cells.push(RasterCell {
                x,
                y,
                class: crate::data::UNKNOWN_TOKEN.to_string(),
                confidence: p.unknown,
            });
        }
    }
    Ok(cells)
}

pub fn write_raster_csv<W: std::io::Write>(mut out: W, cells: &[RasterCell]) -> Result<()> {
    writeln!(out, "x,y,class,confidence")?;
    for c in cells {
        writeln!(out, "{},{},{},{}", c.x, c.y, c.class, c.confidence)?;
    }
    Ok(())
}
