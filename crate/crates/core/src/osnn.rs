//! Open-set nearest neighbor: confidence from the ratio of the distances to
//! the two nearest training samples of distinct classes.

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};
use crate::model::{OpenSetModel, Prediction};
use crate::strategy::{StrategyKind, StrategyView};
use crate::util::{check_dim, sq_dist};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OsnnModel {
    pub kind: StrategyKind,
    pub known_classes: Vec<String>,
    points: Vec<Vec<f64>>,
    /// Positive-class index per stored point; KvR negatives share the id
    /// `n_positive` and count as one extra class.
    classes: Vec<usize>,
    n_positive: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OsnnScore {
    pub predicted: Label,
    pub ratio: f64,
    pub confidence: f64,
}

pub fn fit_osnn(view: &StrategyView) -> Result<OsnnModel> {
    let n_positive = view.n_positive();
    let classes: Vec<usize> = view.targets().iter().map(|t| t.unwrap_or(n_positive)).collect();
    let mut distinct = classes.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::invalid("OSNN needs samples of at least two distinct classes"));
    }
    Ok(OsnnModel {
        kind: view.kind,
        known_classes: view.known_classes.clone(),
        points: view.samples.iter().map(|s| s.features.clone()).collect(),
        classes,
        n_positive,
    })
}

impl OsnnModel {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest stored point overall, then the nearest one from a different
    /// class. Equal distances keep the lower stored index.
    fn two_nearest(&self, query: &[f64]) -> (usize, f64, f64) {
        let mut first = (0usize, f64::INFINITY);
        for (i, p) in self.points.iter().enumerate() {
            let d = sq_dist(p, query);
            if d < first.1 {
                first = (i, d);
            }
        }
        let class = self.classes[first.0];
        let mut second = f64::INFINITY;
        for (p, &c) in self.points.iter().zip(&self.classes) {
            if c != class {
                let d = sq_dist(p, query);
                if d < second {
                    second = d;
                }
            }
        }
        (first.0, first.1.sqrt(), second.sqrt())
    }

    pub fn score(&self, query: &[f64]) -> Result<OsnnScore> {
        check_dim(self.dim(), query.len())?;
        let (nearest, d_i, d_j) = self.two_nearest(query);
        let class = self.classes[nearest];
        let n_known = self.known_classes.len();
        let negative = class == self.n_positive;
        // duplicate points across classes give d_j = 0: maximal ambiguity
        let mut ratio = if d_j > 0.0 { (d_i / d_j).min(1.0) } else { 1.0 };
        let predicted = if negative {
            ratio = 1.0;
            Label::Unknown
        } else if class >= n_known {
            Label::Unknown
        } else {
            Label::Known(self.known_classes[class].clone())
        };
        Ok(OsnnScore {
            predicted,
            ratio,
            confidence: 1.0 - ratio,
        })
    }
}

impl OpenSetModel for OsnnModel {
    fn family(&self) -> &'static str {
        "osnn"
    }

    fn known_classes(&self) -> &[String] {
        &self.known_classes
    }

    fn dim(&self) -> usize {
        self.points.first().map(Vec::len).unwrap_or(0)
    }

    fn predict(&self, query: &[f64]) -> Result<Prediction> {
        let s = self.score(query)?;
        let mut known = vec![0.0; self.known_classes.len()];
        Ok(match s.predicted {
            Label::Known(c) => {
                let k = self
                    .known_classes
                    .iter()
                    .position(|n| *n == c)
                    .expect("predicted class is known");
                known[k] = s.confidence;
                Prediction {
                    known,
                    unknown: 0.0,
                    label: Some(k),
                }
            }
            Label::Unknown => Prediction {
                known,
                unknown: s.confidence,
                label: None,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use crate::strategy::apply_strategy;
    use proptest::prelude::*;

    fn two_points() -> Vec<Sample> {
        vec![Sample::known(vec![0.0, 0.0], "A"), Sample::known(vec![1.0, 0.0], "B")]
    }

    #[test]
    fn ratio_of_two_nearest() {
        let m = fit_osnn(&apply_strategy(&two_points(), StrategyKind::Baseline).unwrap()).unwrap();
        assert_eq!(m.len(), 2);
        let s = m.score(&[0.25, 0.0]).unwrap();
        assert!((s.ratio - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.predicted, Label::Known("A".into()));
        let s = m.score(&[0.0, 0.0]).unwrap();
        assert_eq!(s.ratio, 0.0);
        assert_eq!(s.confidence, 1.0);
        assert!(m.score(&[0.0]).is_err());
    }

    #[test]
    fn single_class_baseline_rejected() {
        let train = vec![Sample::known(vec![0.0], "A"), Sample::known(vec![1.0], "A")];
        assert!(fit_osnn(&apply_strategy(&train, StrategyKind::Baseline).unwrap()).is_err());
        let mut with_kuc = train.clone();
        with_kuc.extend((0..3).map(|i| Sample::unknown(vec![5.0 + i as f64])));
        assert!(fit_osnn(&apply_strategy(&with_kuc, StrategyKind::Kvr).unwrap()).is_ok());
    }

    #[test]
    fn kvr_nearest_unknown_sets_max_ratio() {
        let mut train = two_points();
        train.push(Sample::unknown(vec![5.0, 0.0]));
        let m = fit_osnn(&apply_strategy(&train, StrategyKind::Kvr).unwrap()).unwrap();
        let s = m.score(&[4.9, 0.0]).unwrap();
        assert_eq!(s.ratio, 1.0);
        assert_eq!(s.predicted, Label::Unknown);
        let p = m.predict(&[4.9, 0.0]).unwrap();
        assert_eq!(p.label, None);
        assert_eq!(p.max_known(), 0.0);
    }

    #[test]
    fn spl_pseudo_prediction_maps_to_unknown() {
        let mut train = two_points();
        train.push(Sample::unknown(vec![5.0, 0.0]));
        let m = fit_osnn(&apply_strategy(&train, StrategyKind::Spl).unwrap()).unwrap();
        let s = m.score(&[5.0, 0.5]).unwrap();
        assert_eq!(s.predicted, Label::Unknown);
        assert!(s.ratio < 1.0);
        let p = m.predict(&[5.0, 0.5]).unwrap();
        assert_eq!(p.unknown, s.confidence);
    }

    #[test]
    fn duplicate_points_across_classes() {
        let train = vec![Sample::known(vec![1.0], "A"), Sample::known(vec![1.0], "B")];
        let m = fit_osnn(&apply_strategy(&train, StrategyKind::Baseline).unwrap()).unwrap();
        let s = m.score(&[1.0]).unwrap();
        assert_eq!(s.ratio, 1.0);
        // tie resolves to the lowest stored index
        assert_eq!(s.predicted, Label::Known("A".into()));
    }

    #[test]
    fn baseline_matches_spl_without_unknowns() {
        let train = two_points();
        let a = fit_osnn(&apply_strategy(&train, StrategyKind::Baseline).unwrap()).unwrap();
        let b = fit_osnn(&apply_strategy(&train, StrategyKind::Spl).unwrap()).unwrap();
        for q in [[0.3, 0.2], [2.0, -1.0], [0.5, 0.0]] {
            assert_eq!(a.score(&q).unwrap(), b.score(&q).unwrap());
        }
    }

    proptest! {
        #[test]
        fn scale_invariant(
            pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, 0u8..3), 3..30),
            q in (-10.0f64..10.0, -10.0f64..10.0),
            c in 0.01f64..100.0,
        ) {
            let mut train: Vec<Sample> = pts.iter()
                .map(|&(x, y, k)| Sample::known(vec![x, y], &format!("k{k}")))
                .collect();
            train.push(Sample::known(vec![0.0, 0.0], "k0"));
            train.push(Sample::known(vec![1.0, 1.0], "k1"));
            let scaled: Vec<Sample> = train.iter()
                .map(|s| Sample::new(s.features.iter().map(|v| v * c).collect(), s.label.clone()))
                .collect();
            let a = fit_osnn(&apply_strategy(&train, StrategyKind::Baseline).unwrap()).unwrap();
            let b = fit_osnn(&apply_strategy(&scaled, StrategyKind::Baseline).unwrap()).unwrap();
            let sa = a.score(&[q.0, q.1]).unwrap();
            let sb = b.score(&[q.0 * c, q.1 * c]).unwrap();
            prop_assert!((sa.ratio - sb.ratio).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&sa.ratio));
            if (sa.ratio - 1.0).abs() > 1e-9 {
                prop_assert_eq!(sa.predicted, sb.predicted);
            }
        }
    }
}
