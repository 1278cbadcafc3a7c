//! Samples, datasets and split construction.
//!
//! Feature files are plain CSV: `label,f0,f1,...` with the literal token `u`
//! marking an unlabeled (known-unknown) sample. Every other token is a class
//! identifier.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{round_half_away, seeded_rng};

/// File token of the unknown marker.
pub const UNKNOWN_TOKEN: &str = "u";

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Known(String),
    Unknown,
}

impl Label {
    pub fn from_token(token: &str) -> Label {
        if token == UNKNOWN_TOKEN {
            Label::Unknown
        } else {
            Label::Known(token.to_string())
        }
    }

    pub fn known(&self) -> Option<&str> {
        match self {
            Label::Known(c) => Some(c),
            Label::Unknown => None,
        }
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self, Label::Unknown)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Known(c) => f.write_str(c),
            Label::Unknown => f.write_str(UNKNOWN_TOKEN),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: Label,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: Label) -> Self {
        Sample { features, label }
    }

    pub fn known(features: Vec<f64>, class: &str) -> Self {
        Sample::new(features, Label::Known(class.to_string()))
    }

    pub fn unknown(features: Vec<f64>) -> Self {
        Sample::new(features, Label::Unknown)
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// Ground truth of a test sample.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Category {
    Known(String),
    KnownUnknown,
    UnknownUnknown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestSample {
    pub features: Vec<f64>,
    pub category: Category,
}

/// Class-to-role assignment of a split. Persisted as the split manifest.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleAssignment {
    pub known: Vec<String>,
    pub known_unknown: Vec<String>,
    pub unknown_unknown: Vec<String>,
    pub seed: u64,
}

impl RoleAssignment {
    pub fn to_manifest(&self) -> String {
        let join = |v: &[String]| v.join(" ");
        format!(
            "# split manifest\nseed {}\nkc {}\nkuc {}\nuuc {}\n",
            self.seed,
            join(&self.known),
            join(&self.known_unknown),
            join(&self.unknown_unknown)
        )
    }

    pub fn from_manifest(text: &str) -> Result<Self> {
        let mut roles = RoleAssignment::default();
        let mut seen_seed = false;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default();
            let rest: Vec<String> = parts.map(str::to_string).collect();
            match key {
                "seed" => {
                    roles.seed = rest
                        .first()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::config(format!("manifest line {}: bad seed", n + 1)))?;
                    seen_seed = true;
                }
                "kc" => roles.known = rest,
                "kuc" => roles.known_unknown = rest,
                "uuc" => roles.unknown_unknown = rest,
                other => {
                    return Err(Error::config(format!(
                        "manifest line {}: unexpected key {other:?}",
                        n + 1
                    )))
                }
            }
        }
        if !seen_seed {
            return Err(Error::config("manifest has no seed line"));
        }
        Ok(roles)
    }
}

/// Training and test material of one open-set experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpenSetDataset {
    /// Known-class samples plus unknown-marked known-unknowns.
    pub train: Vec<Sample>,
    pub test: Vec<TestSample>,
    pub known_classes: Vec<String>,
    /// Source class of every train sample (before KUC relabeling).
    pub train_origin: Vec<String>,
    /// Source class of every test sample.
    pub test_origin: Vec<String>,
    pub roles: RoleAssignment,
}

impl OpenSetDataset {
    pub fn dim(&self) -> usize {
        self.train.first().map(Sample::dim).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        let check_dim = |f: &[f64]| -> Result<()> {
            if f.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: f.len(),
                });
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("non-finite feature value"));
            }
            Ok(())
        };
        for s in &self.train {
            check_dim(&s.features)?;
            if let Label::Known(c) = &s.label {
                if !self.known_classes.contains(c) {
                    return Err(Error::UnknownLabel(c.clone()));
                }
            }
        }
        for s in &self.test {
            check_dim(&s.features)?;
            if let Category::Known(c) = &s.category {
                if !self.known_classes.contains(c) {
                    return Err(Error::UnknownLabel(c.clone()));
                }
            }
        }
        if self.train_origin.iter().any(|o| self.roles.unknown_unknown.contains(o)) {
            return Err(Error::invalid("an unknown-unknown class leaked into train"));
        }
        Ok(())
    }

    pub fn known_train(&self) -> impl Iterator<Item = &Sample> {
        self.train.iter().filter(|s| !s.label.is_unknown())
    }
}

pub fn load_features(path: impl AsRef<Path>, header: bool) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let file = fs::File::open(path)?;
    read_features(BufReader::new(file), path, header)
}

pub fn read_features<R: BufRead>(reader: R, name: &Path, header: bool) -> Result<Vec<Sample>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: PathBuf::from(name),
        line,
        message,
    };
    let mut samples = Vec::new();
    let mut width = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if header && idx == 0 {
            continue;
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let label = cols.next().unwrap_or_default();
        if label.is_empty() {
            return Err(parse_err(lineno, "empty label".into()));
        }
        let features = cols
            .map(|tok| match tok.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(lineno, format!("bad feature value {tok:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if features.is_empty() {
            return Err(parse_err(lineno, "row has no features".into()));
        }
        match width {
            None => width = Some(features.len()),
            Some(w) if w != features.len() => {
                return Err(parse_err(
                    lineno,
                    format!("expected {w} features, found {}", features.len()),
                ))
            }
            _ => {}
        }
        samples.push(Sample::new(features, Label::from_token(label)));
    }
    if samples.is_empty() {
        return Err(Error::EmptyFile(PathBuf::from(name)));
    }
    Ok(samples)
}

/// Serializes samples in the feature-file layout. `{}` formatting of `f64`
/// round-trips exactly.
pub fn write_features<W: Write>(mut out: W, samples: &[Sample]) -> Result<()> {
    for s in samples {
        write!(out, "{}", s.label)?;
        for v in &s.features {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn save_features(path: impl AsRef<Path>, samples: &[Sample]) -> Result<()> {
    let mut buf = Vec::new();
    write_features(&mut buf, samples)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Isotropic Gaussian blobs. Class `c` is centered at `10·c` on the first
/// axis with a uniform offset in `[-5, 5]` on the remaining axes, so centers
/// are at least 10 apart. Labels are `c0`, `c1`, ...
pub fn synth_blobs(n_classes: usize, per_class: usize, dim: usize, spread: f64, seed: u64) -> Result<Vec<Sample>> {
    if n_classes == 0 || per_class == 0 || dim == 0 {
        return Err(Error::invalid("synth_blobs counts must be at least 1"));
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(Error::invalid("synth_blobs spread must be positive"));
    }
    let mut rng = seeded_rng(seed);
    let noise = Normal::new(0.0, spread).expect("spread validated");
    let mut out = Vec::with_capacity(n_classes * per_class);
    for c in 0..n_classes {
        let center: Vec<f64> = (0..dim)
            .map(|d| {
                if d == 0 {
                    10.0 * c as f64
                } else {
                    rng.random_range(-5.0..5.0)
                }
            })
            .collect();
        let name = format!("c{c}");
        for _ in 0..per_class {
            let x = center.iter().map(|m| m + noise.sample(&mut rng)).collect();
            out.push(Sample::known(x, &name));
        }
    }
    Ok(out)
}

/// The 2D benchmark toy: Gaussian known classes on a circle, a ring of
/// known-unknowns around them and a separate cluster of unknown-unknowns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToySpec {
    pub known_classes: usize,
    pub per_class: usize,
    /// Radius of the circle carrying the known-class centers.
    pub center_radius: f64,
    pub class_std: f64,
    pub ring_radius: f64,
    pub ring_width: f64,
    pub uuc_center: [f64; 2],
    pub uuc_std: f64,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            known_classes: 3,
            per_class: 200,
            center_radius: 3.0,
            class_std: 0.8,
            ring_radius: 7.0,
            ring_width: 0.5,
            uuc_center: [9.0, 9.0],
            uuc_std: 0.8,
        }
    }
}

pub fn synth_toy(spec: &ToySpec, seed: u64) -> Result<OpenSetDataset> {
    if spec.known_classes == 0 || spec.per_class == 0 {
        return Err(Error::invalid("toy needs at least one class and sample"));
    }
    if !(spec.class_std > 0.0 && spec.uuc_std > 0.0 && spec.ring_width >= 0.0) {
        return Err(Error::invalid("toy spreads must be positive"));
    }
    let mut rng = seeded_rng(seed);
    let class_noise = Normal::new(0.0, spec.class_std).expect("validated");
    let uuc_noise = Normal::new(0.0, spec.uuc_std).expect("validated");
    let names: Vec<String> = (0..spec.known_classes).map(|c| format!("k{c}")).collect();
    let centers: Vec<[f64; 2]> = (0..spec.known_classes)
        .map(|c| {
            let angle = std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::PI * c as f64 / spec.known_classes as f64;
            [spec.center_radius * angle.cos(), spec.center_radius * angle.sin()]
        })
        .collect();

    let gaussian = |center: [f64; 2], noise: &Normal<f64>, rng: &mut rand_chacha::ChaCha8Rng| {
        vec![center[0] + noise.sample(rng), center[1] + noise.sample(rng)]
    };
    let ring = |rng: &mut rand_chacha::ChaCha8Rng| {
        let angle = rng.random_range(0.0..2.0 * std::f64::consts::PI);
        let radius = spec.ring_radius + rng.random_range(-spec.ring_width..=spec.ring_width);
        vec![radius * angle.cos(), radius * angle.sin()]
    };

    let mut ds = OpenSetDataset {
        train: Vec::new(),
        test: Vec::new(),
        known_classes: names.clone(),
        train_origin: Vec::new(),
        test_origin: Vec::new(),
        roles: RoleAssignment {
            known: names.clone(),
            known_unknown: vec!["ring".into()],
            unknown_unknown: vec!["cluster".into()],
            seed,
        },
    };
    // train then test, each class in order, so the stream is fixed per seed
    for (name, &center) in names.iter().zip(&centers) {
        for _ in 0..spec.per_class {
            ds.train
                .push(Sample::known(gaussian(center, &class_noise, &mut rng), name));
            ds.train_origin.push(name.clone());
        }
    }
    for _ in 0..spec.per_class {
        ds.train.push(Sample::unknown(ring(&mut rng)));
        ds.train_origin.push("ring".into());
    }
    for (name, &center) in names.iter().zip(&centers) {
        for _ in 0..spec.per_class {
            ds.test.push(TestSample {
                features: gaussian(center, &class_noise, &mut rng),
                category: Category::Known(name.clone()),
            });
            ds.test_origin.push(name.clone());
        }
    }
    for _ in 0..spec.per_class {
        ds.test.push(TestSample {
            features: ring(&mut rng),
            category: Category::KnownUnknown,
        });
        ds.test_origin.push("ring".into());
    }
    for _ in 0..spec.per_class {
        ds.test.push(TestSample {
            features: gaussian(spec.uuc_center, &uuc_noise, &mut rng),
            category: Category::UnknownUnknown,
        });
        ds.test_origin.push("cluster".into());
    }
    Ok(ds)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplesPerClass {
    /// Every non-test sample of a known class is used for training.
    All,
    Fixed(usize),
    /// Per-class count drawn uniformly from the inclusive range.
    Range(usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub n_kc: usize,
    pub n_kuc: usize,
    pub n_uuc: usize,
    #[serde(default = "default_samples_per_class")]
    pub samples_per_class: SamplesPerClass,
    pub kuc_to_kc_sample_ratio: f64,
    /// Fraction of every known and known-unknown class held out for test.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_samples_per_class() -> SamplesPerClass {
    SamplesPerClass::All
}

fn default_test_fraction() -> f64 {
    0.5
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_kc == 0 || self.n_kuc == 0 || self.n_uuc == 0 {
            return Err(Error::config("split class counts must be positive"));
        }
        if !(self.kuc_to_kc_sample_ratio > 0.0 && self.kuc_to_kc_sample_ratio.is_finite()) {
            return Err(Error::config("kuc_to_kc_sample_ratio must be positive"));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::config("test_fraction must lie in [0, 1)"));
        }
        if let SamplesPerClass::Range(lo, hi) = self.samples_per_class {
            if lo == 0 || lo > hi {
                return Err(Error::config("samples_per_class range must satisfy 1 <= lo <= hi"));
            }
        }
        if self.samples_per_class == SamplesPerClass::Fixed(0) {
            return Err(Error::config("samples_per_class must be positive"));
        }
        Ok(())
    }
}

/// Partitions the classes of a labeled pool into known, known-unknown and
/// unknown-unknown roles and builds train/test sets.
///
/// Known and known-unknown classes hold out `test_fraction` of their samples
/// for test. Unknown-unknown classes go to test entirely. The known-unknown
/// train budget is `ratio × |known train|` (rounded half away from zero) and
/// is spread evenly over the known-unknown classes.
pub fn make_split(pool: &[Sample], spec: &SplitSpec) -> Result<OpenSetDataset> {
    spec.validate()?;
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in pool.iter().enumerate() {
        let class = s
            .label
            .known()
            .ok_or_else(|| Error::config("split pool must not contain unknown-marked samples"))?;
        by_class.entry(class).or_default().push(i);
    }
    let wanted = spec.n_kc + spec.n_kuc + spec.n_uuc;
    if by_class.len() < wanted {
        return Err(Error::config(format!(
            "split needs {wanted} classes, pool has {}",
            by_class.len()
        )));
    }

    let mut rng = seeded_rng(spec.seed);
    let mut classes: Vec<&str> = by_class.keys().copied().collect();
    classes.shuffle(&mut rng);
    let kc = &classes[..spec.n_kc];
    let kuc = &classes[spec.n_kc..spec.n_kc + spec.n_kuc];
    let uuc = &classes[spec.n_kc + spec.n_kuc..wanted];

    // per-class shuffle into (test, train candidates)
    let holdout = |class: &str, rng: &mut rand_chacha::ChaCha8Rng| {
        let mut idx = by_class[class].clone();
        idx.shuffle(rng);
        let n_test = round_half_away(spec.test_fraction * idx.len() as f64);
        let train = idx.split_off(n_test);
        (idx, train)
    };

    let mut ds = OpenSetDataset {
        train: Vec::new(),
        test: Vec::new(),
        known_classes: kc.iter().map(|c| c.to_string()).collect(),
        train_origin: Vec::new(),
        test_origin: Vec::new(),
        roles: RoleAssignment {
            known: kc.iter().map(|c| c.to_string()).collect(),
            known_unknown: kuc.iter().map(|c| c.to_string()).collect(),
            unknown_unknown: uuc.iter().map(|c| c.to_string()).collect(),
            seed: spec.seed,
        },
    };

    let mut kc_train = 0usize;
    for &class in kc {
        let (test, train) = holdout(class, &mut rng);
        let take = match spec.samples_per_class {
            SamplesPerClass::All => train.len(),
            SamplesPerClass::Fixed(n) => n,
            SamplesPerClass::Range(lo, hi) => rng.random_range(lo..=hi),
        };
        if take > train.len() || take == 0 {
            return Err(Error::config(format!(
                "class {class} has {} training candidates, {take} requested",
                train.len()
            )));
        }
        for &i in &train[..take] {
            ds.train.push(pool[i].clone());
            ds.train_origin.push(class.to_string());
        }
        kc_train += take;
        for &i in &test {
            ds.test.push(TestSample {
                features: pool[i].features.clone(),
                category: Category::Known(class.to_string()),
            });
            ds.test_origin.push(class.to_string());
        }
    }

    let kuc_budget = round_half_away(spec.kuc_to_kc_sample_ratio * kc_train as f64);
    let mut kuc_parts: Vec<(&str, Vec<usize>, Vec<usize>)> = kuc
        .iter()
        .map(|&class| {
            let (test, train) = holdout(class, &mut rng);
            (class, test, train)
        })
        .collect();
    let available: usize = kuc_parts.iter().map(|p| p.2.len()).sum();
    if available < kuc_budget {
        return Err(Error::config(format!(
            "known-unknown classes offer {available} training samples, ratio requires {kuc_budget}"
        )));
    }
    let quotas = even_quotas(kuc_budget, &kuc_parts.iter().map(|p| p.2.len()).collect::<Vec<_>>());
    for ((class, test, train), quota) in kuc_parts.iter_mut().zip(quotas) {
        for &i in &train[..quota] {
            ds.train.push(Sample::unknown(pool[i].features.clone()));
            ds.train_origin.push(class.to_string());
        }
        for &i in test.iter() {
            ds.test.push(TestSample {
                features: pool[i].features.clone(),
                category: Category::KnownUnknown,
            });
            ds.test_origin.push(class.to_string());
        }
    }

    for &class in uuc {
        let mut idx = by_class[class].clone();
        idx.shuffle(&mut rng);
        for i in idx {
            ds.test.push(TestSample {
                features: pool[i].features.clone(),
                category: Category::UnknownUnknown,
            });
            ds.test_origin.push(class.to_string());
        }
    }
    ds.validate()?;
    Ok(ds)
}

/// Distributes `total` as evenly as possible over bins with the given
/// capacities; the remainder goes to the earliest bins with room.
fn even_quotas(total: usize, capacity: &[usize]) -> Vec<usize> {
    let mut quota = vec![0usize; capacity.len()];
    let mut left = total;
    while left > 0 {
        let open: Vec<usize> = (0..capacity.len()).filter(|&b| quota[b] < capacity[b]).collect();
        if open.is_empty() {
            break;
        }
        let share = (left / open.len()).max(1);
        for b in open {
            let add = share.min(capacity[b] - quota[b]).min(left);
            quota[b] += add;
            left -= add;
            if left == 0 {
                break;
            }
        }
    }
    quota
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<Sample>> {
        read_features(text.as_bytes(), Path::new("mem.csv"), false)
    }

    #[test]
    fn csv_known_and_unknown_rows() {
        let s = parse("a,1.0,2.0\nu,0.5,0.5\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].label, Label::Known("a".into()));
        assert_eq!(s[0].features, vec![1.0, 2.0]);
        assert!(s[1].label.is_unknown());
    }

    #[test]
    fn csv_column_mismatch_reports_row() {
        let err = parse("a,1,2,3\nb,1,2\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_rejects_nan_and_empty() {
        assert!(matches!(parse("a,NaN,1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("a,inf,1\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse(""), Err(Error::EmptyFile(_))));
    }

    #[test]
    fn csv_header_skipped() {
        let s = read_features("label,x,y\na,1,2\n".as_bytes(), Path::new("h"), true).unwrap();
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let samples = vec![
            Sample::known(vec![0.1 + 0.2, -1e-300, 3.0], "x"),
            Sample::unknown(vec![std::f64::consts::PI, 2.5e17, -0.0]),
        ];
        let mut buf = Vec::new();
        write_features(&mut buf, &samples).unwrap();
        let back = read_features(buf.as_slice(), Path::new("rt"), false).unwrap();
        assert_eq!(back, samples);
    }

    #[test]
    fn blobs_counts_and_determinism() {
        let a = synth_blobs(3, 10, 2, 0.5, 7).unwrap();
        assert_eq!(a.len(), 30);
        for c in 0..3 {
            let name = format!("c{c}");
            assert_eq!(a.iter().filter(|s| s.label.known() == Some(&name)).count(), 10);
        }
        let b = synth_blobs(3, 10, 2, 0.5, 7).unwrap();
        assert_eq!(a, b);
        assert!(synth_blobs(0, 1, 1, 1.0, 0).is_err());
        assert!(synth_blobs(1, 1, 1, 0.0, 0).is_err());
    }

    #[test]
    fn tight_blobs_separate_by_nearest_centroid() {
        let samples = synth_blobs(5, 20, 3, 0.01, 3).unwrap();
        let mut sums: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
        for s in &samples {
            let e = sums.entry(s.label.to_string()).or_insert_with(|| (vec![0.0; 3], 0));
            for (a, b) in e.0.iter_mut().zip(&s.features) {
                *a += b;
            }
            e.1 += 1;
        }
        let centroids: Vec<(String, Vec<f64>)> = sums
            .into_iter()
            .map(|(k, (v, n))| (k, v.into_iter().map(|x| x / n as f64).collect()))
            .collect();
        for s in &samples {
            let nearest = centroids
                .iter()
                .min_by(|a, b| {
                    crate::util::sq_dist(&a.1, &s.features).total_cmp(&crate::util::sq_dist(&b.1, &s.features))
                })
                .unwrap();
            assert_eq!(nearest.0, s.label.to_string());
        }
    }

    fn pool(classes: usize, per_class: usize) -> Vec<Sample> {
        (0..classes)
            .flat_map(|c| (0..per_class).map(move |i| Sample::known(vec![c as f64, i as f64], &format!("s{c:02}"))))
            .collect()
    }

    fn spec(n_kc: usize, n_kuc: usize, n_uuc: usize, ratio: f64) -> SplitSpec {
        SplitSpec {
            n_kc,
            n_kuc,
            n_uuc,
            samples_per_class: SamplesPerClass::All,
            kuc_to_kc_sample_ratio: ratio,
            test_fraction: 0.5,
            seed: 11,
        }
    }

    #[test]
    fn split_role_sizes_and_kuc_budget() {
        let p = pool(20, 1000);
        let ds = make_split(&p, &spec(12, 4, 4, 0.33)).unwrap();
        assert_eq!(ds.roles.known.len(), 12);
        assert_eq!(ds.roles.known_unknown.len(), 4);
        assert_eq!(ds.roles.unknown_unknown.len(), 4);
        let kc_train = ds.known_train().count();
        assert_eq!(kc_train, 6000);
        let kuc_train = ds.train.iter().filter(|s| s.label.is_unknown()).count();
        assert_eq!(kuc_train, 1980);
        // roles disjoint
        let mut all: Vec<&String> = ds
            .roles
            .known
            .iter()
            .chain(&ds.roles.known_unknown)
            .chain(&ds.roles.unknown_unknown)
            .collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 20);
    }

    #[test]
    fn split_uuc_never_in_train_and_deterministic() {
        let p = pool(9, 20);
        let s = spec(4, 2, 3, 0.5);
        let ds = make_split(&p, &s).unwrap();
        assert!(ds.train_origin.iter().all(|o| !ds.roles.unknown_unknown.contains(o)));
        let uuc_rows = ds
            .test
            .iter()
            .filter(|t| t.category == Category::UnknownUnknown)
            .count();
        assert_eq!(uuc_rows, 60);
        assert_eq!(ds, make_split(&p, &s).unwrap());
        // pool order does not matter
        let mut rev = p.clone();
        rev.reverse();
        let other = make_split(&rev, &s).unwrap();
        assert_eq!(other.roles, ds.roles);
    }

    #[test]
    fn split_errors() {
        let p = pool(5, 10);
        assert!(matches!(make_split(&p, &spec(3, 2, 1, 0.3)), Err(Error::Config(_))));
        // ratio demands more KUC samples than available
        assert!(matches!(make_split(&p, &spec(2, 1, 1, 5.0)), Err(Error::Config(_))));
    }

    #[test]
    fn manifest_round_trip() {
        let roles = RoleAssignment {
            known: vec!["a".into(), "b".into()],
            known_unknown: vec!["c".into()],
            unknown_unknown: vec!["d".into(), "e".into()],
            seed: 99,
        };
        assert_eq!(RoleAssignment::from_manifest(&roles.to_manifest()).unwrap(), roles);
        assert!(RoleAssignment::from_manifest("kc a\n").is_err());
    }

    #[test]
    fn toy_layout() {
        let ds = synth_toy(&ToySpec::default(), 5).unwrap();
        ds.validate().unwrap();
        assert_eq!(ds.train.len(), 800);
        assert_eq!(ds.test.len(), 1000);
        assert_eq!(ds.known_train().count(), 600);
        assert_eq!(ds, synth_toy(&ToySpec::default(), 5).unwrap());
    }

    #[test]
    fn quotas_spread_evenly() {
        assert_eq!(even_quotas(10, &[5, 5, 5]), vec![4, 3, 3]);
        assert_eq!(even_quotas(10, &[1, 20]), vec![1, 9]);
        assert_eq!(even_quotas(0, &[3]), vec![0]);
    }
}
