//! Behaviour of the fitted models on the seeded toy set.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use openset::data::{synth_toy, Category, OpenSetDataset, Sample, ToySpec};
use openset::evm::{cevm_reduce, fit_evm, EvmConfig};
use openset::linear::{fit_linear, TrainConfig};
use openset::mixup::{centroid_stats, generate_mixups, MixupConfig};
use openset::model::OpenSetModel;
use openset::strategy::{apply_strategy, StrategyKind, ViewLabel};

fn toy() -> OpenSetDataset {
    synth_toy(&ToySpec::default(), 2024).unwrap()
}

#[test]
fn evm_kvr_lowers_inclusion_at_kuc_locations() {
    let ds = toy();
    let cfg = EvmConfig::default();
    let base = fit_evm(&apply_strategy(&ds.train, StrategyKind::Baseline).unwrap(), &cfg).unwrap();
    let kvr = fit_evm(&apply_strategy(&ds.train, StrategyKind::Kvr).unwrap(), &cfg).unwrap();

    let kuc: Vec<&[f64]> = ds
        .test
        .iter()
        .filter(|t| t.category == Category::KnownUnknown)
        .map(|t| t.features.as_slice())
        .chain(
            ds.train
                .iter()
                .filter(|s| s.label.is_unknown())
                .map(|s| s.features.as_slice()),
        )
        .collect();
    let (mut sum_base, mut sum_kvr, mut covered) = (0.0, 0.0, 0);
    for x in &kuc {
        let b = base.predict(x).unwrap().max_known();
        let k = kvr.predict(x).unwrap().max_known();
        sum_base += b;
        sum_kvr += k;
        // wherever the baseline boundary reaches into the ring, KvR pulls it back
        if b >= 0.01 {
            covered += 1;
            assert!(k < b, "at {x:?}: kvr {k} >= baseline {b}");
        }
    }
    assert!(covered > 50, "baseline covers only {covered} ring points");
    assert!(sum_kvr < 0.1 * sum_base, "mean inclusion {sum_kvr} vs {sum_base}");
}

#[test]
fn evm_confidence_falls_off_along_rays() {
    let ds = toy();
    let model = fit_evm(
        &apply_strategy(&ds.train, StrategyKind::Baseline).unwrap(),
        &EvmConfig::default(),
    )
    .unwrap();
    for (c, name) in ds.known_classes.iter().enumerate() {
        let pts: Vec<&Sample> = ds.train.iter().filter(|s| s.label.known() == Some(name)).collect();
        let n = pts.len() as f64;
        let center = [
            pts.iter().map(|s| s.features[0]).sum::<f64>() / n,
            pts.iter().map(|s| s.features[1]).sum::<f64>() / n,
        ];
        let outward = center[1].atan2(center[0]);
        for off in [-60.0f64, -30.0, 0.0, 30.0, 60.0] {
            let a = outward + off.to_radians();
            let mut prev = f64::INFINITY;
            for k in 0..=80 {
                let r = 0.1 * k as f64;
                let q = [center[0] + r * a.cos(), center[1] + r * a.sin()];
                let v = model.class_confidences(&q).unwrap()[c];
                // on the saturated plateau (confidence 1 - 1e-14) another anchor
                // can take over the max with a rise of order 1e-13
                assert!(
                    v <= prev + 1e-9,
                    "class {c}, ray {off}°: rises by {:e} to {v} at r = {r}",
                    v - prev
                );
                prev = v;
            }
            assert!(prev < 1e-6, "class {c}, ray {off}°: still {prev} at distance 8");
        }
    }
}

#[test]
fn cevm_mixup_reduction_is_not_monotone() {
    // dense mixups merge into fewer clusters: more mixups lead to fewer reduced mixups
    let ds = toy();
    let known: Vec<Sample> = ds.known_train().cloned().collect();
    let stats = centroid_stats(&known).unwrap();
    let cfg = EvmConfig {
        cluster_eps: 0.3,
        cluster_min_pts: 3,
        ..EvmConfig::default()
    };
    let mut counts = Vec::new();
    for ratio in [0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0] {
        let batch = generate_mixups(
            &known,
            &stats,
            &MixupConfig {
                ratio,
                seed: 77,
                ..MixupConfig::default()
            },
        )
        .unwrap();
        let mut train = known.clone();
        train.extend(batch.to_samples());
        let reduced = cevm_reduce(&apply_strategy(&train, StrategyKind::Spl).unwrap(), &cfg).unwrap();
        counts.push(
            reduced
                .samples
                .iter()
                .filter(|s| matches!(s.label, ViewLabel::Pseudo(_)))
                .count(),
        );
    }
    let peak = counts.iter().enumerate().max_by_key(|(_, c)| **c).unwrap().0;
    assert!(peak > 0 && peak < counts.len() - 1, "no interior ceiling in {counts:?}");
    assert!(counts.last().unwrap() < &counts[peak], "{counts:?}");
}

#[test]
fn linear_spl_unknown_channel_wins_inside_kuc_cluster() {
    // a linear head needs a compact KUC cluster; the toy ring encloses the knowns
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut train = Vec::new();
    for (center, label) in [
        ([0.0, 0.0], Some("a")),
        ([4.0, 0.0], Some("b")),
        ([0.0, 4.0], Some("c")),
        ([5.0, 5.0], None),
    ] {
        for _ in 0..60 {
            let x = vec![center[0] + noise.sample(&mut rng), center[1] + noise.sample(&mut rng)];
            train.push(match label {
                Some(l) => Sample::known(x, l),
                None => Sample::unknown(x),
            });
        }
    }
    let view = apply_strategy(&train, StrategyKind::Spl).unwrap();
    let model = fit_linear(&view, &TrainConfig::default()).unwrap();
    for q in [[5.0, 5.0], [5.5, 5.5], [6.0, 5.0]] {
        let p = model.predict(&q).unwrap();
        assert_eq!(p.label, None, "{q:?}: {p:?}");
        assert!(p.unknown > p.max_known());
    }
    for (q, c) in [([0.0, 0.0], 0), ([4.0, 0.0], 1), ([0.0, 4.0], 2)] {
        assert_eq!(model.predict(&q).unwrap().label, Some(c));
    }
}
