use std::collections::BTreeSet;

use proptest::prelude::*;

use boltwave::experiments::{
    make_split, results_csv, run_experiment, sweep_denoise_levels, sweep_prior_levels, Split, SplitMode, SplitSpec,
};
use boltwave::ingest::{campaign_specs, generate_synthetic, SyntheticSpec};
use boltwave::pipeline::{FeatureRecord, PipelineConfig};
use boltwave::trainer::TrainConfig;

const K: usize = 7;
const CAMPAIGNS: [&str; 3] = ["A", "B", "C"];
const SENSORS: [&str; 2] = ["mu80", "r15"];

fn record(class: usize, campaign: &str, sensor: &str, i: usize) -> FeatureRecord {
    FeatureRecord {
        class,
        campaign: campaign.into(),
        sensor: sensor.into(),
        cycle_index: i,
        features: vec![class as f64, i as f64],
    }
}

/// `counts[c][s][k]` items of class k+1 for campaign c and sensor s.
fn items_strategy() -> impl Strategy<Value = Vec<FeatureRecord>> {
    prop::collection::vec(3usize..12, CAMPAIGNS.len() * SENSORS.len() * K).prop_map(|counts| {
        let mut out = Vec::new();
        let mut it = counts.into_iter();
        for c in CAMPAIGNS {
            for s in SENSORS {
                for k in 1..=K {
                    for i in 0..it.next().unwrap() {
                        out.push(record(k, c, s, i));
                    }
                }
            }
        }
        out
    })
}

fn all_indices(split: &Split) -> Vec<usize> {
    let mut v: Vec<usize> = split.train.iter().chain(&split.val).chain(&split.test).cloned().collect();
    v.sort_unstable();
    v
}

fn spec(mode: SplitMode, prior: usize, sensors: &[&str], seed: u64) -> SplitSpec {
    SplitSpec {
        mode,
        test_campaign: Some("B".into()),
        prior_levels: prior,
        sensors: sensors.iter().map(|s| s.to_string()).collect(),
        seed,
        k: K,
        ..SplitSpec::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn splits_are_disjoint_and_cover_the_pool(
        items in items_strategy(),
        mode in prop::sample::select(vec![SplitMode::Noshm, SplitMode::Loco, SplitMode::GradualPrior]),
        prior in 0usize..K,
        fuse in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let sensors: &[&str] = if fuse { &[] } else { &["r15"] };
        let sp = spec(mode, prior, sensors, seed);
        let split = make_split(&items, &sp).unwrap();
        let idx = all_indices(&split);
        let unique: BTreeSet<usize> = idx.iter().cloned().collect();
        prop_assert_eq!(unique.len(), idx.len());
        let pool: Vec<usize> = (0..items.len())
            .filter(|&i| fuse || items[i].sensor == "r15")
            .filter(|&i| mode != SplitMode::Noshm || items[i].campaign == "B")
            .collect();
        prop_assert_eq!(idx, pool);
        prop_assert_eq!(&split, &make_split(&items, &sp).unwrap());

        let test_classes: BTreeSet<usize> = split.test.iter().map(|&i| items[i].class).collect();
        match mode {
            SplitMode::Noshm => {
                let n = split.train.len() + split.val.len() + split.test.len();
                prop_assert_eq!(split.train.len(), (0.8 * n as f64).round() as usize);
                prop_assert_eq!(split.val.len(), (0.1 * n as f64).round() as usize);
            }
            SplitMode::Loco => {
                prop_assert!(split.test.iter().all(|&i| items[i].campaign == "B"));
                prop_assert!(split.train.iter().chain(&split.val).all(|&i| items[i].campaign != "B"));
            }
            SplitMode::GradualPrior => {
                prop_assert_eq!(test_classes, ((prior + 1)..=K).collect::<BTreeSet<_>>());
                for &i in split.train.iter().chain(&split.val) {
                    prop_assert!(items[i].campaign != "B" || items[i].class <= prior);
                }
            }
        }
    }

    #[test]
    fn sensor_fusion_is_the_union_of_single_sensor_pools(items in items_strategy(), seed in any::<u64>()) {
        let fused = make_split(&items, &spec(SplitMode::Loco, 0, &[], seed)).unwrap();
        let mut union: Vec<usize> = SENSORS
            .iter()
            .flat_map(|s| all_indices(&make_split(&items, &spec(SplitMode::Loco, 0, &[s], seed)).unwrap()))
            .collect();
        union.sort_unstable();
        prop_assert_eq!(all_indices(&fused), union);
        let named = make_split(&items, &spec(SplitMode::Loco, 0, &SENSORS, seed)).unwrap();
        prop_assert_eq!(named, fused);
    }
}

#[test]
fn prior_of_six_leaves_only_the_top_class() {
    let items: Vec<FeatureRecord> = CAMPAIGNS
        .iter()
        .flat_map(|c| (1..=K).flat_map(move |k| (0..10).map(move |i| record(k, c, "mu80", i))))
        .collect();
    let split = make_split(&items, &spec(SplitMode::GradualPrior, 6, &[], 1)).unwrap();
    assert_eq!(split.test.len(), 10);
    assert!(split.test.iter().all(|&i| items[i].class == 7 && items[i].campaign == "B"));
    assert!(make_split(&items, &spec(SplitMode::GradualPrior, 7, &[], 1)).is_err());
}

fn synthetic_items() -> Vec<FeatureRecord> {
    let base = SyntheticSpec {
        seconds_per_level: 0.1,
        ..SyntheticSpec::default()
    };
    let mut items = Vec::new();
    for spec in campaign_specs(&base, &CAMPAIGNS, &[-0.05, 0.0, 0.05]).unwrap() {
        let (vib, ae) = generate_synthetic(&spec).unwrap();
        items.extend(boltwave::pipeline::stream_features(&ae, &vib, &PipelineConfig::default()).unwrap());
    }
    items
}

fn quick_cfg() -> TrainConfig {
    TrainConfig {
        k: K,
        epochs: 2,
        ..TrainConfig::default()
    }
}

#[test]
fn repeats_are_reproducible_and_summarised() {
    let items = synthetic_items();
    let sp = spec(SplitMode::Loco, 0, &[], 0);
    let (results, summary) = run_experiment(&items, &sp, &quick_cfg(), 5, 10, "loco").unwrap();
    assert_eq!(results.len(), 5);
    for (r, res) in results.iter().enumerate() {
        assert_eq!(res.repeat, r);
        assert_eq!(res.seed, 10 + r as u64);
        assert_eq!(res.n_test, items.iter().filter(|i| i.campaign == "B").count());
    }
    assert_eq!(summary.repeats, 5);
    let mean_acc = results.iter().map(|r| r.metrics.acc).sum::<f64>() / 5.0;
    assert!((summary.mean.acc - mean_acc).abs() < 1e-12);

    let (again, summary2) = run_experiment(&items, &sp, &quick_cfg(), 5, 10, "loco").unwrap();
    assert_eq!(summary, summary2);
    for (a, b) in results.iter().zip(&again) {
        assert_eq!(a.confusion, b.confusion);
        assert_eq!(a.fingerprint, b.fingerprint);
    }

    let csv = results_csv(&[(results, summary)]);
    assert_eq!(csv.lines().count(), 1 + 5 + 1);
    assert!(csv.lines().last().unwrap().starts_with("loco,summary"));
}

#[test]
fn denoise_sweep_covers_every_level() {
    let base = SyntheticSpec {
        seconds_per_level: 0.1,
        ..SyntheticSpec::default()
    };
    let streams: Vec<_> = campaign_specs(&base, &["A", "B"], &[0.0, 0.02])
        .unwrap()
        .iter()
        .map(|s| generate_synthetic(s).unwrap())
        .collect();
    let levels: Vec<usize> = (0..=9).collect();
    let sp = spec(SplitMode::Loco, 0, &[], 0);
    let cfg = TrainConfig {
        epochs: 1,
        ..quick_cfg()
    };
    let groups = sweep_denoise_levels(&streams, &levels, &PipelineConfig::default(), &sp, &cfg, 1, 3).unwrap();
    assert_eq!(groups.len(), 10);
    for (level, (results, summary)) in levels.iter().zip(&groups) {
        assert_eq!(summary.key, format!("level={level}"));
        assert_eq!(results.len(), 1);
        assert!(summary.mean.acc_pm1 >= summary.mean.acc);
    }
}

#[test]
fn prior_sweep_shrinks_the_test_set() {
    let items = synthetic_items();
    let sp = spec(SplitMode::GradualPrior, 0, &[], 0);
    let priors = [0, 2, 4, 6];
    let groups = sweep_prior_levels(&items, &priors, &sp, &quick_cfg(), 1, 0).unwrap();
    let sizes: Vec<usize> = groups.iter().map(|(r, _)| r[0].n_test).collect();
    assert!(sizes.windows(2).all(|w| w[0] > w[1]), "{sizes:?}");
    for (p, (_, s)) in priors.iter().zip(&groups) {
        assert_eq!(s.key, format!("prior={p}"));
    }
}
