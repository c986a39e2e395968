//! Acceptance suite. One line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test -p boltwave-core --test acceptance`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use boltwave::cwt::{MorseFilterBank, MorseParams, ScaleLayout};
use boltwave::denoise::{denoise_stream, dwt, idwt, DenoiseConfig, WaveletFilterPair};
use boltwave::experiments::{run_once, SplitMode, SplitSpec};
use boltwave::ingest::{
    campaign_specs, generate_synthetic, AEStream, StreamManifest, SyntheticSpec, TorqueInterval,
    DEFAULT_CAMPAIGN_IDS, DEFAULT_CAMPAIGN_SHIFTS,
};
use boltwave::losses::{loss_from_logits, loss_grad, loss_value, softmax, LossKind, ProbVector, TargetLabel};
use boltwave::metrics::{acc, acc_pm1, prf_pm1, prf_pm1_with, ConfusionMatrix, Pm1Convention};
use boltwave::pipeline::{stream_features, FeatureRecord, PipelineConfig};
use boltwave::schedule::OneCycleConfig;
use boltwave::segmentation::segment_cycles;
use boltwave::trainer::{ScheduleKind, TrainConfig};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure((a - b).abs() <= tol, || format!("{what}: got {a}, expected {b} (tol {tol})"))
}

fn p(v: &[f64]) -> ProbVector {
    ProbVector::new(v.to_vec()).unwrap()
}

fn t(c: usize, k: usize) -> TargetLabel {
    TargetLabel::new(c, k).unwrap()
}

fn one_hot(c: usize, k: usize) -> Vec<f64> {
    (1..=k).map(|i| if i == c { 1.0 } else { 0.0 }).collect()
}

// ---------------------------------------------------------------- losses

fn losses() -> Outcome {
    let k = 7;
    let uni = vec![1.0 / 7.0; 7];
    let v = |kind, c, probs: &[f64]| loss_value(kind, &t(c, k), &p(probs)).unwrap();
    let tol = 1e-9;

    close(v(LossKind::Cre, 3, &one_hot(3, 7)), 0.0, tol, "CRE one-hot")?;
    close(v(LossKind::Cre, 3, &uni), 7f64.ln(), tol, "CRE uniform")?;

    // CDW: weights around a fixed CRE term
    let mut q = vec![0.06; 7];
    q[2] = 0.4;
    q[5] = 0.3;
    let cre = -(0.4f64).ln();
    close(v(LossKind::Cdw1, 3, &q), cre, tol, "CDW1 argmax on target")?;
    let mut far = q.clone();
    far.swap(2, 5);
    far.swap(0, 5);
    // argmax now at class 1, target at 4
    let cre_far = -far[3].ln();
    close(v(LossKind::Cdw1, 4, &far), 1.5 * cre_far, tol, "CDW1 off by 3")?;
    let mut adj = vec![0.12; 7];
    adj[3] = 0.25;
    adj[4] = 0.15;
    close(
        v(LossKind::Cdw2, 5, &adj),
        std::f64::consts::E * -(0.15f64).ln(),
        tol,
        "CDW2 off by 1",
    )?;
    close(v(LossKind::Cdw2, 4, &q), (1.0f64).exp() * -q[3].ln(), tol, "CDW2 off by 1 (b)")?;

    close(v(LossKind::Cdf, 1, &one_hot(2, 7)), 1.0, tol, "CDF one-hot at 2")?;
    close(v(LossKind::Cdf, 1, &one_hot(7, 7)), 6.0, tol, "CDF one-hot at 7")?;
    close(v(LossKind::Cdf, 4, &one_hot(4, 7)), 0.0, tol, "CDF exact")?;

    close(v(LossKind::Pom1a, 4, &uni), -(3.0f64 / 7.0).ln(), tol, "POM1a interior")?;
    close(v(LossKind::Pom1a, 1, &uni), -(2.0f64 / 7.0).ln(), tol, "POM1a edge")?;
    close(v(LossKind::Pom1a, 4, &one_hot(5, 7)), 0.0, tol, "POM1a neighbour mass")?;
    close(v(LossKind::Pom1b, 4, &uni), 3.0 * 7f64.ln(), tol, "POM1b interior")?;
    let mut third = vec![0.0; 7];
    third[2..5].fill(1.0 / 3.0);
    close(v(LossKind::Pom1b, 4, &third), 3.0 * 3f64.ln(), tol, "POM1b three-way")?;

    let g = loss_grad(LossKind::Pom1b, &t(4, 7), &p(&uni)).unwrap();
    for (j, gj) in g.wrt_probs.iter().enumerate() {
        let want = if (2..=4).contains(&j) { -7.0 } else { 0.0 };
        close(*gj, want, 1e-9, "POM1b uniform gradient")?;
    }
    let logits = [0.3, -1.2, 2.0, 0.1, -0.4, 0.9, 0.0];
    let cre = loss_from_logits(LossKind::Cre, &t(2, 7), &logits).unwrap();
    let sm = softmax(&logits);
    for j in 0..7 {
        close(cre.wrt_logits[j], sm[j] - one_hot(2, 7)[j], 1e-12, "CRE p - t")?;
    }

    // central differences, 100 random interior points per loss
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for kind in LossKind::ALL {
        for _ in 0..100 {
            let z: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let c = rng.gen_range(1..=k);
            let target = t(c, k);
            let an = loss_from_logits(kind, &target, &z).unwrap().wrt_logits;
            let fd: Vec<f64> = (0..k)
                .map(|j| {
                    let mut up = z.clone();
                    let mut dn = z.clone();
                    up[j] += h;
                    dn[j] -= h;
                    let f = |x: &[f64]| loss_from_logits(kind, &target, x).unwrap().value;
                    (f(&up) - f(&dn)) / (2.0 * h)
                })
                .collect();
            let err = rel_err(&an, &fd);
            worst = worst.max(err);
            ensure(err < 1e-5, || format!("{kind} logit gradient rel err {err:.2e} at {z:?}, class {c}"))?;

            // probability gradient along a direction that stays on the simplex
            let probs = softmax(&z);
            let d: Vec<f64> = {
                let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let m = raw.iter().sum::<f64>() / k as f64;
                raw.iter().map(|x| x - m).collect()
            };
            let g = loss_grad(kind, &target, &p(&probs)).unwrap().wrt_probs;
            let an_dir: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            let hp = 1e-7;
            let shifted = |s: f64| -> f64 {
                let q: Vec<f64> = probs.iter().zip(&d).map(|(a, b)| a + s * b).collect();
                loss_value(kind, &target, &p(&q)).unwrap()
            };
            let fd_dir = (shifted(hp) - shifted(-hp)) / (2.0 * hp);
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let err = (an_dir - fd_dir).abs() / (norm(&g) * norm(&d)).max(1e-8);
            worst = worst.max(err);
            ensure(err < 1e-5, || format!("{kind} probability gradient rel err {err:.2e}"))?;
        }
    }
    Ok(format!("tagged values to 1e-9; 6 x 100 gradient checks, worst rel err {worst:.1e}"))
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-8);
    diff / scale
}

// ------------------------------------------------------------- scheduler

fn scheduler() -> Outcome {
    let lr_max = 0.01;
    let total = 10_000;
    let cfg = OneCycleConfig::new(lr_max, total);
    let lr = |i| cfg.lr_at(i).unwrap();
    close(lr(0), lr_max / 25.0, 1e-15, "lr(0)")?;
    close(lr(3_000), lr_max, 1e-15, "lr(0.3T)")?;
    close(lr(total), lr_max / 25.0 / 1e4, 1e-18, "lr(T)")?;
    ensure(cfg.lr_at(total + 1).is_err(), || "iteration past T accepted".into())?;

    let grid: Vec<f64> = (0..=total).map(lr).collect();
    let peak = grid
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    ensure(peak == 3_000, || format!("maximum at {peak}, expected 3000"))?;
    for i in 1..=total {
        let (a, b) = (grid[i - 1], grid[i]);
        ensure(b > 0.0, || format!("non-positive lr at {i}"))?;
        if i <= peak {
            ensure(b >= a, || format!("not increasing at {i}"))?;
        } else {
            ensure(b <= a, || format!("not decreasing at {i}"))?;
        }
        // cosine legs: one step never moves more than pi/2 * range / leg length
        let leg = if i <= peak { 3_000.0 } else { 7_000.0 };
        let bound = std::f64::consts::FRAC_PI_2 * lr_max / leg * 1.0001;
        ensure((b - a).abs() <= bound, || format!("jump of {} at {i}", (b - a).abs()))?;
    }
    Ok("anchors exact, unimodal and continuous on 10^4 grid".into())
}

// --------------------------------------------------------------- metrics

struct OracleMetrics {
    acc: f64,
    acc_pm1: f64,
    recall: Vec<Option<f64>>,
    precision: Vec<Option<f64>>,
}

/// Classifies each (true, predicted) sample independently.
fn oracle_metrics(samples: &[(usize, usize)], k: usize) -> OracleMetrics {
    let n = samples.len() as f64;
    let exact = samples.iter().filter(|(a, b)| a == b).count() as f64;
    let near = samples.iter().filter(|(a, b)| a.abs_diff(*b) <= 1).count() as f64;
    let mut recall = Vec::new();
    let mut precision = Vec::new();
    for c in 1..=k {
        let truth = samples.iter().filter(|(a, _)| *a == c).count();
        let correct = samples.iter().filter(|(a, b)| *a == c && b.abs_diff(c) <= 1).count();
        let predicted = samples.iter().filter(|(_, b)| b.abs_diff(c) <= 1).count();
        recall.push((truth > 0).then(|| correct as f64 / truth as f64));
        precision.push((predicted > 0).then(|| correct as f64 / predicted as f64));
    }
    OracleMetrics {
        acc: exact / n,
        acc_pm1: near / n,
        recall,
        precision,
    }
}

fn mean_present(v: &[Option<f64>]) -> f64 {
    let p: Vec<f64> = v.iter().flatten().copied().collect();
    if p.is_empty() {
        0.0
    } else {
        p.iter().sum::<f64>() / p.len() as f64
    }
}

fn metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..1000 {
        let k = rng.gen_range(2..=9);
        let mut samples = Vec::new();
        let mut cm = ConfusionMatrix::new(k);
        let n = rng.gen_range(1..60);
        for _ in 0..n {
            let tc = rng.gen_range(1..=k);
            let pc = if rng.gen_bool(0.5) {
                tc
            } else {
                rng.gen_range(1..=k)
            };
            samples.push((tc, pc));
            cm.accumulate(tc, pc).unwrap();
        }
        let o = oracle_metrics(&samples, k);
        let prf = prf_pm1(&cm).unwrap();
        ensure(acc(&cm).unwrap() == o.acc, || format!("trial {trial}: acc"))?;
        ensure(acc_pm1(&cm).unwrap() == o.acc_pm1, || format!("trial {trial}: acc_pm1"))?;
        ensure(prf.recall == o.recall, || format!("trial {trial}: per-class recall"))?;
        ensure(prf.precision == o.precision, || format!("trial {trial}: per-class precision"))?;
        let (r, pr) = (mean_present(&o.recall), mean_present(&o.precision));
        let f1 = if r + pr > 0.0 { 2.0 * r * pr / (r + pr) } else { 0.0 };
        ensure(prf.recall_mean == r && prf.precision_mean == pr, || format!("trial {trial}: means"))?;
        ensure(prf.f1 == f1, || format!("trial {trial}: F1"))?;
    }

    let hand = ConfusionMatrix::from_rows(&[vec![2, 1, 0], vec![0, 1, 1], vec![1, 0, 2]]).unwrap();
    let prf = prf_pm1(&hand).unwrap();
    let (r, pr) = ((1.0 + 1.0 + 2.0 / 3.0) / 3.0, (3.0 / 5.0 + 2.0 / 8.0 + 2.0 / 5.0) / 3.0);
    close(acc(&hand).unwrap(), 0.625, 1e-9, "hand acc")?;
    close(acc_pm1(&hand).unwrap(), 0.875, 1e-9, "hand acc_pm1")?;
    close(prf.recall_mean, r, 1e-9, "hand mean recall")?;
    close(prf.precision_mean, pr, 1e-9, "hand mean precision")?;
    close(prf.f1, 2.0 * r * pr / (r + pr), 1e-9, "hand F1")?;
    close(prf.f1, 0.5674, 5e-5, "hand F1 (4 d.p.)")?;

    for _ in 0..200 {
        let k = rng.gen_range(2..=9);
        let rows: Vec<Vec<u64>> = (0..k)
            .map(|i: usize| {
                (0..k)
                    .map(|j| if i.abs_diff(j) <= 1 { rng.gen_range(0..20) } else { 0 })
                    .collect()
            })
            .collect();
        let cm = ConfusionMatrix::from_rows(&rows).unwrap();
        if cm.total() == 0 {
            continue;
        }
        ensure(acc_pm1(&cm).unwrap() == 1.0, || format!("tridiagonal acc_pm1 != 1 for {rows:?}"))?;
    }

    // the 7-class all-ones tridiagonal example, neighbourhood reading
    let tri: Vec<Vec<u64>> = (0..7)
        .map(|i: usize| (0..7).map(|j| u64::from(i.abs_diff(j) <= 1)).collect())
        .collect();
    let cm = ConfusionMatrix::from_rows(&tri).unwrap();
    let nb = prf_pm1_with(&cm, Pm1Convention::Neighborhood).unwrap();
    close(acc_pm1(&cm).unwrap(), 1.0, 0.0, "7-class tridiagonal acc_pm1")?;
    close(nb.precision_mean, 0.81, 0.005, "7-class tridiagonal mean precision")?;
    close(nb.f1, 0.81, 0.005, "7-class tridiagonal F1")?;
    let a = acc(&cm).unwrap();
    close((a * 100.0).floor() / 100.0, 0.36, 1e-12, "7-class tridiagonal acc (truncated)")?;
    Ok(format!(
        "1000 random matrices exact; hand F1 {:.6}; tridiagonal acc_pm1 = 1; 7-class example acc {a:.4}, P {:.4}, F1 {:.4}",
        prf.f1, nb.precision_mean, nb.f1
    ))
}

// ------------------------------------------------------------------- dwt

fn stream(samples: Vec<f32>, fs: f64) -> AEStream {
    let n = samples.len();
    let manifest = StreamManifest::new(
        "T",
        "s",
        fs,
        n,
        vec![TorqueInterval {
            class_index: 1,
            start_sample: 0,
            end_sample: n,
        }],
    );
    AEStream::new(manifest, samples).unwrap()
}

fn dwt_checks() -> Outcome {
    let filters = WaveletFilterPair::db45();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for &n in &[23_040usize, 32_768, 40_001] {
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let pyr = dwt(&x, filters, 9).map_err(|e| e.to_string())?;
        let y = idwt(&pyr, filters).map_err(|e| e.to_string())?;
        let err = rel_err(&x, &y);
        worst = worst.max(err);
        ensure(err < 1e-9, || format!("PR rel err {err:.2e} at n = {n}"))?;
    }

    let raw: Vec<f32> = (0..50_000).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
    let s = stream(raw, 50_000.0);
    let same = denoise_stream(&s, &DenoiseConfig::with_level(0)).map_err(|e| e.to_string())?;
    ensure(
        same.samples.iter().zip(&s.samples).all(|(a, b)| a.to_bits() == b.to_bits()),
        || "level 0 is not bitwise identity".into(),
    )?;

    let fs = 100_000.0;
    let mut ratios = Vec::new();
    for seed in 0..20 {
        let mut r = ChaCha8Rng::seed_from_u64(1000 + seed);
        let noise: Vec<f32> = (0..100_000).map(|_| r.sample::<f32, _>(StandardNormal)).collect();
        let s = stream(noise, fs);
        let out = denoise_stream(&s, &DenoiseConfig::with_level(4)).map_err(|e| e.to_string())?;
        let e = |v: &[f32]| v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>();
        ratios.push(e(&out.samples) / e(&s.samples));
    }
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    ensure(max_ratio < 0.15, || format!("white-noise energy ratio reached {max_ratio:.4}"))?;
    Ok(format!(
        "PR depth 9 worst rel err {worst:.1e}; level 0 bitwise identity; level-4 noise energy ratio <= {max_ratio:.4} over 20 seeds"
    ))
}

// ------------------------------------------------------------------- cwt

fn cwt_checks() -> Outcome {
    let fs = 5e6;
    let n = 1 << 16;
    let bank = MorseFilterBank::new(fs, n, ScaleLayout::default()).map_err(|e| e.to_string())?;
    ensure(bank.n_scales() == 96, || format!("{} filters", bank.n_scales()))?;
    close(MorseParams::default().peak_frequency(), (20.0f64 / 3.0).cbrt(), 1e-12, "peak frequency")?;
    let step = bank.voice_ratio().log2();
    let mut detail = Vec::new();
    for &f in &[10e3, 100e3, 1e6] {
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / fs).sin())
            .collect();
        let s = bank.cwt(&x).map_err(|e| e.to_string())?;
        let row = s.dominant_row();
        let fc = s.center_freqs_hz[row];
        let off = (fc / f).log2().abs();
        ensure(off <= step + 1e-12, || format!("{f} Hz tone peaks at {fc:.0} Hz"))?;
        detail.push(format!("{:.0}k->{:.1}k", f / 1e3, fc / 1e3));

        let doubled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let s2 = bank.cwt(&doubled).map_err(|e| e.to_string())?;
        for (a, b) in s.magnitudes.iter().zip(&s2.magnitudes) {
            ensure((2.0 * a - b).abs() <= 1e-9 * b.abs().max(1e-12), || "linearity".into())?;
        }
    }
    let z = bank.cwt(&vec![0.0; 4096]).map_err(|e| e.to_string())?;
    ensure(z.magnitudes.iter().all(|&v| v == 0.0), || "zero input gave non-zero output".into())?;
    Ok(format!("tones {}; zero in, zero out; linear to 1e-9", detail.join(", ")))
}

// ---------------------------------------------------------- segmentation

fn segmentation() -> Outcome {
    let spec = SyntheticSpec {
        seconds_per_level: 10.0,
        ..SyntheticSpec::default()
    };
    let (vib, ae) = generate_synthetic(&spec).map_err(|e| e.to_string())?;
    let segs = segment_cycles(&ae, &vib).map_err(|e| e.to_string())?;
    let mut counts = vec![0usize; spec.n_levels];
    for s in &segs {
        counts[s.class_index - 1] += 1;
    }
    for (c, &n) in counts.iter().enumerate() {
        ensure(n.abs_diff(1200) <= 1, || format!("class {} has {n} segments", c + 1))?;
    }
    Ok(format!("segments per level {counts:?}"))
}

// ------------------------------------------------------------ end to end

fn campaign_features() -> Result<Vec<FeatureRecord>, String> {
    let specs = campaign_specs(&SyntheticSpec::default(), &DEFAULT_CAMPAIGN_IDS, &DEFAULT_CAMPAIGN_SHIFTS)
        .map_err(|e| e.to_string())?;
    let mut items = Vec::new();
    for spec in &specs {
        let (vib, ae) = generate_synthetic(spec).map_err(|e| e.to_string())?;
        items.extend(stream_features(&ae, &vib, &PipelineConfig::default()).map_err(|e| e.to_string())?);
    }
    Ok(items)
}

fn loco(seed: u64) -> SplitSpec {
    SplitSpec {
        mode: SplitMode::Loco,
        test_campaign: Some("C".into()),
        seed,
        ..SplitSpec::default()
    }
}

fn trainer_cfg(loss: LossKind, schedule: ScheduleKind, seed: u64) -> TrainConfig {
    TrainConfig {
        loss,
        schedule,
        epochs: 3,
        batch_size: 8,
        lr_max: 0.01,
        seed,
        ..TrainConfig::default()
    }
}

fn end_to_end(items: &[FeatureRecord]) -> Outcome {
    let mut one = Vec::new();
    let mut constant = Vec::new();
    for seed in 0..5 {
        for (sched, out) in [(ScheduleKind::Onecycle, &mut one), (ScheduleKind::Constant, &mut constant)] {
            let r = run_once(items, &loco(seed), &trainer_cfg(LossKind::Pom1b, sched, seed), "e2e", 0)
                .map_err(|e| e.to_string())?;
            out.push(r.metrics.acc_pm1);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let worst = one.iter().cloned().fold(1.0, f64::min);
    ensure(worst >= 0.90, || format!("1cycle acc_pm1 {one:.3?} has a run below 0.90"))?;
    ensure(mean(&one) >= mean(&constant), || {
        format!("1cycle mean {:.4} < constant mean {:.4}", mean(&one), mean(&constant))
    })?;
    Ok(format!(
        "{} cycles; test campaign C acc_pm1 1cycle mean {:.4} (min {worst:.4}) vs constant {:.4}",
        items.len(),
        mean(&one),
        mean(&constant)
    ))
}

/// One-sided sign test, ties dropped.
fn sign_test_p(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    let mut p = 0.0;
    for i in wins..=n {
        p += binomial(n, i) / 2f64.powi(n as i32);
    }
    p
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn ordinal(items: &[FeatureRecord]) -> Outcome {
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    let mut pairs = Vec::new();
    for seed in 0..10 {
        let frac = |loss| -> Result<f64, String> {
            let r = run_once(items, &loco(seed), &trainer_cfg(loss, ScheduleKind::Onecycle, seed), "ord", 0)
                .map_err(|e| e.to_string())?;
            Ok(r.adjacent_error_fraction.unwrap_or(1.0))
        };
        let (pom, cre) = (frac(LossKind::Pom1b)?, frac(LossKind::Cre)?);
        pairs.push((pom, cre));
        match pom.partial_cmp(&cre) {
            Some(std::cmp::Ordering::Greater) => wins += 1,
            Some(std::cmp::Ordering::Less) => losses += 1,
            _ => ties += 1,
        }
    }
    let p = sign_test_p(wins, losses);
    ensure(wins + losses > 0 && p < 0.05, || {
        format!("sign test p = {p:.4} ({wins} wins, {losses} losses, {ties} ties)")
    })?;
    let (mp, mc) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / 10.0, b + y / 10.0));
    Ok(format!(
        "adjacent-error fraction POM1b {mp:.3} vs CRE {mc:.3}; {wins}/{} wins, sign test p = {p:.4}",
        wins + losses
    ))
}

// ----------------------------------------------------------------- driver

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |name: &str, budget: Duration, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let mut outcome = f();
        let took = start.elapsed();
        if outcome.is_ok() && took > budget {
            outcome = Err(format!("took {took:.1?}, budget {budget:?}"));
        }
        match outcome {
            Ok(detail) => println!("PASS  {name:<26} {detail} [{:.2}s]", took.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<26} {why} [{:.2}s]", took.as_secs_f64());
            }
        }
    };
    report("loss values and gradients", Duration::from_secs(10), &mut losses);
    report("1cycle scheduler", Duration::from_secs(1), &mut scheduler);
    report("metrics oracle", Duration::from_secs(5), &mut metrics);
    report("dwt and denoising", Duration::from_secs(30), &mut dwt_checks);
    report("cwt tone localization", Duration::from_secs(30), &mut cwt_checks);
    report("segmentation count", Duration::from_secs(60), &mut segmentation);

    let start = Instant::now();
    let items = campaign_features();
    let prep = start.elapsed();
    match items {
        Ok(items) => {
            let budget = Duration::from_secs(600).saturating_sub(prep);
            report("end-to-end loco pipeline", budget, &mut || end_to_end(&items));
            report("ordinal error property", Duration::from_secs(600), &mut || ordinal(&items));
        }
        Err(e) => {
            failed += 2;
            println!("FAIL  {:<26} feature extraction failed: {e}", "end-to-end loco pipeline");
            println!("FAIL  {:<26} feature extraction failed: {e}", "ordinal error property");
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
