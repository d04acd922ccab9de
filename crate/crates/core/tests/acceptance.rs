//! End-to-end acceptance checks. Runs as a plain binary so each criterion
//! reports one PASS/FAIL line; exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use ndarray::{concatenate, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mudas_core::adapt::{
    adapt, align_distribution, compute_thresholds, evaluate_step, AdaptConfig, AlignmentStats, Diversity, Init,
    LambdaDraw, PassModes, PseudoLabelMasks, SourceBatch, StepSettings, TargetBatch,
};
use mudas_core::augment::{apply_bands, strong_augment_with_bands, MaskBands, SpecAugmentConfig, Spectrogram};
use mudas_core::baseline::train_supervised;
use mudas_core::data::{Domain, LabelMatrix, LabeledSet, SyntheticDomains, SyntheticSpec};
use mudas_core::metrics::{average_precision, micro_auprc};
use mudas_core::nn::{forward, BnMode, ClassifierConfig, ParameterSet};
use mudas_core::select::{d_score, ClassWeights, SelectionBuffer, SourceRangeStats, DEFAULT_RANGE_EPS};

type Check = std::result::Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, r: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || r.random_range(lo..hi))
}

// ---------------------------------------------------------------- 1

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

struct GradCase {
    params: ParameterSet,
    source: SourceBatch,
    target: TargetBatch,
    settings: StepSettings,
    modes: PassModes,
    lambda: LambdaDraw,
}

impl GradCase {
    fn random(seed: u64) -> Self {
        let mut r = rng(seed);
        let input = r.random_range(1..=6);
        let layers = r.random_range(0..=2);
        let hidden: Vec<usize> = (0..layers).map(|_| r.random_range(1..=8)).collect();
        let k = r.random_range(1..=4);
        let n = r.random_range(2..=8);
        let m = r.random_range(2..=8);
        let cfg = ClassifierConfig::new(input, k)
            .with_hidden(hidden)
            .with_dropout(0.0)
            .with_seed(seed);
        let mut params = ParameterSet::init(&cfg).unwrap();
        for norm in &mut params.norms {
            norm.running_mean.mapv_inplace(|_| r.random_range(-0.5..0.5));
            norm.running_var.mapv_inplace(|_| r.random_range(0.5..2.0));
            norm.gamma.mapv_inplace(|_| r.random_range(0.5..1.5));
            norm.beta.mapv_inplace(|_| r.random_range(-0.2..0.2));
        }
        for dense in &mut params.dense {
            dense.bias.mapv_inplace(|_| r.random_range(-0.2..0.2));
        }
        let labels = Array2::from_shape_simple_fn((n, k), || if r.random_bool(0.4) { 1.0 } else { 0.0 });
        let source = SourceBatch {
            weak: uniform(n, input, -1.0, 1.0, &mut r),
            strong: uniform(n, input, -1.0, 1.0, &mut r),
            labels,
        };
        let target = TargetBatch {
            weak: uniform(m, input, -1.0, 1.0, &mut r),
            strong: uniform(m, input, -1.0, 1.0, &mut r),
        };
        // Alternate between frozen statistics and batch statistics (whose
        // gradient flows through the batch mean and variance).
        let modes = if seed % 2 == 0 {
            PassModes {
                combined: BnMode::FrozenStats,
                source_only: BnMode::FrozenStats,
            }
        } else {
            PassModes {
                combined: BnMode::UpdateStats,
                source_only: BnMode::UpdateStats,
            }
        };
        let lambda = LambdaDraw::Fixed {
            ss: uniform(n, k, 0.0, 1.0, &mut r),
            ws: uniform(n, k, 0.0, 1.0, &mut r),
        };
        let settings = StepSettings {
            tau_pos: 0.9,
            tau_neg: 0.9,
            diversity: Diversity::AsPrinted,
            align_eps: 1e-8,
            t: r.random_range(0.2..1.0),
        };
        Self {
            params,
            source,
            target,
            settings,
            modes,
            lambda,
        }
    }

    /// Pseudo-labels taken from a first evaluation, with random disjoint
    /// masks so all four target terms contribute.
    fn frozen_pseudo(&self, seed: u64) -> mudas_core::adapt::PseudoLabels {
        let mut p = self.params.clone();
        let eval = evaluate_step(
            &mut p,
            &self.source,
            &self.target,
            &self.settings,
            self.modes,
            &self.lambda,
            None,
            &mut rng(0),
        )
        .unwrap();
        let mut pseudo = eval.pseudo;
        let mut r = rng(seed ^ 0xa5a5);
        let dim = pseudo.y_tilde.dim();
        let mut positive = Array2::from_elem(dim, false);
        let mut negative = Array2::from_elem(dim, false);
        for cell in positive.iter_mut().zip(negative.iter_mut()) {
            match r.random_range(0..3) {
                0 => *cell.0 = true,
                1 => *cell.1 = true,
                _ => {}
            }
        }
        positive[[0, 0]] = true;
        negative[[0, 0]] = false;
        let last = (dim.0 - 1, dim.1 - 1);
        if last != (0, 0) {
            negative[[last.0, last.1]] = true;
            positive[[last.0, last.1]] = false;
        }
        pseudo.masks = PseudoLabelMasks { positive, negative };
        pseudo
    }

    fn relu_margin(&self) -> f64 {
        let s = &self.source;
        let t = &self.target;
        let combined = concatenate(Axis(0), &[s.strong.view(), s.weak.view(), t.strong.view(), t.weak.view()]).unwrap();
        let source = concatenate(Axis(0), &[s.strong.view(), s.weak.view()]).unwrap();
        let mut margin = f64::INFINITY;
        for (x, mode) in [(combined, self.modes.combined), (source, self.modes.source_only)] {
            let mut p = self.params.clone();
            let (_, trace) = forward(&mut p, x.view(), mode, &mut rng(0)).unwrap();
            margin = margin.min(trace.relu_margin(&self.params));
        }
        margin
    }
}

fn criterion_gradients() -> Check {
    let start = Instant::now();
    let mut checked = 0;
    let mut skipped = 0;
    let mut scalars = 0;
    let mut worst: f64 = 0.0;
    let mut seed = 0;
    while checked < 24 {
        seed += 1;
        let case = GradCase::random(seed);
        if case.relu_margin() < 1e-3 {
            skipped += 1;
            continue;
        }
        let pseudo = case.frozen_pseudo(seed);
        let loss_at = |p: &ParameterSet| {
            let mut p = p.clone();
            evaluate_step(
                &mut p,
                &case.source,
                &case.target,
                &case.settings,
                case.modes,
                &case.lambda,
                Some(&pseudo),
                &mut rng(0),
            )
            .unwrap()
            .breakdown
            .total
        };
        let mut p = case.params.clone();
        let eval = evaluate_step(
            &mut p,
            &case.source,
            &case.target,
            &case.settings,
            case.modes,
            &case.lambda,
            Some(&pseudo),
            &mut rng(0),
        )
        .unwrap();
        let b = eval.breakdown;
        ensure(b.positives > 0 && b.negatives > 0 && b.l_pos_div != 0.0, || {
            format!("seed {seed}: target terms inactive")
        })?;
        let analytic = eval.gradient(&case.params).unwrap();
        let names: Vec<String> = case.params.trainable().iter().map(|(n, _)| n.clone()).collect();
        let eps = 1e-4;
        for (ti, a) in analytic.tensors().iter().enumerate() {
            for (i, &ai) in a.iter().enumerate() {
                let mut plus = case.params.clone();
                plus.trainable_mut()[ti][i] += eps;
                let mut minus = case.params.clone();
                minus.trainable_mut()[ti][i] -= eps;
                let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * eps);
                let e = rel_err(ai, numeric);
                worst = worst.max(e);
                scalars += 1;
                ensure(e < 1e-4, || {
                    format!("seed {seed} {:?}: {}[{i}] analytic {ai} numeric {numeric}", case.modes, names[ti])
                })?;
            }
        }
        checked += 1;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{checked} configs ({skipped} near a ReLU kink skipped), {scalars} scalars, max rel err {worst:.2e}, {:.1}s",
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 2

fn criterion_loss_identity() -> Check {
    let (source, target) = mudas_core::data::gen_synthetic(&SyntheticSpec::default(), 1).map_err(|e| e.to_string())?;
    let cfg = AdaptConfig {
        seed: 1,
        ..AdaptConfig::default()
    };
    let init = Init::Fresh(ClassifierConfig::new(256, 6).with_seed(1));
    let (_, report) = adapt(&source, &target.unlabeled(), &cfg, init).map_err(|e| e.to_string())?;
    ensure(report.epochs.len() == 50, || format!("{} epochs logged", report.epochs.len()))?;
    let mut worst: f64 = 0.0;
    for s in &report.steps {
        let l = s.loss;
        let recomputed = l.l_ws + l.l_ss + l.t * l.l_pos + l.t * l.l_neg + l.t * l.l_pos_div + l.t * l.l_neg_div;
        let e = (l.total - recomputed).abs();
        worst = worst.max(e);
        ensure(e < 1e-9, || format!("step {}: total {} vs {recomputed}", s.step, l.total))?;
    }

    // Empty masks and t = 0: the target side contributes nothing.
    let mut r = rng(2);
    let mut empty_cases = 0;
    for case in 0..20u64 {
        let mut gc = GradCase::random(1000 + case);
        gc.settings.t = 0.0;
        gc.modes = PassModes::default();
        let mut pseudo = gc.frozen_pseudo(case);
        pseudo.masks.positive.fill(false);
        pseudo.masks.negative.fill(false);
        let eval = evaluate_step(
            &mut gc.params,
            &gc.source,
            &gc.target,
            &gc.settings,
            gc.modes,
            &LambdaDraw::Sample,
            Some(&pseudo),
            &mut r,
        )
        .map_err(|e| e.to_string())?;
        let b = eval.breakdown;
        ensure(b.total == b.l_ws + b.l_ss, || format!("case {case}: {b:?}"))?;
        empty_cases += 1;
    }
    let mut gc = GradCase::random(77);
    gc.settings.t = 0.0;
    let empty = TargetBatch::empty(gc.params.input_dim());
    let eval = evaluate_step(
        &mut gc.params,
        &gc.source,
        &empty,
        &gc.settings,
        PassModes::default(),
        &LambdaDraw::Sample,
        None,
        &mut r,
    )
    .map_err(|e| e.to_string())?;
    let b = eval.breakdown;
    ensure(b.total == b.l_ws + b.l_ss, || format!("empty target: {b:?}"))?;
    Ok(format!(
        "{} logged steps, max |total - sum| {worst:.1e}; {} empty-mask cases exact",
        report.steps.len(),
        empty_cases + 1
    ))
}

// ---------------------------------------------------------------- 3

fn criterion_thresholds() -> Check {
    let mut r = rng(3);
    for draw in 0..10_000 {
        let rows = r.random_range(1..=16);
        let k = r.random_range(1..=6);
        let z = uniform(rows, k, 0.0, 1.0, &mut r);
        let tau_pos = 1.0 - r.random_range(0.0..1.0);
        let tau_neg = 1.0 - r.random_range(0.0..1.0);
        let th = compute_thresholds(&z, tau_pos, tau_neg).map_err(|e| e.to_string())?;
        for i in 0..k {
            let (p, m) = (th.c_plus[i], th.c_minus[i]);
            ensure(p >= m && (0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&m), || {
                format!("draw {draw} class {i}: c+ {p} c- {m}")
            })?;
        }
    }
    // Hand cases. Decimal 0.1 has no exact binary form, so the value is
    // compared with the same expression evaluated in f64.
    let th = compute_thresholds(&ndarray::array![[1.0], [0.0], [0.5]], 0.9, 0.9).map_err(|e| e.to_string())?;
    let expected_minus = 1.0 - 0.9 * (1.0 - 0.0);
    ensure(th.c_plus[0] == 0.9 && th.c_minus[0] == expected_minus, || {
        format!("0.9/0.1 case gave {} / {}", th.c_plus[0], th.c_minus[0])
    })?;
    ensure((th.c_minus[0] - 0.1).abs() <= f64::EPSILON, || "c- not 0.1".into())?;
    let th = compute_thresholds(&ndarray::array![[0.4], [0.4]], 0.5, 1.0).map_err(|e| e.to_string())?;
    ensure(th.c_plus[0] == 0.4 && th.c_minus[0] == 0.5 * 0.4, || {
        format!("swap case gave {} / {}", th.c_plus[0], th.c_minus[0])
    })?;
    let th = compute_thresholds(&ndarray::array![[0.4], [0.4]], 1.0, 1.0).map_err(|e| e.to_string())?;
    ensure(th.c_plus[0] == 0.4 && th.c_minus[0] == 0.4, || "collapse case".into())?;
    Ok("10000 draws ordered; 0.9/0.1, swap and collapse cases reproduced".into())
}

// ---------------------------------------------------------------- 4

fn criterion_alignment() -> Check {
    let mut r = rng(4);
    for draw in 0..2_000 {
        let k = r.random_range(1..=6);
        let zs = uniform(r.random_range(1..=10), k, 0.0, 1.0, &mut r);
        let zt = uniform(r.random_range(1..=10), k, 0.0, 1.0, &mut r);
        let stats = AlignmentStats::from_batches(&zs, &zt).map_err(|e| e.to_string())?;
        let out = align_distribution(&zt, &stats, 1e-8);
        ensure(out.iter().all(|v| (0.0..=1.0).contains(v)), || format!("draw {draw} left [0, 1]"))?;
        let same = AlignmentStats {
            mean_ws: stats.mean_wt.clone(),
            mean_wt: stats.mean_wt.clone(),
        };
        ensure(align_distribution(&zt, &same, 1e-8) == zt, || format!("draw {draw}: equal means moved values"))?;
    }
    let zero_target = Array2::zeros((3, 2));
    let stats = AlignmentStats::from_batches(&uniform(3, 2, 0.0, 1.0, &mut r), &zero_target).map_err(|e| e.to_string())?;
    let out = align_distribution(&zero_target, &stats, 1e-8);
    ensure(out.iter().all(|&v| v == 0.0), || "zero target mean".into())?;

    let cap = AlignmentStats {
        mean_ws: Array1::from(vec![0.4]),
        mean_wt: Array1::from(vec![0.2]),
    };
    let out = align_distribution(&ndarray::array![[0.5]], &cap, 1e-8);
    ensure(out[[0, 0]] == 1.0, || format!("cap case gave {}", out[[0, 0]]))?;
    Ok("2000 draws in [0, 1], equal means give identity, cap case = 1.0".into())
}

// ---------------------------------------------------------------- 5

fn brute_force_ap(y: &[u8], s: &[f64]) -> f64 {
    // Sum of precision at each distinct threshold times the recall gained.
    let positives = y.iter().filter(|&&v| v == 1).count() as f64;
    let mut thresholds: Vec<f64> = s.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for th in thresholds {
        let tp = y.iter().zip(s).filter(|(&l, &v)| l == 1 && v >= th).count() as f64;
        let predicted = s.iter().filter(|&&v| v >= th).count() as f64;
        let recall = tp / positives;
        ap += (recall - prev_recall) * tp / predicted;
        prev_recall = recall;
    }
    ap
}

fn criterion_metrics() -> Check {
    let ap = average_precision(
        ndarray::array![1u8, 0, 1].view(),
        ndarray::array![0.9, 0.8, 0.7].view(),
    )
    .map_err(|e| e.to_string())?;
    ensure((ap - 0.8333).abs() < 1e-4, || format!("hand fixture gave {ap}"))?;

    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    let mut fixtures = 0;
    while fixtures < 100 {
        let y = Array2::from_shape_simple_fn((20, 3), || u8::from(r.random_bool(0.3)));
        if y.iter().all(|&v| v == 0) {
            continue;
        }
        // Coarse scores so ties occur.
        let z = Array2::from_shape_simple_fn((20, 3), || (r.random_range(0..10) as f64) / 10.0);
        let labels = LabelMatrix::from_cells(y.clone()).unwrap();
        let micro = micro_auprc(&labels, z.view()).map_err(|e| e.to_string())?;
        let flat_y: Vec<u8> = y.iter().copied().collect();
        let flat_z: Vec<f64> = z.iter().copied().collect();
        let oracle = brute_force_ap(&flat_y, &flat_z);
        worst = worst.max((micro - oracle).abs());
        ensure((micro - oracle).abs() < 1e-9, || format!("fixture {fixtures}: {micro} vs {oracle}"))?;
        for c in 0..3 {
            let col_y: Vec<u8> = y.column(c).to_vec();
            if col_y.iter().all(|&v| v == 0) {
                continue;
            }
            let col_z: Vec<f64> = z.column(c).to_vec();
            let ap = average_precision(y.column(c), z.column(c)).map_err(|e| e.to_string())?;
            let oracle = brute_force_ap(&col_y, &col_z);
            worst = worst.max((ap - oracle).abs());
            ensure((ap - oracle).abs() < 1e-9, || format!("fixture {fixtures} class {c}: {ap} vs {oracle}"))?;
        }
        fixtures += 1;
    }

    for trial in 0..50 {
        let n = r.random_range(1..=40);
        let mut y: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.5))).collect();
        y[0] = 1;
        let prevalence = y.iter().filter(|&&v| v == 1).count() as f64 / n as f64;
        let s = vec![r.random::<f64>(); n];
        let ap = average_precision(Array1::from(y).view(), Array1::from(s).view()).map_err(|e| e.to_string())?;
        ensure((ap - prevalence).abs() < 1e-12, || format!("constant trial {trial}: {ap} vs {prevalence}"))?;
    }
    Ok(format!("hand fixture {ap:.4}; 100 random 20x3 fixtures max err {worst:.1e}; constant scores = prevalence"))
}

// ---------------------------------------------------------------- 6

fn criterion_selection() -> Check {
    let ranges = SourceRangeStats::new(ndarray::array![0.9, 0.6], ndarray::array![0.1, 0.1]).map_err(|e| e.to_string())?;
    let w = ClassWeights::new(ndarray::array![0.75, 0.25]).map_err(|e| e.to_string())?;
    let d = d_score(ndarray::array![0.8, 0.4].view(), &ranges, &w, DEFAULT_RANGE_EPS).map_err(|e| e.to_string())?;
    ensure(d == 0.475, || format!("hand case gave {d}"))?;

    let mut r = rng(6);
    let mut total_offers = 0usize;
    for stream in 0..100 {
        let len = r.random_range(0..=10_000);
        let capacity = r.random_range(1..=256);
        // Scores drawn from a small set so ties are common.
        let levels = r.random_range(1..=50);
        let scores: Vec<f64> = (0..len).map(|_| r.random_range(0..levels) as f64 / levels as f64).collect();
        let mut buffer = SelectionBuffer::new(capacity).map_err(|e| e.to_string())?;
        for (i, &s) in scores.iter().enumerate() {
            buffer.offer(i, s);
        }
        total_offers += len;
        let mut order: Vec<usize> = (0..len).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        order.truncate(capacity);
        let got: Vec<usize> = buffer.entries().iter().map(|e| e.item).collect();
        ensure(got == order, || format!("stream {stream} (len {len}, capacity {capacity}) differs from top-N"))?;
    }
    Ok(format!("d_score hand case = 0.475; 100 streams ({total_offers} offers) match brute-force top-N"))
}

// ---------------------------------------------------------------- 7, 8

struct Bounds {
    lower: f64,
    adapted: f64,
    upper: f64,
}

fn held_out_target(spec: &SyntheticSpec, seed: u64) -> LabeledSet {
    let domains = SyntheticDomains::new(spec, seed).unwrap();
    domains.sample(Domain::Target, spec.target_samples, &mut domains.stream_rng(3))
}

fn run_bounds(spec: &SyntheticSpec, seed: u64, with_upper: bool) -> mudas_core::Result<Bounds> {
    let (source, target) = mudas_core::data::gen_synthetic(spec, seed)?;
    let test = held_out_target(spec, seed);
    let cfg = AdaptConfig {
        seed,
        ..AdaptConfig::default()
    };
    let fresh = || Init::Fresh(ClassifierConfig::new(spec.dim, spec.classes).with_seed(seed));
    let score = |p: &ParameterSet| -> mudas_core::Result<f64> {
        let z = p.predict(test.embeddings.rows.view())?;
        micro_auprc(&test.labels, z.view())
    };
    let (lower, _) = train_supervised(&source, &cfg, fresh())?;
    let (adapted, _) = adapt(&source, &target.unlabeled(), &cfg, Init::Pretrained(lower.clone()))?;
    let upper = if with_upper {
        score(&train_supervised(&target, &cfg, fresh())?.0)?
    } else {
        f64::NAN
    };
    Ok(Bounds {
        lower: score(&lower)?,
        adapted: score(&adapted)?,
        upper,
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn criterion_gain() -> Check {
    let start = Instant::now();
    let spec = SyntheticSpec::default();
    let runs: Vec<Bounds> = (1..=5)
        .map(|seed| run_bounds(&spec, seed, true))
        .collect::<mudas_core::Result<_>>()
        .map_err(|e| e.to_string())?;
    let lower = mean(runs.iter().map(|b| b.lower));
    let adapted = mean(runs.iter().map(|b| b.adapted));
    let upper = mean(runs.iter().map(|b| b.upper));
    let elapsed = start.elapsed();
    let summary = format!(
        "lower {lower:.4} adapt {adapted:.4} upper {upper:.4} gain {:+.4}, {:.1}s",
        adapted - lower,
        elapsed.as_secs_f64()
    );
    ensure(adapted - lower >= 0.02, || format!("gain too small: {summary}"))?;
    ensure(adapted <= upper + 0.01, || format!("adapt above upper bound: {summary}"))?;
    ensure(elapsed < Duration::from_secs(300), || format!("too slow: {summary}"))?;
    Ok(summary)
}

fn criterion_no_shift() -> Check {
    let spec = SyntheticSpec::default().without_shift();
    let runs: Vec<Bounds> = (1..=5)
        .map(|seed| run_bounds(&spec, seed, false))
        .collect::<mudas_core::Result<_>>()
        .map_err(|e| e.to_string())?;
    let lower = mean(runs.iter().map(|b| b.lower));
    let adapted = mean(runs.iter().map(|b| b.adapted));
    let summary = format!("lower {lower:.4} adapt {adapted:.4} diff {:+.4}", adapted - lower);
    ensure((adapted - lower).abs() <= 0.05, || summary.clone())?;
    Ok(summary)
}

// ---------------------------------------------------------------- 9

fn criterion_augmentation() -> Check {
    let mut r = rng(9);
    for trial in 0..500 {
        let frames = r.random_range(1..=64);
        let bins = r.random_range(1..=64);
        let s = Spectrogram::new(uniform(frames, bins, 0.1, 1.0, &mut r), 100.0).map_err(|e| e.to_string())?;
        ensure(s.time_reversed().time_reversed() == s, || format!("trial {trial}: double reversal"))?;

        let cfg = SpecAugmentConfig {
            num_time_masks: r.random_range(0..=4),
            max_time_width: r.random_range(0..=frames),
            num_freq_masks: r.random_range(0..=4),
            max_freq_width: r.random_range(0..=bins),
        };
        let (out, bands) = strong_augment_with_bands(&s, &cfg, &mut r).map_err(|e| e.to_string())?;
        let zeroed = out.grid().iter().filter(|&&v| v == 0.0).count() as f64 / (frames * bins) as f64;
        let bound = (cfg.num_time_masks * cfg.max_time_width) as f64 / frames as f64
            + (cfg.num_freq_masks * cfg.max_freq_width) as f64 / bins as f64;
        ensure(zeroed <= bound + 1e-12, || format!("trial {trial}: zeroed {zeroed} > bound {bound}"))?;
        for ((f, b), &v) in out.grid().indexed_iter() {
            let expected = if bands.contains(f, b) { 0.0 } else { s.grid()[[f, b]] };
            ensure(v == expected, || format!("trial {trial}: cell ({f}, {b})"))?;
        }

        let all = MaskBands {
            time: vec![0..frames],
            freq: vec![0..bins],
        };
        ensure(apply_bands(&s, &all).grid().iter().all(|&v| v == 0.0), || {
            format!("trial {trial}: full mask left non-zero cells")
        })?;
    }
    Ok("500 grids: double reversal identity, union bound holds, full mask gives zero grid".into())
}

// ---------------------------------------------------------------- 10

fn mudas(args: &[&str]) -> std::result::Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_mudas"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("mudas {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

fn pipeline(root: &Path) -> std::result::Result<(), String> {
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let small = [
        "--seed", "11", "--set", "dim=32", "--set", "source_samples=120", "--set", "target_samples=120",
        "--set", "epochs=3", "--set", "baseline_epochs=4", "--set", "hidden_dims=16,16",
    ];
    let with = |head: &[&str], tail: &[&str]| -> Vec<String> {
        head.iter().chain(small.iter()).chain(tail.iter()).map(|s| s.to_string()).collect()
    };
    let run = |args: Vec<String>| mudas(&args.iter().map(String::as_str).collect::<Vec<_>>());
    run(with(&["gen"], &["--out", &p("data")]))?;
    run(with(&["train-source"], &["--data", &p("data"), "--out", &p("source")]))?;
    run(with(&["train-upper"], &["--data", &p("data"), "--out", &p("upper")]))?;
    run(with(
        &["adapt"],
        &["--data", &p("data"), "--init", &p("source/model.mud"), "--out", &p("adapt")],
    ))?;
    run(with(
        &["adapt"],
        &[
            "--data", &p("data"), "--init", &p("source/model.mud"), "--select-buffer", "40", "--out",
            &p("adapt_sel"),
        ],
    ))?;
    run(vec![
        "eval".into(),
        "--model".into(),
        p("adapt/model.mud"),
        "--embeddings".into(),
        p("data/target.emb"),
        "--labels".into(),
        p("data/target_labels.csv"),
        "--emit-pr-curve".into(),
        p("eval/pr.csv"),
        "--out".into(),
        p("eval"),
    ])?;
    run(with(
        &["stream-sim"],
        &[
            "--data", &p("data"), "--model", &p("source/model.mud"), "--select-buffer", "30",
            "--trigger-every", "25", "--out", &p("stream"),
        ],
    ))?;
    Ok(())
}

fn collect_files(dir: &Path, base: &Path, out: &mut Vec<std::path::PathBuf>) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_files(&path, base, out);
        } else {
            out.push(path.strip_prefix(base).unwrap().to_path_buf());
        }
    }
}

fn criterion_reproducibility() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    fs::create_dir_all(a.path().join("eval")).map_err(|e| e.to_string())?;
    fs::create_dir_all(b.path().join("eval")).map_err(|e| e.to_string())?;
    pipeline(a.path())?;
    pipeline(b.path())?;
    let mut files = Vec::new();
    collect_files(a.path(), a.path(), &mut files);
    files.sort();
    let mut other = Vec::new();
    collect_files(b.path(), b.path(), &mut other);
    other.sort();
    ensure(files == other, || format!("file sets differ: {files:?} vs {other:?}"))?;
    let models = files.iter().filter(|f| f.extension().is_some_and(|e| e == "mud")).count();
    ensure(models >= 4, || format!("only {models} model files written"))?;
    for f in &files {
        let (x, y) = (fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        ensure(x == y, || format!("{} differs between runs", f.display()))?;
    }
    Ok(format!("{} output files ({models} models) byte-identical across reruns", files.len()))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Check); 10] = [
        (1, "gradient oracle", criterion_gradients),
        (2, "loss identities", criterion_loss_identity),
        (3, "threshold law", criterion_thresholds),
        (4, "alignment law", criterion_alignment),
        (5, "metric oracles", criterion_metrics),
        (6, "selection oracle", criterion_selection),
        (7, "synthetic adaptation gain", criterion_gain),
        (8, "no-shift control", criterion_no_shift),
        (9, "augmentation laws", criterion_augmentation),
        (10, "reproducibility", criterion_reproducibility),
    ];
    let mut failed = 0;
    for (n, name, check) in criteria {
        match check() {
            Ok(detail) => println!("criterion {n} ({name}): PASS - {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL - {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
