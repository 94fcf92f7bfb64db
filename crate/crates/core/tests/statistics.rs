use std::collections::BTreeMap;

use proptest::prelude::*;
use qfusion::compare::{compare_runs, render};
use qfusion::models::{Model, ModelKind};
use qfusion::stats::{cohens_d, confusion_from_predictions, wilcoxon_one_sided, ConfusionMatrix};
use qfusion::train::{ClassView, EpochRecord, RunResult, TestReport, RESULT_FILE};
use qfusion::Error;

/// Average ranks of |d| computed by direct counting.
fn ranks(abs: &[f64]) -> Vec<f64> {
    abs.iter()
        .map(|&a| {
            let below = abs.iter().filter(|&&b| b < a).count() as f64;
            let equal = abs.iter().filter(|&&b| b == a).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// P(W+ ≥ observed) by listing all 2^n sign assignments.
fn brute_p(diffs: &[f64]) -> f64 {
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let r = ranks(&abs);
    let observed: f64 = diffs.iter().zip(&r).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let n = diffs.len();
    let hits = (0u32..1 << n)
        .filter(|mask| {
            let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| r[i]).sum();
            w >= observed - 1e-9
        })
        .count();
    hits as f64 / (1u64 << n) as f64
}

#[test]
fn wilcoxon_matches_brute_force_for_every_sign_pattern() {
    for n in 1..=10usize {
        let magnitude_sets: Vec<Vec<f64>> = vec![
            (1..=n).map(|k| k as f64 * 0.01).collect(),
            // pairs of tied magnitudes
            (1..=n).map(|k| (k.div_ceil(2)) as f64 * 0.01).collect(),
        ];
        for mags in magnitude_sets {
            for mask in 0u32..1 << n {
                let diffs: Vec<f64> = mags
                    .iter()
                    .enumerate()
                    .map(|(i, m)| if mask >> i & 1 == 1 { *m } else { -*m })
                    .collect();
                let got = wilcoxon_one_sided(&diffs).unwrap().p;
                assert_eq!(got, brute_p(&diffs), "{diffs:?}");
            }
        }
    }
}

#[test]
fn wilcoxon_headline_values() {
    let w = wilcoxon_one_sided(&[0.02, 0.01, 0.03, 0.015, 0.025]).unwrap();
    assert_eq!(w.p, 0.03125);
    assert_eq!(w.p, 1.0 / 32.0);
    assert_eq!(wilcoxon_one_sided(&[0.4]).unwrap().p, 0.5);
    assert_eq!(wilcoxon_one_sided(&[1.0, -1.0]).unwrap().p, 0.75);
    let z = wilcoxon_one_sided(&[0.1, 0.0, 0.2]).unwrap();
    assert_eq!((z.n, z.zeros_dropped), (2, 1));
}

proptest! {
    #[test]
    fn wilcoxon_p_in_unit_interval(diffs in prop::collection::vec(-1.0f64..1.0, 1..15)) {
        let p = wilcoxon_one_sided(&diffs).unwrap().p;
        prop_assert!(p > 0.0 && p <= 1.0);
    }

    #[test]
    fn cohens_d_is_antisymmetric(a in prop::collection::vec(0.0f64..1.0, 2..8), b in prop::collection::vec(0.0f64..1.0, 2..8)) {
        let ab = cohens_d(&a, &b).unwrap().d;
        let ba = cohens_d(&b, &a).unwrap().d;
        if let (Some(x), Some(y)) = (ab, ba) {
            prop_assert!((x + y).abs() < 1e-12);
        }
    }

    #[test]
    fn f1_is_the_harmonic_mean_and_swapping_keeps_accuracy(
        tp in 0u64..500, fn_ in 0u64..500, fp in 0u64..500, tn in 0u64..500,
    ) {
        let cm = ConfusionMatrix::new(tp, fn_, fp, tn, 1);
        let m = cm.metrics();
        if let (Some(p), Some(r), Some(f1)) = (m.precision, m.recall, m.f1) {
            prop_assert!((f1 - 2.0 / (1.0 / p + 1.0 / r)).abs() < 1e-12);
        }
        let s = cm.swap_positive();
        prop_assert_eq!((s.tp, s.tn, s.fp, s.fn_), (cm.tn, cm.tp, cm.fn_, cm.fp));
        prop_assert_eq!(s.metrics().accuracy, m.accuracy);
    }
}

#[test]
fn counts_from_predictions_sum_to_samples() {
    let labels: Vec<usize> = (0..156).map(|i| (i % 3 != 0) as usize).collect();
    let preds: Vec<usize> = (0..156).map(|i| (i % 5 != 0) as usize).collect();
    let cm = confusion_from_predictions(&labels, &preds, 1).unwrap();
    assert_eq!(cm.total(), 156);
}

fn fake_run(model: &str, seed: u64, labels: &[usize], predictions: &[usize]) -> RunResult {
    let accuracy = labels.iter().zip(predictions).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64;
    let record = EpochRecord {
        epoch: 1,
        train_loss: 0.5,
        train_acc: 0.8,
        val_loss: 0.4,
        val_acc: 0.85,
        lr: 1e-3,
    };
    RunResult {
        model: model.into(),
        seed,
        epochs_run: 1,
        best_epoch: 1,
        best_val_acc: 0.85,
        stopped_early: false,
        steps_per_epoch: 35,
        total_steps: 2800,
        param_count: Model::new(ModelKind::Classical, 0).param_count(),
        test: TestReport {
            samples: labels.len(),
            loss: 0.4,
            accuracy,
            primary: ClassView::new(labels, predictions, 1).unwrap(),
            alternate: ClassView::new(labels, predictions, 0).unwrap(),
            labels: labels.to_vec(),
            predictions: predictions.to_vec(),
        },
        config: BTreeMap::new(),
        curves: vec![record],
    }
}

fn write_runs(dir: &std::path::Path, model: &str, seeds: &[u64], wrong: impl Fn(u64) -> usize) {
    // 156 test samples: 114 benign then 42 malignant, as in one BreastMNIST test split
    let labels: Vec<usize> = (0..156).map(|i| (i < 114) as usize).collect();
    for &seed in seeds {
        let mut preds = labels.clone();
        for p in preds.iter_mut().take(wrong(seed)) {
            *p = 1 - *p;
        }
        let run = fake_run(model, seed, &labels, &preds);
        let sub = dir.join(format!("seed-{seed}"));
        std::fs::create_dir_all(&sub).unwrap();
        std::fs::write(sub.join(RESULT_FILE), serde_json::to_string(&run).unwrap()).unwrap();
    }
}

#[test]
fn compare_all_wins_rejects_and_identical_sets_do_not() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let seeds = [0, 1, 2, 3, 4];
    write_runs(&a, "hybrid", &seeds, |s| 10 + s as usize);
    write_runs(&b, "classical", &seeds, |s| 20 + 2 * s as usize);
    let report = compare_runs(&a, &b).unwrap();
    assert_eq!(report.wilcoxon.p, 0.03125);
    assert_eq!(report.verdict, "reject H0 at 0.05");
    assert_eq!(report.table[0].aggregate.total(), 780);
    assert!(render(&report).contains("p=0.03125"));

    let same = compare_runs(&a, &a).unwrap();
    assert!(same.wilcoxon.degenerate);
    assert_eq!(same.wilcoxon.p, 1.0);
    assert_eq!(same.cohens_d.unwrap().d, Some(0.0));
    assert_eq!(same.verdict, "fail to reject H0 at 0.05");
}

#[test]
fn compare_rejects_mismatched_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    write_runs(&a, "hybrid", &[0, 1, 2], |_| 3);
    write_runs(&b, "classical", &[0, 1, 5], |_| 3);
    assert!(matches!(compare_runs(&a, &b), Err(Error::SeedMismatch(_))));
}
