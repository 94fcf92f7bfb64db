//! Paired comparison of two sets of runs, aligned by seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::{cohens_d, mean_std, wilcoxon_one_sided, ConfusionMatrix, EffectSize, Metrics, Wilcoxon};
use crate::train::{RunResult, RESULT_FILE};

pub const REPORT_FILE: &str = "report.json";
pub const ALPHA: f64 = 0.05;

/// Mean and sample standard deviation over runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: Option<f64>,
}

impl Summary {
    fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        let (mean, std) = mean_std(&v);
        Some(Self { mean, std })
    }
}

/// One row of the results table, averaged over a model's runs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub model: String,
    pub runs: usize,
    pub train_acc: Option<Summary>,
    pub val_acc: Option<Summary>,
    pub train_loss: Option<Summary>,
    pub val_loss: Option<Summary>,
    pub test_acc: Option<Summary>,
    pub recall: Option<Summary>,
    pub precision: Option<Summary>,
    pub f1: Option<Summary>,
    /// Confusion counts summed over runs, with the metrics they imply.
    pub aggregate: ConfusionMatrix,
    pub aggregate_metrics: Metrics,
    /// The same aggregate with the other class as positive.
    pub aggregate_alternate: ConfusionMatrix,
    pub aggregate_alternate_metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub runs_a: PathBuf,
    pub runs_b: PathBuf,
    pub seeds: Vec<u64>,
    pub accuracy_a: Vec<f64>,
    pub accuracy_b: Vec<f64>,
    /// `a − b` per seed.
    pub differences: Vec<f64>,
    pub wilcoxon: Wilcoxon,
    pub cohens_d: Option<EffectSize>,
    pub verdict: String,
    pub table: [TableRow; 2],
}

/// Every run result under `dir`: `dir/result.json` itself, or one per
/// immediate subdirectory, ordered by seed.
pub fn load_runs(dir: &Path) -> Result<Vec<RunResult>> {
    let direct = dir.join(RESULT_FILE);
    let mut runs = if direct.is_file() {
        vec![RunResult::load(&direct)?]
    } else {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::Load {
            path: dir.to_path_buf(),
            msg: e.to_string(),
        })?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path().join(RESULT_FILE)))
            .filter(|p| p.is_file())
            .collect();
        paths.sort();
        paths.iter().map(|p| RunResult::load(p)).collect::<Result<Vec<_>>>()?
    };
    if runs.is_empty() {
        return Err(Error::Load {
            path: dir.to_path_buf(),
            msg: format!("no {RESULT_FILE} found"),
        });
    }
    runs.sort_by_key(|r| r.seed);
    if let Some(w) = runs.windows(2).find(|w| w[0].seed == w[1].seed) {
        return Err(Error::SeedMismatch(format!("{} holds two runs with seed {}", dir.display(), w[0].seed)));
    }
    Ok(runs)
}

fn table_row(runs: &[RunResult]) -> TableRow {
    let at_best = |f: fn(&crate::train::EpochRecord) -> f64| {
        Summary::of(runs.iter().filter_map(|r| r.curves.get(r.best_epoch.wrapping_sub(1)).map(f)))
    };
    let metric = |f: fn(&Metrics) -> Option<f64>| Summary::of(runs.iter().filter_map(|r| f(&r.test.primary.metrics)));
    let aggregate = runs
        .iter()
        .map(|r| r.test.primary.confusion)
        .reduce(|a, b| a + b)
        .unwrap_or_default();
    let alternate = aggregate.swap_positive();
    TableRow {
        model: runs.first().map_or_else(String::new, |r| r.model.clone()),
        runs: runs.len(),
        train_acc: at_best(|e| e.train_acc),
        val_acc: at_best(|e| e.val_acc),
        train_loss: at_best(|e| e.train_loss),
        val_loss: at_best(|e| e.val_loss),
        test_acc: Summary::of(runs.iter().map(|r| r.test.accuracy)),
        recall: metric(|m| m.recall),
        precision: metric(|m| m.precision),
        f1: metric(|m| m.f1),
        aggregate_metrics: aggregate.metrics(),
        aggregate,
        aggregate_alternate_metrics: alternate.metrics(),
        aggregate_alternate: alternate,
    }
}

pub fn verdict(p: f64) -> &'static str {
    if p < ALPHA {
        "reject H0 at 0.05"
    } else {
        "fail to reject H0 at 0.05"
    }
}

/// Pairs the test accuracies of two run sets by seed and tests whether `a`
/// outperforms `b`.
pub fn compare_run_sets(dir_a: &Path, a: &[RunResult], dir_b: &Path, b: &[RunResult]) -> Result<ComparisonReport> {
    let seeds_a: Vec<u64> = a.iter().map(|r| r.seed).collect();
    let seeds_b: Vec<u64> = b.iter().map(|r| r.seed).collect();
    if seeds_a != seeds_b {
        return Err(Error::SeedMismatch(format!("seeds {seeds_a:?} vs {seeds_b:?}")));
    }
    let accuracy_a: Vec<f64> = a.iter().map(|r| r.test.accuracy).collect();
    let accuracy_b: Vec<f64> = b.iter().map(|r| r.test.accuracy).collect();
    let differences: Vec<f64> = accuracy_a.iter().zip(&accuracy_b).map(|(x, y)| x - y).collect();
    let wilcoxon = wilcoxon_one_sided(&differences)?;
    let cohens_d = if a.len() >= 2 {
        Some(cohens_d(&accuracy_a, &accuracy_b)?)
    } else {
        None
    };
    Ok(ComparisonReport {
        runs_a: dir_a.to_path_buf(),
        runs_b: dir_b.to_path_buf(),
        seeds: seeds_a,
        accuracy_a,
        accuracy_b,
        differences,
        verdict: verdict(wilcoxon.p).to_string(),
        wilcoxon,
        cohens_d,
        table: [table_row(a), table_row(b)],
    })
}

pub fn compare_runs(dir_a: &Path, dir_b: &Path) -> Result<ComparisonReport> {
    compare_run_sets(dir_a, &load_runs(dir_a)?, dir_b, &load_runs(dir_b)?)
}

fn cell(s: &Option<Summary>) -> String {
    match s {
        Some(Summary { mean, std: Some(sd) }) => format!("{mean:.4}±{sd:.4}"),
        Some(Summary { mean, std: None }) => format!("{mean:.4}"),
        None => "n/a".into(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |v| format!("{v:.4}"))
}

/// Human-readable summary: the results table, the test and the verdict.
pub fn render(report: &ComparisonReport) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:<10} {:>15} {:>15} {:>15} {:>15} {:>15} {:>15} {:>15} {:>15}",
        "model", "train_acc", "val_acc", "train_loss", "val_loss", "test_acc", "recall", "precision", "f1"
    )
    .unwrap();
    for row in &report.table {
        writeln!(
            s,
            "{:<10} {:>15} {:>15} {:>15} {:>15} {:>15} {:>15} {:>15} {:>15}",
            row.model,
            cell(&row.train_acc),
            cell(&row.val_acc),
            cell(&row.train_loss),
            cell(&row.val_loss),
            cell(&row.test_acc),
            cell(&row.recall),
            cell(&row.precision),
            cell(&row.f1)
        )
        .unwrap();
    }
    for row in &report.table {
        let c = &row.aggregate;
        let m = &row.aggregate_metrics;
        writeln!(
            s,
            "{} aggregate over {} runs (positive={}): TP={} FN={} FP={} TN={} accuracy={} precision={} recall={} f1={}",
            row.model,
            row.runs,
            if c.positive_class == 1 { "benign" } else { "malignant" },
            c.tp,
            c.fn_,
            c.fp,
            c.tn,
            opt(m.accuracy),
            opt(m.precision),
            opt(m.recall),
            opt(m.f1)
        )
        .unwrap();
    }
    let w = &report.wilcoxon;
    writeln!(
        s,
        "wilcoxon one-sided: n={} W+={} p={:.5}{}{}",
        w.n,
        w.w_plus,
        w.p,
        if w.zeros_dropped > 0 { format!(" ({} zero differences dropped)", w.zeros_dropped) } else { String::new() },
        if w.degenerate { " [degenerate: all differences zero]" } else { "" }
    )
    .unwrap();
    match report.cohens_d {
        Some(EffectSize { d: Some(d), .. }) => writeln!(s, "cohen's d: {d:.4}").unwrap(),
        Some(EffectSize { d: None, .. }) => writeln!(s, "cohen's d: infinite (zero pooled variance)").unwrap(),
        None => writeln!(s, "cohen's d: n/a (fewer than two runs)").unwrap(),
    }
    writeln!(s, "verdict: {}", report.verdict).unwrap();
    s
}
