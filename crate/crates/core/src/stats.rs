//! Classification metrics and the paired-run statistics used to compare two
//! models: an exact one-sided Wilcoxon signed-rank test and Cohen's d.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Differences (and gaps between |differences|) at or below this are treated
/// as exact zeros/ties, absorbing float noise in accuracy subtraction.
pub const TIE_TOLERANCE: f64 = 1e-12;
pub const MAX_WILCOXON_N: usize = 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub positive_class: usize,
}

/// Undefined metrics (zero denominators) are `None`, never 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fn_: u64, fp: u64, tn: u64, positive_class: usize) -> Self {
        Self {
            tp,
            fp,
            tn,
            fn_,
            positive_class,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// The same decisions viewed with the other class as positive.
    pub fn swap_positive(&self) -> Self {
        Self {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
            positive_class: 1 - self.positive_class,
        }
    }

    pub fn metrics(&self) -> Metrics {
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        Metrics {
            accuracy: ratio(self.tp + self.tn, self.total()),
            precision,
            recall,
            f1,
        }
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        debug_assert_eq!(self.positive_class, o.positive_class);
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
            positive_class: self.positive_class,
        }
    }
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Metrics {
    cm.metrics()
}

pub fn confusion_from_predictions(labels: &[usize], predictions: &[usize], positive_class: usize) -> Result<ConfusionMatrix> {
    if labels.len() != predictions.len() {
        return Err(Error::LengthMismatch(labels.len(), predictions.len()));
    }
    let mut cm = ConfusionMatrix {
        positive_class,
        ..Default::default()
    };
    for (&y, &p) in labels.iter().zip(predictions) {
        match (y == positive_class, p == positive_class) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fn_ += 1,
            (false, true) => cm.fp += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wilcoxon {
    /// `P(W+ ≥ observed)` under the symmetric null.
    pub p: f64,
    pub w_plus: f64,
    /// Non-zero differences that were ranked.
    pub n: usize,
    pub zeros_dropped: usize,
    pub has_ties: bool,
    /// Every difference was zero; `p` is set to 1.
    pub degenerate: bool,
}

/// Average ranks of `|d|`, doubled so they are integers.
fn doubled_ranks(abs: &[f64]) -> (Vec<u64>, bool) {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0; abs.len()];
    let mut ties = false;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && abs[order[j]] - abs[order[i]] <= TIE_TOLERANCE {
            j += 1;
        }
        ties |= j - i > 1;
        // ranks i+1..=j averaged, times two
        let twice = (i + 1 + j) as u64;
        for &k in &order[i..j] {
            ranks[k] = twice;
        }
        i = j;
    }
    (ranks, ties)
}

/// Exact one-sided signed-rank test of "differences tend to be positive".
///
/// Zeros are dropped, tied magnitudes share average ranks, and the null
/// distribution of W+ is counted over all `2^n` sign assignments.
pub fn wilcoxon_one_sided(diffs: &[f64]) -> Result<Wilcoxon> {
    if let Some(bad) = diffs.iter().find(|d| !d.is_finite()) {
        return Err(Error::Stats(format!("non-finite difference {bad}")));
    }
    let kept: Vec<f64> = diffs.iter().copied().filter(|d| d.abs() > TIE_TOLERANCE).collect();
    let zeros_dropped = diffs.len() - kept.len();
    if kept.is_empty() {
        return Ok(Wilcoxon {
            p: 1.0,
            w_plus: 0.0,
            n: 0,
            zeros_dropped,
            has_ties: false,
            degenerate: true,
        });
    }
    if kept.len() > MAX_WILCOXON_N {
        return Err(Error::Stats(format!(
            "{} non-zero differences; exact enumeration supports at most {MAX_WILCOXON_N}",
            kept.len()
        )));
    }
    let abs: Vec<f64> = kept.iter().map(|d| d.abs()).collect();
    let (ranks, has_ties) = doubled_ranks(&abs);
    let observed: u64 = kept.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();

    // ways[s] = number of sign assignments whose doubled W+ equals s
    let max: u64 = ranks.iter().sum();
    let mut ways = vec![0u64; max as usize + 1];
    ways[0] = 1;
    for &r in &ranks {
        for s in (r as usize..=max as usize).rev() {
            ways[s] += ways[s - r as usize];
        }
    }
    let tail: u64 = ways[observed as usize..].iter().sum();
    Ok(Wilcoxon {
        p: tail as f64 / (1u64 << kept.len()) as f64,
        w_plus: observed as f64 / 2.0,
        n: kept.len(),
        zeros_dropped,
        has_ties,
        degenerate: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    /// `None` when the pooled variance is zero but the means differ: the
    /// effect is unbounded and has no numeric value.
    pub d: Option<f64>,
    pub zero_variance: bool,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample (n − 1) variance.
fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

pub fn mean_std(x: &[f64]) -> (f64, Option<f64>) {
    (mean(x), (x.len() >= 2).then(|| variance(x).sqrt()))
}

/// Standardized mean difference `(mean_a − mean_b) / s_pooled`.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<EffectSize> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Stats("Cohen's d needs at least two values per group".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = (((na - 1.0) * variance(a) + (nb - 1.0) * variance(b)) / (na + nb - 2.0)).sqrt();
    let diff = mean(a) - mean(b);
    if pooled == 0.0 {
        return Ok(EffectSize {
            d: (diff == 0.0).then_some(0.0),
            zero_variance: true,
        });
    }
    Ok(EffectSize {
        d: Some(diff / pooled),
        zero_variance: false,
    })
}

/// A published figure that disagrees with the value recomputed from counts.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Discrepancy {
    pub metric: String,
    pub reported: f64,
    pub computed: f64,
    pub tolerance: f64,
}

/// Compares reported metrics against `cm` and lists every metric whose
/// recomputed value falls outside `tolerance`.
pub fn check_reported(cm: &ConfusionMatrix, reported: &[(&str, f64)], tolerance: f64) -> Vec<Discrepancy> {
    let m = cm.metrics();
    reported
        .iter()
        .filter_map(|&(name, value)| {
            let computed = match name {
                "accuracy" => m.accuracy,
                "precision" => m.precision,
                "recall" => m.recall,
                "f1" => m.f1,
                _ => None,
            }?;
            ((computed - value).abs() > tolerance).then(|| Discrepancy {
                metric: name.to_string(),
                reported: value,
                computed,
                tolerance,
            })
        })
        .collect()
}
