//! Metrics from aggregate confusion counts, with a consistency check against
//! reported figures.

use qfusion::stats::{check_reported, wilcoxon_one_sided, ConfusionMatrix};

fn main() {
    // aggregate test counts over five runs, benign as the positive class
    let rows = [
        ("hybrid", ConfusionMatrix::new(549, 21, 84, 126, 1), [0.8654, 0.8670, 0.9632, 0.9131]),
        ("classical", ConfusionMatrix::new(550, 20, 105, 105, 1), [0.8417, 0.8397, 0.9649, 0.8967]),
    ];
    for (name, cm, reported) in rows {
        let m = cm.metrics();
        println!(
            "{name:<9} acc {:.4}  prec {:.4}  rec {:.4}  f1 {:.4}",
            m.accuracy.unwrap(),
            m.precision.unwrap(),
            m.recall.unwrap(),
            m.f1.unwrap()
        );
        let keys = ["accuracy", "precision", "recall", "f1"];
        let pairs: Vec<(&str, f64)> = keys.into_iter().zip(reported).collect();
        for d in check_reported(&cm, &pairs, 0.0005) {
            println!("  {} reported {} but counts give {:.4}", d.metric, d.reported, d.computed);
        }
        let alt = cm.swap_positive().metrics();
        println!("  malignant as positive: prec {:.4}  rec {:.4}", alt.precision.unwrap(), alt.recall.unwrap());
    }
    let w = wilcoxon_one_sided(&[0.019, 0.032, 0.006, 0.013, 0.025]).unwrap();
    println!("five positive paired differences: W+ = {}, p = {}", w.w_plus, w.p);
}
