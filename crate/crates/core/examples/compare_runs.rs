//! Paired comparison of hybrid and classical runs over five seeds:
//! one-sided Wilcoxon signed-rank test and Cohen's d.

use qfusion::compare::{compare_runs, render};
use qfusion::config::RunConfig;
use qfusion::data::{load_archive, write_synthetic_archive};
use qfusion::models::{Model, ModelKind};
use qfusion::train::fit;

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let archive = dir.path().join("synthetic.npz");
    write_synthetic_archive(&archive, [48, 16, 32], 1).unwrap();
    let data = load_archive(&archive).unwrap();

    for kind in [ModelKind::Hybrid, ModelKind::Classical] {
        for seed in 0..5 {
            let cfg = RunConfig {
                model: kind,
                seed,
                max_epochs: 4,
                batch: 8,
                ..RunConfig::default()
            };
            let out = dir.path().join(kind.name()).join(format!("seed-{seed}"));
            fit(&mut Model::new(kind, seed), &data, &cfg, Some(&out), |_| {}).unwrap();
        }
    }
    let report = compare_runs(&dir.path().join("hybrid"), &dir.path().join("classical")).unwrap();
    print!("{}", render(&report));
}
