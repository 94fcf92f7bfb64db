//! Trains the hybrid model on a small synthetic archive and writes the run
//! directory (curves, result, confusion matrix, best checkpoint).

use qfusion::config::RunConfig;
use qfusion::data::{load_archive, write_synthetic_archive};
use qfusion::models::{read_checkpoint, Model, ModelKind};
use qfusion::train::{fit, CHECKPOINT_FILE};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let archive = dir.path().join("synthetic.npz");
    write_synthetic_archive(&archive, [128, 32, 32], 0).unwrap();
    let data = load_archive(&archive).unwrap();

    let mut cfg = RunConfig {
        model: ModelKind::Hybrid,
        max_epochs: 12,
        patience: 6,
        ..RunConfig::default()
    };
    cfg.apply_text("seed = 4\nbatch = 16").unwrap();

    let out = dir.path().join("run");
    let mut model = Model::new(cfg.model, cfg.seed);
    let result = fit(&mut model, &data, &cfg, Some(&out), |e| {
        println!(
            "epoch {:>2}  loss {:.4}  train {:.3}  val {:.3}  lr {:.2e}",
            e.epoch, e.train_loss, e.train_acc, e.val_acc, e.lr
        );
    })
    .unwrap();
    println!(
        "best epoch {} (val {:.3}), test accuracy {:.3}",
        result.best_epoch, result.best_val_acc, result.test.accuracy
    );
    let restored = read_checkpoint(&out.join(CHECKPOINT_FILE)).unwrap();
    println!("checkpoint holds {} parameters", restored.param_count().total);
}
