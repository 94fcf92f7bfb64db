//! Writes a synthetic archive with the BreastMNIST layout, loads it back and
//! shows the shuffled batch plan.

use qfusion::data::{batch_iter, load_archive, write_synthetic_archive, Split};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("synthetic.npz");
    write_synthetic_archive(&path, [40, 8, 12], 3).unwrap();
    let data = load_archive(&path).unwrap();
    for split in Split::ALL {
        let s = data.get(split);
        let benign = s.labels().iter().filter(|&&y| y == 1).count();
        println!("{:<5} {:>3} images, {benign} benign", split.name(), s.len());
    }
    let img = data.train.image(0);
    let (lo, hi) = img.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    println!("pixel range of train[0]: [{lo:.3}, {hi:.3}]");
    for epoch in 1..=2 {
        let batches = batch_iter(&data.train, 16, 3, epoch).unwrap();
        println!("epoch {epoch}: {} batches, first starts {:?}", batches.len(), &batches[0][..6]);
    }
}
