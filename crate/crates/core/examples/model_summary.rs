//! Parameter budget of both models and the shapes flowing through the hybrid
//! forward pass.

use qfusion::models::{Model, ModelKind};
use qfusion::rng::{stream, Stream};
use qfusion::tensor::{Mode, Tape, Tensor};

fn main() {
    for kind in [ModelKind::Hybrid, ModelKind::Classical] {
        let c = Model::new(kind, 0).param_count();
        println!(
            "{:<9} total {:>9}  backbone {:>7}  projection {:>5}  circuit {:>2}  fusion {:>4}  classifier {:>9}",
            kind.name(),
            c.total,
            c.backbone,
            c.projection,
            c.circuit,
            c.fusion,
            c.classifier
        );
    }

    let mut model = Model::new(ModelKind::Hybrid, 0);
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::from_fn(&[3, 1, 28, 28], |i| ((i % 97) as f64 / 48.0) - 1.0));
    let out = model.forward(&mut tape, x, Mode::Train, &mut stream(0, Stream::Dropout, 0)).unwrap();
    for (i, b) in out.blocks.iter().enumerate() {
        println!("block {} -> {:?}", i + 1, tape.value(*b).shape());
    }
    println!("features   {:?}", tape.value(out.features).shape());
    let (q1, q2) = out.quantum.unwrap();
    println!("amplitude  {:?}", tape.value(q1).shape());
    println!("angle      {:?}", tape.value(q2).shape());
    println!("logits     {:?}", tape.value(out.logits).shape());
}
