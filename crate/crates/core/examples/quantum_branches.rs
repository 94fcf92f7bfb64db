//! What the two quantum branches emit for a few images, and the gradients
//! that reach their circuit angles.

use qfusion::models::{Model, ModelKind};
use qfusion::rng::{stream, Stream};
use qfusion::tensor::{Mode, Tape, Tensor};

fn main() {
    let mut model = Model::new(ModelKind::Hybrid, 7);
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::from_fn(&[2, 1, 28, 28], |i| ((i * 31 % 255) as f64 / 127.5) - 1.0));
    let out = model.forward(&mut tape, x, Mode::Eval, &mut stream(7, Stream::Dropout, u64::MAX)).unwrap();
    let (q1, q2) = out.quantum.unwrap();
    for (name, v, labels) in [("amplitude", q1, "Z0 Z1 Z2 Z3"), ("angle", q2, "Z0 Z1 Z2 Z3 X0 X1")] {
        println!("{name} branch ({labels}):");
        let t = tape.value(v);
        for row in t.data().chunks(t.shape()[1]) {
            println!("  {:+.4?}", row);
        }
    }

    let loss = tape.cross_entropy_smoothed(out.logits, &[0, 1], 0.1).unwrap();
    tape.backward(loss).unwrap();
    let grads = model.params().collect_grads(&tape, &out.bound);
    for (p, g) in model.params().params().iter().zip(&grads) {
        if p.name.ends_with(".circuit") {
            let head: Vec<String> = g[..4].iter().map(|v| format!("{v:+.2e}")).collect();
            println!("{}: [{}, ...]", p.name, head.join(", "));
        }
    }
}
