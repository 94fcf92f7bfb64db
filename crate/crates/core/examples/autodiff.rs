//! Reverse-mode autodiff on a tiny two-layer network, checked against a
//! central difference.

use qfusion::tensor::{Tape, Tensor};

fn loss(w1: &Tensor, w2: &Tensor, x: &Tensor) -> (f64, Vec<f64>) {
    let mut tape = Tape::new();
    let x = tape.constant(x.clone());
    let w1v = tape.param(w1.clone());
    let b1 = tape.constant(Tensor::zeros(&[3]));
    let w2v = tape.param(w2.clone());
    let b2 = tape.constant(Tensor::zeros(&[2]));
    let h = tape.linear(x, w1v, b1).unwrap();
    let h = tape.tanh(h);
    let logits = tape.linear(h, w2v, b2).unwrap();
    let l = tape.cross_entropy_smoothed(logits, &[1, 0], 0.1).unwrap();
    let value = tape.value(l).item();
    tape.backward(l).unwrap();
    (value, tape.grad(w1v).unwrap().to_vec())
}

fn main() {
    let w1 = Tensor::from_fn(&[3, 4], |i| (i as f64 * 0.37).sin());
    let w2 = Tensor::from_fn(&[2, 3], |i| (i as f64 * 0.91).cos());
    let x = Tensor::from_fn(&[2, 4], |i| i as f64 / 8.0 - 0.5);

    let (value, grad) = loss(&w1, &w2, &x);
    println!("loss = {value:.6}");
    let h = 1e-6;
    for i in [0, 5, 11] {
        let mut plus = w1.clone();
        plus.data_mut()[i] += h;
        let mut minus = w1.clone();
        minus.data_mut()[i] -= h;
        let fd = (loss(&plus, &w2, &x).0 - loss(&minus, &w2, &x).0) / (2.0 * h);
        println!("dL/dw1[{i:2}]  tape {:+.9}  finite-diff {fd:+.9}", grad[i]);
    }
}
