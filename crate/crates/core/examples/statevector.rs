//! Statevector basics: a Bell pair, expectation values, and the adjoint
//! gradient of a small variational circuit next to parameter shift.

use std::f64::consts::FRAC_PI_2;

use qfusion::quantum::{ring_layers, CircuitSpec, Embedding, Gate, Observable, StateVector};

fn main() {
    // RY(π/2) on qubit 0 then CNOT 0→1: (|00⟩ + |11⟩)/√2
    let mut bell = StateVector::zero(2).unwrap();
    bell.apply(&Gate::ry(0, FRAC_PI_2)).unwrap();
    bell.apply(&Gate::cnot(0, 1)).unwrap();
    for (i, a) in bell.amplitudes().iter().enumerate() {
        println!("|{i:02b}⟩  {:+.4}{:+.4}i", a.re, a.im);
    }
    println!("⟨Z0⟩ = {:+.4}  ⟨X0⟩ = {:+.4}", bell.expval(Observable::Z(0)).unwrap(), bell.expval(Observable::X(0)).unwrap());

    let observables = (0..3).map(Observable::Z).collect();
    let spec = CircuitSpec::new(3, Embedding::Angle, ring_layers(3, 2), observables).unwrap();
    let params: Vec<f64> = (0..spec.num_params()).map(|k| 0.3 * k as f64 - 1.0).collect();
    let inputs = [0.2, -0.4, 0.9];
    println!("\nangle-embedded ring circuit, {} parameters", spec.num_params());
    println!("outputs {:?}", spec.run(&inputs, &params).unwrap());

    let upstream = vec![1.0; spec.output_arity()];
    let adjoint = spec.gradient(&inputs, &params, &upstream).unwrap();
    let shift = spec.parameter_shift_gradient(&inputs, &params, &upstream).unwrap();
    for (k, (a, s)) in adjoint.params.iter().zip(&shift).enumerate() {
        println!("θ{k:<2} adjoint {a:+.10}  shift {s:+.10}");
    }
}
