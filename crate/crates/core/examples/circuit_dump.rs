//! Text dump of the two branch circuits, its parse round trip and the
//! variational unitary.

use qfusion::layers::{amplitude_circuit, angle_circuit};
use qfusion::quantum::{dump_circuit, format_unitary, parse_circuit};

fn main() {
    let params: Vec<f64> = (0..16).map(|k| 0.1 * k as f64).collect();
    for spec in [amplitude_circuit(), angle_circuit()] {
        let text = dump_circuit(&spec, &params).unwrap();
        println!("{text}");
        let (parsed, parsed_params) = parse_circuit(&text).unwrap();
        assert_eq!(dump_circuit(&parsed, &parsed_params).unwrap(), text);
    }
    let u = amplitude_circuit().variational_unitary(&[0.0; 16]).unwrap();
    println!("variational unitary at θ = 0:\n{}", format_unitary(&u, 16));
}
