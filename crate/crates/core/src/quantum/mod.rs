//! Exact statevector simulation for small registers.
//!
//! Conventions: rotations are `R_G(θ) = exp(-iθG/2)`; qubit 0 is the least
//! significant bit of a basis index. Gradients come from the adjoint
//! (reverse-mode) sweep in [`CircuitSpec::gradient`]; the parameter-shift
//! rule in [`CircuitSpec::parameter_shift_gradient`] is kept as an
//! independent route.

mod circuit;
mod dump;
mod gate;
mod state;

pub use circuit::{ring_layers, CircuitGradient, CircuitSpec, Embedding};
pub use dump::{dump_circuit, format_unitary, parse_circuit};
pub use gate::{Angle, Axis, Gate, GateOp};
pub use state::{Observable, StateVector, AMPLITUDE_NORM_FLOOR, MAX_QUBITS};
