use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "X",
            Axis::Y => "Y",
            Axis::Z => "Z",
        }
    }
}

/// Concrete gate with every angle resolved.
///
/// Rotations follow `R_G(θ) = exp(-iθG/2)`, so `RY(π)|0⟩ = |1⟩` and
/// `⟨Z⟩ = cos θ` after `RY(θ)` on `|0⟩`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gate {
    Rotation { axis: Axis, qubit: usize, angle: f64 },
    H { qubit: usize },
    Cnot { control: usize, target: usize },
}

impl Gate {
    pub fn rx(qubit: usize, angle: f64) -> Self {
        Gate::Rotation { axis: Axis::X, qubit, angle }
    }

    pub fn ry(qubit: usize, angle: f64) -> Self {
        Gate::Rotation { axis: Axis::Y, qubit, angle }
    }

    pub fn rz(qubit: usize, angle: f64) -> Self {
        Gate::Rotation { axis: Axis::Z, qubit, angle }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Gate::Cnot { control, target }
    }

    /// 2x2 matrix (row-major) of a single-qubit gate; `None` for CNOT.
    pub fn single_qubit_matrix(&self) -> Option<[[Complex64; 2]; 2]> {
        match *self {
            Gate::Rotation { axis, angle, .. } => Some(rotation_matrix(axis, angle)),
            Gate::H { .. } => {
                let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                Some([[h, h], [h, -h]])
            }
            Gate::Cnot { .. } => None,
        }
    }

    pub fn qubits(&self) -> (usize, Option<usize>) {
        match *self {
            Gate::Rotation { qubit, .. } | Gate::H { qubit } => (qubit, None),
            Gate::Cnot { control, target } => (target, Some(control)),
        }
    }

    /// The inverse gate.
    pub fn adjoint(&self) -> Gate {
        match *self {
            Gate::Rotation { axis, qubit, angle } => Gate::Rotation {
                axis,
                qubit,
                angle: -angle,
            },
            other => other,
        }
    }

    pub(crate) fn validate(&self, n_qubits: usize) -> Result<()> {
        let (t, c) = self.qubits();
        for q in std::iter::once(t).chain(c) {
            if q >= n_qubits {
                return Err(Error::QubitIndex { index: q, n_qubits });
            }
        }
        if c == Some(t) {
            return Err(Error::InvalidArgument(format!("CNOT control and target are both qubit {t}")));
        }
        Ok(())
    }
}

pub(crate) fn rotation_matrix(axis: Axis, angle: f64) -> [[Complex64; 2]; 2] {
    let c = (angle / 2.0).cos();
    let s = (angle / 2.0).sin();
    let re = |v: f64| Complex64::new(v, 0.0);
    let im = |v: f64| Complex64::new(0.0, v);
    match axis {
        Axis::X => [[re(c), im(-s)], [im(-s), re(c)]],
        Axis::Y => [[re(c), re(-s)], [re(s), re(c)]],
        Axis::Z => [[Complex64::new(c, -s), re(0.0)], [re(0.0), Complex64::new(c, s)]],
    }
}

/// Where a rotation angle comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Angle {
    Fixed(f64),
    /// Slot in the circuit's trainable parameter vector.
    Param(usize),
}

/// Gate template inside a [`CircuitSpec`](super::CircuitSpec).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateOp {
    Rotation { axis: Axis, qubit: usize, angle: Angle },
    H { qubit: usize },
    Cnot { control: usize, target: usize },
}

impl GateOp {
    pub fn trainable(axis: Axis, qubit: usize, param_index: usize) -> Self {
        GateOp::Rotation {
            axis,
            qubit,
            angle: Angle::Param(param_index),
        }
    }

    pub fn is_trainable(&self) -> bool {
        self.param_index().is_some()
    }

    pub fn param_index(&self) -> Option<usize> {
        match *self {
            GateOp::Rotation {
                angle: Angle::Param(p),
                ..
            } => Some(p),
            _ => None,
        }
    }

    /// Resolves the template against a parameter vector. Panics on a slot
    /// outside `params`; specs are validated at construction.
    pub fn resolve(&self, params: &[f64]) -> Gate {
        self.resolve_with(|p| params[p])
    }

    pub(crate) fn resolve_with(&self, param: impl Fn(usize) -> f64) -> Gate {
        match *self {
            GateOp::Rotation { axis, qubit, angle } => Gate::Rotation {
                axis,
                qubit,
                angle: match angle {
                    Angle::Fixed(a) => a,
                    Angle::Param(p) => param(p),
                },
            },
            GateOp::H { qubit } => Gate::H { qubit },
            GateOp::Cnot { control, target } => Gate::Cnot { control, target },
        }
    }
}
