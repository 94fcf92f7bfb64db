use std::f64::consts::PI;

use num_complex::Complex64;

use super::gate::{Axis, Gate};
use crate::error::{Error, Result};

pub const MAX_QUBITS: usize = 12;
/// Feature vectors at or below this L2 norm cannot be amplitude-embedded.
pub const AMPLITUDE_NORM_FLOOR: f64 = 1e-9;
const ANGLE_RANGE_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Observable {
    Z(usize),
    X(usize),
}

impl Observable {
    pub fn qubit(self) -> usize {
        match self {
            Observable::Z(q) | Observable::X(q) => q,
        }
    }
}

impl std::fmt::Display for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Observable::Z(q) => write!(f, "Z{q}"),
            Observable::X(q) => write!(f, "X{q}"),
        }
    }
}

/// Pure state of `n` qubits. Bit `j` of a basis index is qubit `j`
/// (qubit 0 is the least significant bit).
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

fn check_qubit_count(n: usize) -> Result<()> {
    if !(1..=MAX_QUBITS).contains(&n) {
        return Err(Error::QubitCount(n));
    }
    Ok(())
}

impl StateVector {
    /// `|0…0⟩`.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        check_qubit_count(n_qubits)?;
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n_qubits, amps })
    }

    /// Wraps raw amplitudes without renormalizing them.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if !len.is_power_of_two() {
            return Err(Error::Shape(format!("{len} amplitudes is not a power of two")));
        }
        let n_qubits = len.trailing_zeros() as usize;
        check_qubit_count(n_qubits)?;
        Ok(Self { n_qubits, amps })
    }

    /// Amplitude encoding: the L2-normalized features become the (real)
    /// amplitudes of a `log2(len)`-qubit state.
    pub fn amplitude_embed(features: &[f64]) -> Result<Self> {
        let norm = features.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > AMPLITUDE_NORM_FLOOR) || !norm.is_finite() {
            return Err(Error::NearZeroNorm { norm });
        }
        Self::from_amplitudes(features.iter().map(|v| Complex64::new(v / norm, 0.0)).collect())
    }

    /// Angle encoding: qubit `j` is rotated by `RY(π·x_j)` from `|0⟩`.
    pub fn angle_embed(features: &[f64]) -> Result<Self> {
        let mut state = Self::zero(features.len())?;
        for (j, &x) in features.iter().enumerate() {
            if !(x.abs() <= 1.0 + ANGLE_RANGE_SLACK) {
                return Err(Error::FeatureOutOfRange { index: j, value: x });
            }
            state.apply(&Gate::ry(j, x * PI))?;
        }
        Ok(state)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    /// Applies a gate in place.
    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.n_qubits)?;
        match *gate {
            Gate::Cnot { control, target } => {
                let (cm, tm) = (1usize << control, 1usize << target);
                for i in 0..self.amps.len() {
                    if i & cm != 0 && i & tm == 0 {
                        self.amps.swap(i, i | tm);
                    }
                }
            }
            _ => {
                let m = gate.single_qubit_matrix().expect("single-qubit gate");
                let (q, _) = gate.qubits();
                self.apply_2x2(q, m);
            }
        }
        Ok(())
    }

    /// Returns the state after `gate`, leaving `self` untouched.
    pub fn apply_gate(&self, gate: &Gate) -> Result<Self> {
        let mut next = self.clone();
        next.apply(gate)?;
        Ok(next)
    }

    fn apply_2x2(&mut self, q: usize, m: [[Complex64; 2]; 2]) {
        let mask = 1usize << q;
        for i0 in 0..self.amps.len() {
            if i0 & mask != 0 {
                continue;
            }
            let i1 = i0 | mask;
            let (a0, a1) = (self.amps[i0], self.amps[i1]);
            self.amps[i0] = m[0][0] * a0 + m[0][1] * a1;
            self.amps[i1] = m[1][0] * a0 + m[1][1] * a1;
        }
    }

    /// Multiplies by the Pauli matrix `axis` on qubit `q` (not a rotation).
    pub(crate) fn apply_pauli(&mut self, axis: Axis, q: usize) {
        let mask = 1usize << q;
        let i = Complex64::new(0.0, 1.0);
        for i0 in 0..self.amps.len() {
            if i0 & mask != 0 {
                continue;
            }
            let i1 = i0 | mask;
            let (a0, a1) = (self.amps[i0], self.amps[i1]);
            match axis {
                Axis::X => {
                    self.amps[i0] = a1;
                    self.amps[i1] = a0;
                }
                Axis::Y => {
                    self.amps[i0] = -i * a1;
                    self.amps[i1] = i * a0;
                }
                Axis::Z => self.amps[i1] = -a1,
            }
        }
    }

    pub(crate) fn scale(&mut self, k: Complex64) {
        self.amps.iter_mut().for_each(|a| *a *= k);
    }

    pub(crate) fn add_scaled(&mut self, other: &StateVector, k: f64) {
        for (a, b) in self.amps.iter_mut().zip(&other.amps) {
            *a += b * k;
        }
    }

    /// `O|ψ⟩` for a Pauli observable.
    pub fn apply_observable(&self, obs: Observable) -> Result<Self> {
        self.check_qubit(obs.qubit())?;
        let mut out = self.clone();
        match obs {
            Observable::Z(q) => out.apply_pauli(Axis::Z, q),
            Observable::X(q) => out.apply_pauli(Axis::X, q),
        }
        Ok(out)
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.n_qubits {
            return Err(Error::QubitIndex {
                index: q,
                n_qubits: self.n_qubits,
            });
        }
        Ok(())
    }

    /// `⟨ψ|O|ψ⟩`.
    pub fn expval(&self, obs: Observable) -> Result<f64> {
        self.check_qubit(obs.qubit())?;
        let value = match obs {
            Observable::Z(q) => {
                let mask = 1usize << q;
                self.amps
                    .iter()
                    .enumerate()
                    .map(|(i, a)| if i & mask == 0 { a.norm_sqr() } else { -a.norm_sqr() })
                    .sum()
            }
            Observable::X(q) => {
                let mask = 1usize << q;
                (0..self.amps.len())
                    .filter(|i| i & mask == 0)
                    .map(|i0| 2.0 * (self.amps[i0].conj() * self.amps[i0 | mask]).re)
                    .sum()
            }
        };
        Ok(value)
    }
}
