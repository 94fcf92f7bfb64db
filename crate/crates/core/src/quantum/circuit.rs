use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use super::gate::{Axis, Gate, GateOp};
use super::state::{Observable, StateVector, MAX_QUBITS};
use crate::error::{Error, Result};

/// How classical inputs are loaded into the register.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Embedding {
    /// `2^n` features, L2-normalized into the amplitudes.
    Amplitude,
    /// `n` features in `[-1, 1]`, applied as `RY(π·x_j)` on qubit `j`.
    Angle,
}

impl Embedding {
    pub fn name(self) -> &'static str {
        match self {
            Embedding::Amplitude => "amplitude",
            Embedding::Angle => "angle",
        }
    }
}

/// Embedding, variational gate sequence and measured observables.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitSpec {
    n_qubits: usize,
    embedding: Embedding,
    gates: Vec<GateOp>,
    observables: Vec<Observable>,
    n_params: usize,
}

/// Gradients of `Σ_k upstream_k · ⟨O_k⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitGradient {
    pub params: Vec<f64>,
    pub inputs: Vec<f64>,
}

impl CircuitSpec {
    pub fn new(
        n_qubits: usize,
        embedding: Embedding,
        gates: Vec<GateOp>,
        observables: Vec<Observable>,
    ) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&n_qubits) {
            return Err(Error::QubitCount(n_qubits));
        }
        if observables.is_empty() {
            return Err(Error::InvalidArgument("circuit has no observables".into()));
        }
        for obs in &observables {
            if obs.qubit() >= n_qubits {
                return Err(Error::QubitIndex {
                    index: obs.qubit(),
                    n_qubits,
                });
            }
        }
        let mut seen = Vec::new();
        for op in &gates {
            op.resolve_with(|_| 0.0).validate(n_qubits)?;
            if let Some(p) = op.param_index() {
                if seen.len() <= p {
                    seen.resize(p + 1, false);
                }
                seen[p] = true;
            }
        }
        if let Some(gap) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!(
                "parameter indices must cover 0..{} contiguously; slot {gap} is unused",
                seen.len()
            )));
        }
        Ok(Self {
            n_qubits,
            embedding,
            gates,
            observables,
            n_params: seen.len(),
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn embedding(&self) -> Embedding {
        self.embedding
    }

    pub fn gates(&self) -> &[GateOp] {
        &self.gates
    }

    pub fn observables(&self) -> &[Observable] {
        &self.observables
    }

    pub fn num_params(&self) -> usize {
        self.n_params
    }

    pub fn input_arity(&self) -> usize {
        match self.embedding {
            Embedding::Amplitude => 1 << self.n_qubits,
            Embedding::Angle => self.n_qubits,
        }
    }

    pub fn output_arity(&self) -> usize {
        self.observables.len()
    }

    fn check_arity(&self, inputs: &[f64], params: &[f64]) -> Result<()> {
        if inputs.len() != self.input_arity() {
            return Err(Error::Arity {
                what: "circuit inputs",
                expected: self.input_arity(),
                got: inputs.len(),
            });
        }
        if params.len() != self.n_params {
            return Err(Error::Arity {
                what: "circuit parameters",
                expected: self.n_params,
                got: params.len(),
            });
        }
        Ok(())
    }

    /// State after the embedding only.
    pub fn embed(&self, inputs: &[f64]) -> Result<StateVector> {
        match self.embedding {
            Embedding::Amplitude => StateVector::amplitude_embed(inputs),
            Embedding::Angle => StateVector::angle_embed(inputs),
        }
    }

    /// State after embedding and every variational gate.
    pub fn final_state(&self, inputs: &[f64], params: &[f64]) -> Result<StateVector> {
        self.check_arity(inputs, params)?;
        let mut state = self.embed(inputs)?;
        for op in &self.gates {
            state.apply(&op.resolve(params))?;
        }
        Ok(state)
    }

    /// One expectation value per observable, in declaration order.
    pub fn run(&self, inputs: &[f64], params: &[f64]) -> Result<Vec<f64>> {
        let state = self.final_state(inputs, params)?;
        self.observables.iter().map(|o| state.expval(*o)).collect()
    }

    fn weighted(&self, outputs: &[f64], upstream: &[f64]) -> f64 {
        outputs.iter().zip(upstream).map(|(a, b)| a * b).sum()
    }

    fn check_upstream(&self, upstream: &[f64]) -> Result<()> {
        if upstream.len() != self.observables.len() {
            return Err(Error::Arity {
                what: "upstream cotangent",
                expected: self.observables.len(),
                got: upstream.len(),
            });
        }
        Ok(())
    }

    /// Exact gradients by reverse-mode propagation through the statevector
    /// (adjoint method): one forward sweep, then a backward sweep that
    /// uncomputes each gate while carrying the cotangent state.
    pub fn gradient(&self, inputs: &[f64], params: &[f64], upstream: &[f64]) -> Result<CircuitGradient> {
        self.check_arity(inputs, params)?;
        self.check_upstream(upstream)?;

        // Angle embedding is just a prefix of RY gates on |0…0⟩; treat those
        // as differentiable gates whose angle is π·x_j.
        let mut sequence: Vec<(Gate, Slot)> = Vec::new();
        let initial = match self.embedding {
            Embedding::Amplitude => StateVector::amplitude_embed(inputs)?,
            Embedding::Angle => {
                // range check only; the RY prefix below rebuilds the same state
                StateVector::angle_embed(inputs)?;
                for (j, &x) in inputs.iter().enumerate() {
                    sequence.push((Gate::ry(j, PI * x), Slot::Input(j)));
                }
                StateVector::zero(self.n_qubits)?
            }
        };
        for op in &self.gates {
            let slot = op.param_index().map_or(Slot::None, Slot::Param);
            sequence.push((op.resolve(params), slot));
        }

        let mut psi = initial;
        for (g, _) in &sequence {
            psi.apply(g)?;
        }
        let mut lambda = StateVector::from_amplitudes(vec![Complex64::new(0.0, 0.0); psi.amplitudes().len()])?;
        for (obs, &c) in self.observables.iter().zip(upstream) {
            lambda.add_scaled(&psi.apply_observable(*obs)?, c);
        }

        let mut grad = CircuitGradient {
            params: vec![0.0; self.n_params],
            inputs: vec![0.0; inputs.len()],
        };
        let minus_half_i = Complex64::new(0.0, -0.5);
        for (g, slot) in sequence.iter().rev() {
            if let (Gate::Rotation { axis, qubit, .. }, false) = (g, matches!(slot, Slot::None)) {
                // d/dθ exp(-iθP/2) = (-i/2) P exp(-iθP/2)
                let mut mu = psi.clone();
                mu.apply_pauli(*axis, *qubit);
                mu.scale(minus_half_i);
                let d = 2.0 * lambda.inner(&mu).re;
                match slot {
                    Slot::Param(p) => grad.params[*p] += d,
                    Slot::Input(j) => grad.inputs[*j] += PI * d,
                    Slot::None => unreachable!(),
                }
            }
            let inv = g.adjoint();
            psi.apply(&inv)?;
            lambda.apply(&inv)?;
        }

        if self.embedding == Embedding::Amplitude {
            // L = ⟨a|M|a⟩ with real a = f/‖f‖: dL/da = 2 Re(M a), then
            // project through the normalization.
            let norm = inputs.iter().map(|v| v * v).sum::<f64>().sqrt();
            let a: Vec<f64> = inputs.iter().map(|v| v / norm).collect();
            let da: Vec<f64> = lambda.amplitudes().iter().map(|z| 2.0 * z.re).collect();
            let dot: f64 = a.iter().zip(&da).map(|(x, y)| x * y).sum();
            for (i, gi) in grad.inputs.iter_mut().enumerate() {
                *gi = (da[i] - a[i] * dot) / norm;
            }
        }
        Ok(grad)
    }

    /// Trainable-parameter gradients via the parameter-shift rule,
    /// `[E(θ+π/2) − E(θ−π/2)] / 2` per rotation occurrence.
    pub fn parameter_shift_gradient(&self, inputs: &[f64], params: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        self.check_arity(inputs, params)?;
        self.check_upstream(upstream)?;
        let start = self.embed(inputs)?;
        let mut grad = vec![0.0; self.n_params];
        for (k, op) in self.gates.iter().enumerate() {
            let Some(p) = op.param_index() else { continue };
            let mut shifted = [0.0; 2];
            for (s, shift) in [FRAC_PI_2, -FRAC_PI_2].into_iter().enumerate() {
                let mut state = start.clone();
                for (i, other) in self.gates.iter().enumerate() {
                    let mut g = other.resolve(params);
                    if i == k {
                        if let Gate::Rotation { angle, .. } = &mut g {
                            *angle += shift;
                        }
                    }
                    state.apply(&g)?;
                }
                let outs: Vec<f64> = self
                    .observables
                    .iter()
                    .map(|o| state.expval(*o))
                    .collect::<Result<_>>()?;
                shifted[s] = self.weighted(&outs, upstream);
            }
            grad[p] += (shifted[0] - shifted[1]) / 2.0;
        }
        Ok(grad)
    }

    /// Dense `2^n x 2^n` matrix (row-major) of the variational block,
    /// built column by column from basis states.
    pub fn variational_unitary(&self, params: &[f64]) -> Result<Vec<Complex64>> {
        if params.len() != self.n_params {
            return Err(Error::Arity {
                what: "circuit parameters",
                expected: self.n_params,
                got: params.len(),
            });
        }
        let dim = 1usize << self.n_qubits;
        let mut u = vec![Complex64::new(0.0, 0.0); dim * dim];
        for col in 0..dim {
            let mut amps = vec![Complex64::new(0.0, 0.0); dim];
            amps[col] = Complex64::new(1.0, 0.0);
            let mut state = StateVector::from_amplitudes(amps)?;
            for op in &self.gates {
                state.apply(&op.resolve(params))?;
            }
            for (row, a) in state.amplitudes().iter().enumerate() {
                u[row * dim + col] = *a;
            }
        }
        Ok(u)
    }
}

enum Slot {
    None,
    Param(usize),
    Input(usize),
}

/// `layers` blocks of per-qubit `RX(θ_{l,j})`, `RY(φ_{l,j})` followed by the
/// CNOT ring `j → (j+1) mod n`. Parameters are numbered layer by layer,
/// qubit by qubit, RX before RY.
pub fn ring_layers(n_qubits: usize, layers: usize) -> Vec<GateOp> {
    let mut gates = Vec::new();
    let mut p = 0;
    for _ in 0..layers {
        for q in 0..n_qubits {
            gates.push(GateOp::trainable(Axis::X, q, p));
            gates.push(GateOp::trainable(Axis::Y, q, p + 1));
            p += 2;
        }
        if n_qubits > 1 {
            for q in 0..n_qubits {
                let target = (q + 1) % n_qubits;
                if target != q {
                    gates.push(GateOp::Cnot { control: q, target });
                }
            }
        }
    }
    gates
}
