//! The two quantum branches and the fusion block that joins them.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{fan_in_uniform, Bound, ParamId, ParamSet};
use crate::quantum::{ring_layers, CircuitSpec, Embedding, Observable, AMPLITUDE_NORM_FLOOR};
use crate::tensor::{CustomOp, Mode, Tape, Tensor, Var};

pub const N_QUBITS: usize = 4;
pub const CIRCUIT_LAYERS: usize = 2;
pub const FUSED_WIDTH: usize = 128;
pub const DROPOUT: f64 = 0.3;

/// How circuit parameter gradients are computed during training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum QuantumGrad {
    /// Reverse sweep through the statevector.
    #[default]
    Adjoint,
    /// Two shifted circuit evaluations per gate, as on hardware. Input
    /// gradients still come from the adjoint sweep: amplitude-embedded
    /// inputs have no shift rule.
    ParameterShift,
}

impl QuantumGrad {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "adjoint" => Ok(Self::Adjoint),
            "shift" | "parameter-shift" => Ok(Self::ParameterShift),
            other => Err(Error::Config(format!("unknown quantum gradient method {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Adjoint => "adjoint",
            Self::ParameterShift => "shift",
        }
    }
}

/// Amplitude circuit: 16 normalized features → ⟨Z_0..Z_3⟩.
pub fn amplitude_circuit() -> CircuitSpec {
    CircuitSpec::new(
        N_QUBITS,
        Embedding::Amplitude,
        ring_layers(N_QUBITS, CIRCUIT_LAYERS),
        (0..N_QUBITS).map(Observable::Z).collect(),
    )
    .expect("static circuit layout is valid")
}

/// Angle circuit: 4 bounded features → ⟨Z_0..Z_3⟩, ⟨X_0⟩, ⟨X_1⟩.
pub fn angle_circuit() -> CircuitSpec {
    let mut observables: Vec<_> = (0..N_QUBITS).map(Observable::Z).collect();
    observables.extend([Observable::X(0), Observable::X(1)]);
    CircuitSpec::new(
        N_QUBITS,
        Embedding::Angle,
        ring_layers(N_QUBITS, CIRCUIT_LAYERS),
        observables,
    )
    .expect("static circuit layout is valid")
}

/// Runs `spec` on every row of `inputs` (`[B, input_arity]`) with the shared
/// parameter vector `params`, producing `[B, output_arity]`.
pub fn circuit_forward(
    tape: &mut Tape,
    spec: &Arc<CircuitSpec>,
    inputs: Var,
    params: Var,
    grad: QuantumGrad,
) -> Result<Var> {
    let x = tape.value(inputs);
    let k = spec.input_arity();
    if x.shape().len() != 2 || x.shape()[1] != k {
        return Err(Error::Arity {
            what: "circuit input",
            expected: k,
            got: x.shape().get(1).copied().unwrap_or(0),
        });
    }
    let theta = tape.value(params).data();
    let batch = x.shape()[0];
    let m = spec.output_arity();
    let mut out = Vec::with_capacity(batch * m);
    for row in x.data().chunks(k) {
        out.extend(spec.run(row, theta)?);
    }
    let out = Tensor::new(&[batch, m], out)?;
    Ok(tape.custom(
        &[inputs, params],
        out,
        Box::new(CircuitOp {
            spec: Arc::clone(spec),
            grad,
        }),
    ))
}

struct CircuitOp {
    spec: Arc<CircuitSpec>,
    grad: QuantumGrad,
}

impl CustomOp for CircuitOp {
    fn name(&self) -> &str {
        "circuit"
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad_output: &[f64],
        needs: &[bool],
    ) -> Result<Vec<Option<Vec<f64>>>> {
        let (x, theta) = (inputs[0], inputs[1].data());
        let k = self.spec.input_arity();
        let m = self.spec.output_arity();
        let mut gx = vec![0.0; x.numel()];
        let mut gp = vec![0.0; theta.len()];
        for (b, row) in x.data().chunks(k).enumerate() {
            let upstream = &grad_output[b * m..(b + 1) * m];
            let g = self.spec.gradient(row, theta, upstream)?;
            gx[b * k..(b + 1) * k].copy_from_slice(&g.inputs);
            let pg = match self.grad {
                QuantumGrad::Adjoint => g.params,
                QuantumGrad::ParameterShift if needs[1] => {
                    self.spec.parameter_shift_gradient(row, theta, upstream)?
                }
                QuantumGrad::ParameterShift => continue,
            };
            for (acc, v) in gp.iter_mut().zip(pg) {
                *acc += v;
            }
        }
        Ok(vec![needs[0].then_some(gx), needs[1].then_some(gp)])
    }
}

fn circuit_params(rng: &mut impl Rng, n: usize) -> Tensor {
    Tensor::from_fn(&[n], |_| rng.gen_range(-PI..PI))
}

/// Linear layer parameters `w: [out, in]`, `b: [out]`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(ps: &mut ParamSet, name: &str, rng: &mut impl Rng, inputs: usize, outputs: usize) -> Self {
        let w = ps.add(format!("{name}.weight"), fan_in_uniform(rng, &[outputs, inputs], inputs));
        let b = ps.add(format!("{name}.bias"), fan_in_uniform(rng, &[outputs], inputs));
        Self { w, b }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        tape.linear(x, bound.var(self.w), bound.var(self.b))
    }
}

#[derive(Clone, Debug)]
pub struct AmplitudeBranch {
    pub projection: Linear,
    pub circuit: Arc<CircuitSpec>,
    pub params: ParamId,
}

impl AmplitudeBranch {
    pub fn new(ps: &mut ParamSet, rng: &mut impl Rng, features: usize) -> Self {
        let circuit = Arc::new(amplitude_circuit());
        let projection = Linear::new(ps, "amplitude.projection", rng, features, circuit.input_arity());
        let params = ps.add("amplitude.circuit", circuit_params(rng, circuit.num_params()));
        Self {
            projection,
            circuit,
            params,
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, f: Var, grad: QuantumGrad) -> Result<Var> {
        let p = self.projection.forward(tape, bound, f)?;
        let alpha = tape.l2_normalize(p, AMPLITUDE_NORM_FLOOR)?;
        circuit_forward(tape, &self.circuit, alpha, bound.var(self.params), grad)
    }
}

#[derive(Clone, Debug)]
pub struct AngleBranch {
    pub projection: Linear,
    pub circuit: Arc<CircuitSpec>,
    pub params: ParamId,
}

impl AngleBranch {
    pub fn new(ps: &mut ParamSet, rng: &mut impl Rng, features: usize) -> Self {
        let circuit = Arc::new(angle_circuit());
        let projection = Linear::new(ps, "angle.projection", rng, features, circuit.input_arity());
        let params = ps.add("angle.circuit", circuit_params(rng, circuit.num_params()));
        Self {
            projection,
            circuit,
            params,
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, f: Var, grad: QuantumGrad) -> Result<Var> {
        let p = self.projection.forward(tape, bound, f)?;
        // tanh keeps every feature inside the embedding's [-1, 1] domain
        let x = tape.tanh(p);
        circuit_forward(tape, &self.circuit, x, bound.var(self.params), grad)
    }
}

/// `Dropout(ReLU(LayerNorm(W·[q1; q2] + b)))`.
#[derive(Clone, Debug)]
pub struct FusionBlock {
    pub linear: Linear,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dropout: f64,
    inputs: usize,
}

impl FusionBlock {
    pub fn new(ps: &mut ParamSet, rng: &mut impl Rng, inputs: usize) -> Self {
        let linear = Linear::new(ps, "fusion.linear", rng, inputs, FUSED_WIDTH);
        let gamma = ps.add("fusion.norm.weight", Tensor::full(&[FUSED_WIDTH], 1.0));
        let beta = ps.add("fusion.norm.bias", Tensor::zeros(&[FUSED_WIDTH]));
        Self {
            linear,
            gamma,
            beta,
            dropout: DROPOUT,
            inputs,
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        q1: Var,
        q2: Var,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<Var> {
        let q = tape.concat(&[q1, q2])?;
        let got = tape.value(q).shape()[1];
        if got != self.inputs {
            return Err(Error::Arity {
                what: "fusion input",
                expected: self.inputs,
                got,
            });
        }
        let z = self.linear.forward(tape, bound, q)?;
        let z = tape.layernorm(z, bound.var(self.gamma), bound.var(self.beta))?;
        let z = tape.relu(z);
        tape.dropout(z, self.dropout, mode, rng)
    }
}
