//! Test-only oracles kept independent of the library's simulation path.
#![allow(dead_code)]

use num_complex::Complex64;
use qfusion::quantum::{Angle, Axis, CircuitSpec, Embedding, GateOp, Observable};
use rand::Rng;

pub type C = Complex64;

/// Square complex matrix, row-major.
#[derive(Clone, Debug)]
pub struct Mat {
    pub dim: usize,
    pub data: Vec<C>,
}

impl Mat {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![C::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = C::new(1.0, 0.0);
        }
        Self { dim, data }
    }

    pub fn from_rows(rows: &[&[C]]) -> Self {
        let dim = rows.len();
        Self {
            dim,
            data: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    pub fn at(&self, r: usize, c: usize) -> C {
        self.data[r * self.dim + c]
    }

    pub fn kron(&self, other: &Mat) -> Mat {
        let dim = self.dim * other.dim;
        let mut data = vec![C::new(0.0, 0.0); dim * dim];
        for r1 in 0..self.dim {
            for c1 in 0..self.dim {
                let a = self.at(r1, c1);
                for r2 in 0..other.dim {
                    for c2 in 0..other.dim {
                        data[(r1 * other.dim + r2) * dim + c1 * other.dim + c2] = a * other.at(r2, c2);
                    }
                }
            }
        }
        Mat { dim, data }
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        let n = self.dim;
        let mut data = vec![C::new(0.0, 0.0); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.at(i, k);
                for j in 0..n {
                    data[i * n + j] += a * other.at(k, j);
                }
            }
        }
        Mat { dim: n, data }
    }

    pub fn add(&self, other: &Mat) -> Mat {
        Mat {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scale(&self, k: C) -> Mat {
        Mat {
            dim: self.dim,
            data: self.data.iter().map(|a| a * k).collect(),
        }
    }

    pub fn apply(&self, v: &[C]) -> Vec<C> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.at(i, j) * v[j]).sum())
            .collect()
    }

    pub fn dagger(&self) -> Mat {
        let n = self.dim;
        let mut data = vec![C::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                data[j * n + i] = self.at(i, j).conj();
            }
        }
        Mat { dim: n, data }
    }
}

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

pub fn pauli(axis: Axis) -> Mat {
    match axis {
        Axis::X => Mat::from_rows(&[&[c(0., 0.), c(1., 0.)], &[c(1., 0.), c(0., 0.)]]),
        Axis::Y => Mat::from_rows(&[&[c(0., 0.), c(0., -1.)], &[c(0., 1.), c(0., 0.)]]),
        Axis::Z => Mat::from_rows(&[&[c(1., 0.), c(0., 0.)], &[c(0., 0.), c(-1., 0.)]]),
    }
}

/// `cos(θ/2) I − i sin(θ/2) P`.
pub fn rotation(axis: Axis, theta: f64) -> Mat {
    Mat::identity(2)
        .scale(c((theta / 2.0).cos(), 0.0))
        .add(&pauli(axis).scale(c(0.0, -(theta / 2.0).sin())))
}

pub fn hadamard() -> Mat {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Mat::from_rows(&[&[c(h, 0.), c(h, 0.)], &[c(h, 0.), c(-h, 0.)]])
}

/// Lifts a one-qubit matrix onto qubit `q` of an `n`-qubit register where
/// qubit 0 is the least significant (rightmost) Kronecker factor.
pub fn lift(m: &Mat, q: usize, n: usize) -> Mat {
    let mut out = Mat::identity(1);
    for k in (0..n).rev() {
        out = out.kron(if k == q { m } else { &IDENTITY2 });
    }
    out
}

static IDENTITY2: std::sync::LazyLock<Mat> = std::sync::LazyLock::new(|| Mat::identity(2));

pub fn cnot(control: usize, target: usize, n: usize) -> Mat {
    let p0 = Mat::from_rows(&[&[c(1., 0.), c(0., 0.)], &[c(0., 0.), c(0., 0.)]]);
    let p1 = Mat::from_rows(&[&[c(0., 0.), c(0., 0.)], &[c(0., 0.), c(1., 0.)]]);
    let mut a = Mat::identity(1);
    let mut b = Mat::identity(1);
    for k in (0..n).rev() {
        let (fa, fb) = if k == control {
            (&p0, &p1)
        } else if k == target {
            (&*IDENTITY2, &pauli(Axis::X))
        } else {
            (&*IDENTITY2, &*IDENTITY2)
        };
        a = a.kron(fa);
        b = b.kron(fb);
    }
    a.add(&b)
}

pub fn dense_op(op: &GateOp, params: &[f64], n: usize) -> Mat {
    match *op {
        GateOp::Rotation { axis, qubit, angle } => {
            let theta = match angle {
                Angle::Fixed(a) => a,
                Angle::Param(p) => params[p],
            };
            lift(&rotation(axis, theta), qubit, n)
        }
        GateOp::H { qubit } => lift(&hadamard(), qubit, n),
        GateOp::Cnot { control, target } => cnot(control, target, n),
    }
}

pub fn dense_observable(obs: Observable, n: usize) -> Mat {
    match obs {
        Observable::Z(q) => lift(&pauli(Axis::Z), q, n),
        Observable::X(q) => lift(&pauli(Axis::X), q, n),
    }
}

/// `⟨ψ|O|ψ⟩` by explicit matrix-vector product.
pub fn dense_expval(psi: &[C], o: &Mat) -> f64 {
    let opsi = o.apply(psi);
    psi.iter().zip(&opsi).map(|(a, b)| a.conj() * b).sum::<C>().re
}

/// Initial state of a circuit built without the library's embed routines.
pub fn dense_initial(embedding: Embedding, inputs: &[f64], n: usize) -> Vec<C> {
    let dim = 1 << n;
    match embedding {
        Embedding::Amplitude => {
            let norm = inputs.iter().map(|v| v * v).sum::<f64>().sqrt();
            inputs.iter().map(|v| c(v / norm, 0.0)).collect()
        }
        Embedding::Angle => {
            let mut psi = vec![c(0.0, 0.0); dim];
            psi[0] = c(1.0, 0.0);
            for (j, x) in inputs.iter().enumerate() {
                psi = lift(&rotation(Axis::Y, x * std::f64::consts::PI), j, n).apply(&psi);
            }
            psi
        }
    }
}

/// Final state and expectation values via dense Kronecker-product matrices.
pub fn dense_run(spec: &CircuitSpec, inputs: &[f64], params: &[f64]) -> (Vec<C>, Vec<f64>) {
    let n = spec.n_qubits();
    let mut psi = dense_initial(spec.embedding(), inputs, n);
    for op in spec.gates() {
        psi = dense_op(op, params, n).apply(&psi);
    }
    let outs = spec
        .observables()
        .iter()
        .map(|o| dense_expval(&psi, &dense_observable(*o, n)))
        .collect();
    (psi, outs)
}

pub fn random_axis(rng: &mut impl Rng) -> Axis {
    [Axis::X, Axis::Y, Axis::Z][rng.gen_range(0..3)]
}

/// Random gate list over `n` qubits mixing fixed and trainable rotations,
/// Hadamards and CNOTs. Parameter slots are numbered in order of use.
pub fn random_gates(rng: &mut impl Rng, n: usize, count: usize) -> Vec<GateOp> {
    let mut gates = Vec::with_capacity(count);
    let mut next_param = 0;
    for _ in 0..count {
        let q = rng.gen_range(0..n);
        let op = match rng.gen_range(0..5) {
            0 | 1 => {
                let p = next_param;
                next_param += 1;
                GateOp::trainable(random_axis(rng), q, p)
            }
            2 => GateOp::Rotation {
                axis: random_axis(rng),
                qubit: q,
                angle: Angle::Fixed(rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)),
            },
            3 => GateOp::H { qubit: q },
            _ => {
                let mut t = rng.gen_range(0..n);
                while t == q {
                    t = rng.gen_range(0..n);
                }
                GateOp::Cnot { control: q, target: t }
            }
        };
        gates.push(op);
    }
    gates
}

pub fn all_observables(n: usize) -> Vec<Observable> {
    (0..n).map(Observable::Z).chain((0..n).map(Observable::X)).collect()
}

pub fn random_inputs(rng: &mut impl Rng, embedding: Embedding, n: usize) -> Vec<f64> {
    match embedding {
        Embedding::Amplitude => (0..1 << n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        Embedding::Angle => (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    }
}

/// Central difference of `f` along coordinate `i` of `x`.
pub fn central_diff(x: &[f64], i: usize, h: f64, f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut plus = x.to_vec();
    plus[i] += h;
    let mut minus = x.to_vec();
    minus[i] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}
