//! Plain-text circuit listing.
//!
//! ```text
//! qubits 4
//! embed angle
//! RX q0 0.25 trainable=1 param=0
//! RZ q2 1.5707963267948966 trainable=0
//! H q1
//! CNOT q0 q1
//! measure Z0 Z1 Z2 Z3 X0 X1
//! ```
//!
//! Angles are written in shortest round-trip form so a parsed dump
//! re-simulates bit-for-bit.

use std::fmt::Write as _;

use num_complex::Complex64;

use super::circuit::{CircuitSpec, Embedding};
use super::gate::{Angle, Axis, GateOp};
use super::state::Observable;
use crate::error::{Error, Result};

/// Renders `spec` with trainable angles taken from `params`.
pub fn dump_circuit(spec: &CircuitSpec, params: &[f64]) -> Result<String> {
    if params.len() != spec.num_params() {
        return Err(Error::Arity {
            what: "circuit parameters",
            expected: spec.num_params(),
            got: params.len(),
        });
    }
    let mut out = String::new();
    writeln!(out, "qubits {}", spec.n_qubits()).unwrap();
    writeln!(out, "embed {}", spec.embedding().name()).unwrap();
    for op in spec.gates() {
        match *op {
            GateOp::Rotation { axis, qubit, angle } => match angle {
                Angle::Fixed(a) => writeln!(out, "R{} q{qubit} {a} trainable=0", axis.name()),
                Angle::Param(p) => writeln!(out, "R{} q{qubit} {} trainable=1 param={p}", axis.name(), params[p]),
            },
            GateOp::H { qubit } => writeln!(out, "H q{qubit}"),
            GateOp::Cnot { control, target } => writeln!(out, "CNOT q{control} q{target}"),
        }
        .unwrap();
    }
    let measured: Vec<String> = spec.observables().iter().map(|o| o.to_string()).collect();
    writeln!(out, "measure {}", measured.join(" ")).unwrap();
    Ok(out)
}

/// Formats a dense row-major complex matrix, one row per line, each entry
/// as `re+imj` / `re-imj`.
pub fn format_unitary(u: &[Complex64], dim: usize) -> String {
    let mut out = String::new();
    for row in u.chunks(dim) {
        let cells: Vec<String> = row
            .iter()
            .map(|z| {
                let sign = if z.im.is_sign_negative() { '-' } else { '+' };
                format!("{}{sign}{}j", z.re, z.im.abs())
            })
            .collect();
        writeln!(out, "{}", cells.join(" ")).unwrap();
    }
    out
}

fn parse_qubit(tok: &str, line: usize) -> Result<usize> {
    tok.strip_prefix('q')
        .and_then(|q| q.parse().ok())
        .ok_or_else(|| Error::CircuitParse {
            line,
            msg: format!("expected a qubit like `q0`, got `{tok}`"),
        })
}

fn parse_observable(tok: &str, line: usize) -> Result<Observable> {
    let err = || Error::CircuitParse {
        line,
        msg: format!("unknown observable `{tok}`"),
    };
    let (kind, q) = tok.split_at(tok.len().min(1));
    let q: usize = q.parse().map_err(|_| err())?;
    match kind {
        "Z" => Ok(Observable::Z(q)),
        "X" => Ok(Observable::X(q)),
        _ => Err(err()),
    }
}

/// Parses a dump back into a spec and its trainable parameter values.
pub fn parse_circuit(text: &str) -> Result<(CircuitSpec, Vec<f64>)> {
    let mut n_qubits = None;
    let mut embedding = None;
    let mut gates = Vec::new();
    let mut observables = None;
    let mut values: Vec<(usize, f64)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let toks: Vec<&str> = raw.split_whitespace().collect();
        let Some(&head) = toks.first() else { continue };
        if head.starts_with('#') {
            continue;
        }
        let perr = |msg: String| Error::CircuitParse { line, msg };
        match head {
            "qubits" => {
                let n = toks.get(1).and_then(|t| t.parse().ok()).ok_or_else(|| perr("bad qubit count".into()))?;
                n_qubits = Some(n);
            }
            "embed" => {
                embedding = Some(match toks.get(1).copied() {
                    Some("angle") => Embedding::Angle,
                    Some("amplitude") => Embedding::Amplitude,
                    other => return Err(perr(format!("unknown embedding {other:?}"))),
                });
            }
            "RX" | "RY" | "RZ" => {
                let axis = match head {
                    "RX" => Axis::X,
                    "RY" => Axis::Y,
                    _ => Axis::Z,
                };
                let qubit = parse_qubit(toks.get(1).copied().unwrap_or(""), line)?;
                let angle: f64 = toks
                    .get(2)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| perr("missing or bad angle".into()))?;
                let mut trainable = false;
                let mut param = None;
                for kv in &toks[3..] {
                    match kv.split_once('=') {
                        Some(("trainable", v)) => trainable = v == "1",
                        Some(("param", v)) => {
                            param = Some(v.parse::<usize>().map_err(|_| perr(format!("bad param index `{v}`")))?)
                        }
                        _ => return Err(perr(format!("unexpected token `{kv}`"))),
                    }
                }
                let angle = if trainable {
                    let p = param.ok_or_else(|| perr("trainable gate without param=<index>".into()))?;
                    values.push((p, angle));
                    Angle::Param(p)
                } else {
                    Angle::Fixed(angle)
                };
                gates.push(GateOp::Rotation { axis, qubit, angle });
            }
            "H" => gates.push(GateOp::H {
                qubit: parse_qubit(toks.get(1).copied().unwrap_or(""), line)?,
            }),
            "CNOT" => gates.push(GateOp::Cnot {
                control: parse_qubit(toks.get(1).copied().unwrap_or(""), line)?,
                target: parse_qubit(toks.get(2).copied().unwrap_or(""), line)?,
            }),
            "measure" => {
                observables = Some(toks[1..].iter().map(|t| parse_observable(t, line)).collect::<Result<Vec<_>>>()?);
            }
            other => return Err(perr(format!("unknown directive `{other}`"))),
        }
    }
    let missing = |what: &str| Error::CircuitParse {
        line: 0,
        msg: format!("missing `{what}` line"),
    };
    let spec = CircuitSpec::new(
        n_qubits.ok_or_else(|| missing("qubits"))?,
        embedding.unwrap_or(Embedding::Angle),
        gates,
        observables.ok_or_else(|| missing("measure"))?,
    )?;
    let mut params = vec![0.0; spec.num_params()];
    for (p, v) in values {
        params[p] = v;
    }
    Ok((spec, params))
}
