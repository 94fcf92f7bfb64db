//! The hybrid quantum-classical classifier and its classical baseline.
//!
//! Both share one backbone definition, initialized from the same seed
//! stream, so equal seeds give bit-identical backbone weights. Class index 0
//! is malignant and 1 is benign.

mod checkpoint;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{AmplitudeBranch, AngleBranch, FusionBlock, Linear, QuantumGrad, DROPOUT, FUSED_WIDTH};
use crate::params::{fan_in_uniform, Bound, ParamId, ParamSet, StatsId};
use crate::rng::{stream, Stream};
use crate::tensor::{Mode, Tape, Tensor, Var};

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_VERSION};

pub const IMAGE_SIDE: usize = 28;
pub const FEATURES: usize = 2048;
pub const CLASSES: usize = 2;
pub const MALIGNANT: usize = 0;
pub const BENIGN: usize = 1;
const FILTERS: [usize; 3] = [32, 64, 128];
const HIDDEN: [usize; 3] = [512, 256, 128];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Hybrid,
    Classical,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Hybrid => "hybrid",
            Self::Classical => "classical",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hybrid" => Ok(Self::Hybrid),
            "classical" => Ok(Self::Classical),
            other => Err(Error::Config(format!("unknown model {other:?}, expected hybrid or classical"))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvBn {
    w: ParamId,
    b: ParamId,
    gamma: ParamId,
    beta: ParamId,
    stats: StatsId,
}

impl ConvBn {
    fn new(ps: &mut ParamSet, name: &str, rng: &mut impl Rng, cin: usize, cout: usize) -> Self {
        let fan_in = cin * 9;
        let w = ps.add(format!("{name}.conv.weight"), fan_in_uniform(rng, &[cout, cin, 3, 3], fan_in));
        let b = ps.add(format!("{name}.conv.bias"), fan_in_uniform(rng, &[cout], fan_in));
        let gamma = ps.add(format!("{name}.bn.weight"), Tensor::full(&[cout], 1.0));
        let beta = ps.add(format!("{name}.bn.bias"), Tensor::zeros(&[cout]));
        let stats = ps.add_stats(format!("{name}.bn"), cout);
        Self { w, b, gamma, beta, stats }
    }

    fn forward(&self, ps: &mut ParamSet, tape: &mut Tape, bound: &Bound, x: Var, mode: Mode) -> Result<Var> {
        let y = tape.conv2d(x, bound.var(self.w), bound.var(self.b))?;
        let y = tape.batchnorm2d(y, bound.var(self.gamma), bound.var(self.beta), ps.stats_mut(self.stats), mode)?;
        Ok(tape.relu(y))
    }
}

/// Three blocks of two conv+BN+ReLU layers; 1×28×28 → 2048 features.
#[derive(Clone, Debug)]
pub struct Backbone {
    blocks: Vec<[ConvBn; 2]>,
}

impl Backbone {
    fn new(ps: &mut ParamSet, rng: &mut impl Rng) -> Self {
        let mut cin = 1;
        let blocks = FILTERS
            .iter()
            .enumerate()
            .map(|(i, &cout)| {
                let first = ConvBn::new(ps, &format!("backbone.block{}.0", i + 1), rng, cin, cout);
                let second = ConvBn::new(ps, &format!("backbone.block{}.1", i + 1), rng, cout, cout);
                cin = cout;
                [first, second]
            })
            .collect();
        Self { blocks }
    }

    /// Returns the flattened features and the per-block pooled outputs.
    fn forward(
        &self,
        ps: &mut ParamSet,
        tape: &mut Tape,
        bound: &Bound,
        images: Var,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<(Var, Vec<Var>)> {
        let shape = tape.value(images).shape();
        if shape.len() != 4 || shape[1..] != [1, IMAGE_SIDE, IMAGE_SIDE] {
            return Err(Error::Shape(format!("expected images [B, 1, 28, 28], got {shape:?}")));
        }
        let mut x = images;
        let mut trace = Vec::with_capacity(3);
        for (i, block) in self.blocks.iter().enumerate() {
            for layer in block {
                x = layer.forward(ps, tape, bound, x, mode)?;
            }
            x = if i + 1 < self.blocks.len() {
                tape.maxpool2d(x)?
            } else {
                tape.adaptive_avgpool2d(x, 4, 4)?
            };
            x = tape.dropout(x, DROPOUT, mode, rng)?;
            trace.push(x);
        }
        Ok((tape.flatten(x)?, trace))
    }
}

/// Linear chain with ReLU and dropout between layers.
#[derive(Clone, Debug)]
struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    fn new(ps: &mut ParamSet, rng: &mut impl Rng, inputs: usize) -> Self {
        let mut widths = vec![inputs];
        widths.extend(HIDDEN);
        widths.push(CLASSES);
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(ps, &format!("classifier.{i}"), rng, w[0], w[1]))
            .collect();
        Self { layers }
    }

    fn forward(&self, tape: &mut Tape, bound: &Bound, mut x: Var, mode: Mode, rng: &mut impl Rng) -> Result<Var> {
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(tape, bound, x)?;
            if i < last {
                x = tape.relu(x);
                x = tape.dropout(x, DROPOUT, mode, rng)?;
            }
        }
        Ok(x)
    }
}

#[derive(Clone, Debug)]
enum Head {
    Hybrid {
        amplitude: AmplitudeBranch,
        angle: AngleBranch,
        fusion: FusionBlock,
        classifier: Mlp,
    },
    Classical {
        classifier: Mlp,
    },
}

/// Per-component parameter counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub backbone: usize,
    pub projection: usize,
    pub circuit: usize,
    pub fusion: usize,
    pub classifier: usize,
    pub total: usize,
}

/// Intermediate values of one forward pass.
pub struct Forward {
    pub logits: Var,
    pub features: Var,
    /// Pooled output of each backbone block.
    pub blocks: Vec<Var>,
    /// `(q1, q2)` for the hybrid model.
    pub quantum: Option<(Var, Var)>,
    pub bound: Bound,
}

#[derive(Clone, Debug)]
pub struct Model {
    kind: ModelKind,
    seed: u64,
    params: ParamSet,
    backbone: Backbone,
    head: Head,
    pub quantum_grad: QuantumGrad,
}

impl Model {
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        let mut params = ParamSet::new();
        let backbone = Backbone::new(&mut params, &mut stream(seed, Stream::BackboneInit, 0));
        let rng = &mut stream(seed, Stream::HeadInit, 0);
        let head = match kind {
            ModelKind::Hybrid => {
                let amplitude = AmplitudeBranch::new(&mut params, rng, FEATURES);
                let angle = AngleBranch::new(&mut params, rng, FEATURES);
                let q = amplitude.circuit.output_arity() + angle.circuit.output_arity();
                let fusion = FusionBlock::new(&mut params, rng, q);
                let classifier = Mlp::new(&mut params, rng, FUSED_WIDTH + FEATURES);
                Head::Hybrid {
                    amplitude,
                    angle,
                    fusion,
                    classifier,
                }
            }
            ModelKind::Classical => Head::Classical {
                classifier: Mlp::new(&mut params, rng, FEATURES),
            },
        };
        Self {
            kind,
            seed,
            params,
            backbone,
            head,
            quantum_grad: QuantumGrad::default(),
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Records the forward pass of `images` (`[B, 1, 28, 28]`) on `tape`.
    /// Batch-norm running statistics are updated in train mode.
    pub fn forward(&mut self, tape: &mut Tape, images: Var, mode: Mode, rng: &mut impl Rng) -> Result<Forward> {
        let bound = self.params.bind(tape);
        let (features, blocks) = self.backbone.forward(&mut self.params, tape, &bound, images, mode, rng)?;
        let (logits, quantum) = match &self.head {
            Head::Hybrid {
                amplitude,
                angle,
                fusion,
                classifier,
            } => {
                let q1 = amplitude.forward(tape, &bound, features, self.quantum_grad)?;
                let q2 = angle.forward(tape, &bound, features, self.quantum_grad)?;
                let fused = fusion.forward(tape, &bound, q1, q2, mode, rng)?;
                let h = tape.concat(&[fused, features])?;
                (classifier.forward(tape, &bound, h, mode, rng)?, Some((q1, q2)))
            }
            Head::Classical { classifier } => (classifier.forward(tape, &bound, features, mode, rng)?, None),
        };
        Ok(Forward {
            logits,
            features,
            blocks,
            quantum,
            bound,
        })
    }

    /// Eval-mode logits `[B, 2]` for a batch of images.
    pub fn logits(&mut self, images: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.constant(images.clone());
        // eval mode never draws from the generator
        let mut rng = stream(self.seed, Stream::Dropout, u64::MAX);
        let out = self.forward(&mut tape, x, Mode::Eval, &mut rng)?;
        Ok(tape.value(out.logits).clone())
    }

    pub fn param_count(&self) -> ParamCount {
        let p = &self.params;
        ParamCount {
            backbone: p.count_prefix("backbone."),
            projection: p.count_prefix("amplitude.projection") + p.count_prefix("angle.projection"),
            circuit: p.count_prefix("amplitude.circuit") + p.count_prefix("angle.circuit"),
            fusion: p.count_prefix("fusion."),
            classifier: p.count_prefix("classifier."),
            total: p.total(),
        }
    }

    /// The two circuits with their current parameters, hybrid model only.
    pub fn circuits(&self) -> Option<[(&crate::quantum::CircuitSpec, &[f64]); 2]> {
        match &self.head {
            Head::Hybrid { amplitude, angle, .. } => Some([
                (&*amplitude.circuit, self.params.get(amplitude.params).data()),
                (&*angle.circuit, self.params.get(angle.params).data()),
            ]),
            Head::Classical { .. } => None,
        }
    }
}
