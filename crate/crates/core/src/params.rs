//! Named parameter storage shared by the layers of a model.

use rand::Rng;

use crate::tensor::{RunningStats, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StatsId(usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Trainable tensors plus the batch-norm running statistics of a model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
    stats: Vec<(String, RunningStats)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            value,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn add_stats(&mut self, name: impl Into<String>, channels: usize) -> StatsId {
        self.stats.push((name.into(), RunningStats::new(channels)));
        StatsId(self.stats.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn stats_mut(&mut self, id: StatsId) -> &mut RunningStats {
        &mut self.stats[id.0].1
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn stats(&self) -> &[(String, RunningStats)] {
        &self.stats
    }

    pub fn stats_entries_mut(&mut self) -> &mut [(String, RunningStats)] {
        &mut self.stats
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count of parameters whose name starts with `prefix`.
    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.params
            .iter()
            .filter(|p| p.name.starts_with(prefix))
            .map(|p| p.value.numel())
            .sum()
    }

    pub fn total(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Records every parameter on `tape` as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self.params.iter().map(|p| tape.param(p.value.clone())).collect(),
        }
    }

    /// Gradients from a finished backward pass, one buffer per parameter.
    pub fn collect_grads(&self, tape: &Tape, bound: &Bound) -> Vec<Vec<f64>> {
        self.params
            .iter()
            .zip(&bound.vars)
            .map(|(p, v)| tape.grad(*v).map_or_else(|| vec![0.0; p.value.numel()], <[f64]>::to_vec))
            .collect()
    }
}

/// Tape handles for every parameter of a [`ParamSet`].
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// `U(-1/√fan_in, 1/√fan_in)`, the fan-in scaled uniform scheme used for
/// every convolution and linear layer.
pub fn fan_in_uniform(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.gen_range(-bound..bound))
}
