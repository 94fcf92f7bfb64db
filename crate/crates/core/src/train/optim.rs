use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::params::ParamSet;

/// AdamW with decoupled weight decay:
/// `w ← w − lr·m̂/(√v̂ + ε) − lr·λ·w`.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamW {
    pub fn new(params: &ParamSet, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        let zeros = || params.params().iter().map(|p| vec![0.0; p.value.numel()]).collect();
        Self {
            beta1,
            beta2,
            eps,
            weight_decay,
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[Vec<f64>], lr: f64) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::LengthMismatch(grads.len(), self.m.len()));
        }
        for (p, g) in params.params().iter().zip(grads) {
            if g.len() != p.value.numel() {
                return Err(Error::Shape(format!("{}: gradient has {} values for {}", p.name, g.len(), p.value.numel())));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NanGradient(p.name.clone()));
            }
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, eps, wd) = (self.beta1, self.beta2, self.eps, self.weight_decay);
        for (((p, g), m), v) in params.params_mut().iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((w, &g), m), v) in p.value.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps) - lr * wd * *w;
            }
        }
        Ok(())
    }
}

/// One-cycle schedule with cosine phases: from `max_lr/div_factor` up to
/// `max_lr` over the warmup fraction, then down to `max_lr/final_div`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OneCycle {
    pub max_lr: f64,
    pub total_steps: usize,
    pub warmup: f64,
    pub div_factor: f64,
    pub final_div: f64,
}

impl OneCycle {
    /// Step at which the rate reaches `max_lr`.
    pub fn peak_step(&self) -> usize {
        let peak = (self.warmup * self.total_steps as f64).round() as usize;
        peak.clamp(1, self.total_steps.max(1)) - 1
    }

    pub fn initial_lr(&self) -> f64 {
        self.max_lr / self.div_factor
    }

    pub fn final_lr(&self) -> f64 {
        self.max_lr / self.final_div
    }

    pub fn lr(&self, step: usize) -> Result<f64> {
        if step >= self.total_steps {
            return Err(Error::StepOutOfRange {
                step,
                total: self.total_steps,
            });
        }
        let peak = self.peak_step();
        let (start, end, pct) = if step <= peak {
            let span = peak.max(1) as f64;
            (self.initial_lr(), self.max_lr, if peak == 0 { 1.0 } else { step as f64 / span })
        } else {
            let span = (self.total_steps - 1 - peak) as f64;
            (self.max_lr, self.final_lr(), (step - peak) as f64 / span)
        };
        // w runs 1 → 0, so both phase endpoints are hit exactly
        let w = 0.5 * (1.0 + (PI * pct).cos());
        Ok(if pct == 1.0 { end } else { start * w + end * (1.0 - w) })
    }
}

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= scale);
    }
    norm
}

/// Stops once validation accuracy has not improved for `patience` epochs.
/// Ties keep the earlier epoch.
#[derive(Clone, Debug)]
pub struct EarlyStopper {
    pub patience: usize,
    best: Option<(usize, f64)>,
    since: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            since: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_acc: f64) -> StopDecision {
        let improved = self.best.is_none_or(|(_, best)| val_acc > best);
        if improved {
            self.best = Some((epoch, val_acc));
            self.since = 0;
        } else {
            self.since += 1;
        }
        StopDecision {
            improved,
            stop: self.since >= self.patience && !improved,
        }
    }

    /// `(epoch, accuracy)` of the best observation so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}
