//! AdamW with decoupled weight decay, and a cosine learning-rate schedule
//! with warm restarts.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Slot {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

/// Per-parameter moment estimates. Each slot keeps its own step count so a
/// parameter that was frozen for a while gets correct bias correction once
/// it starts receiving updates.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub config: AdamWConfig,
    slots: Vec<Slot>,
}

impl OptimState {
    pub fn new<'a>(config: AdamWConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let slots = params
            .into_iter()
            .map(|p| Slot {
                m: vec![0.0; p.len()],
                v: vec![0.0; p.len()],
                step: 0,
            })
            .collect();
        Self { config, slots }
    }

    pub fn step_count(&self, slot: usize) -> u64 {
        self.slots[slot].step
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

/// One AdamW update. `grads[i] == None` leaves parameter `i` and its state
/// untouched (frozen). Non-finite gradients abort before anything changes.
pub fn adamw_step(
    params: &mut [Tensor],
    grads: &[Option<Tensor>],
    state: &mut OptimState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.slots.len() {
        return Err(Error::Shape(format!(
            "adamw: {} params, {} grads, {} state slots",
            params.len(),
            grads.len(),
            state.slots.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if let Some(g) = g {
            if g.shape() != p.shape() {
                return Err(Error::Shape(format!(
                    "adamw: grad {i} has shape {:?}, param {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if g.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient for parameter {i}")));
            }
        }
    }
    let c = state.config;
    for ((p, g), slot) in params.iter_mut().zip(grads).zip(&mut state.slots) {
        let Some(g) = g else { continue };
        slot.step += 1;
        let bc1 = 1.0 - c.beta1.powi(slot.step as i32);
        let bc2 = 1.0 - c.beta2.powi(slot.step as i32);
        for (((w, &gv), m), v) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(&mut slot.m)
            .zip(&mut slot.v)
        {
            *w -= lr * c.weight_decay * *w;
            *m = c.beta1 * *m + (1.0 - c.beta1) * gv;
            *v = c.beta2 * *v + (1.0 - c.beta2) * gv * gv;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + c.epsilon);
        }
    }
    Ok(())
}

/// Cosine annealing from `base_lr` to `min_lr`, restarting every `period`
/// epochs.
pub fn cosine_lr(epoch: usize, base_lr: f64, min_lr: f64, period: usize) -> f64 {
    let period = period.max(1);
    let phase = (epoch % period) as f64 / period as f64;
    min_lr + 0.5 * (base_lr - min_lr) * (1.0 + (PI * phase).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(p: f64) -> Vec<Tensor> {
        vec![Tensor::scalar(p)]
    }

    #[test]
    fn zero_grad_without_decay_is_a_no_op() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut params = one(0.7);
        let mut st = OptimState::new(cfg, &params);
        adamw_step(&mut params, &[Some(Tensor::scalar(0.0))], &mut st, cfg.lr).unwrap();
        assert_eq!(params[0].item(), 0.7);
        assert_eq!(st.step_count(0), 1);
    }

    #[test]
    fn decay_only_step() {
        let cfg = AdamWConfig::default();
        let mut params = one(1.0);
        let mut st = OptimState::new(cfg, &params);
        adamw_step(&mut params, &[Some(Tensor::scalar(0.0))], &mut st, 0.001).unwrap();
        assert!((params[0].item() - 0.99999).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamWConfig::default();
        let mut params = one(0.0);
        let mut st = OptimState::new(cfg, &params);
        adamw_step(&mut params, &[Some(Tensor::scalar(1.0))], &mut st, 0.001).unwrap();
        // m_hat = v_hat = 1 after bias correction
        assert!((params[0].item() + 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn frozen_and_non_finite() {
        let cfg = AdamWConfig::default();
        let mut params = vec![Tensor::scalar(1.0), Tensor::scalar(2.0)];
        let mut st = OptimState::new(cfg, &params);
        adamw_step(&mut params, &[None, Some(Tensor::scalar(1.0))], &mut st, 0.1).unwrap();
        assert_eq!(params[0].item(), 1.0);
        assert_eq!(st.step_count(0), 0);
        let before = params.clone();
        let err = adamw_step(
            &mut params,
            &[Some(Tensor::scalar(1.0)), Some(Tensor::scalar(f64::NAN))],
            &mut st,
            0.1,
        );
        assert!(matches!(err, Err(Error::Numeric(_))));
        assert_eq!(params, before);
    }

    #[test]
    fn cosine_schedule() {
        assert_eq!(cosine_lr(0, 1e-3, 0.0, 50), 1e-3);
        assert!((cosine_lr(25, 1e-3, 1e-5, 50) - (1e-3 + 1e-5) / 2.0).abs() < 1e-15);
        assert_eq!(cosine_lr(50, 1e-3, 0.0, 50), 1e-3);
        assert!(cosine_lr(49, 1e-3, 0.0, 50) < 1e-5);
    }
}
