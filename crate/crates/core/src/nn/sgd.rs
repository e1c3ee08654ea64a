use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use crate::error::{Error, Result};

/// Staircase step decay with global gradient-norm clipping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdSchedule {
    pub start_lr: f64,
    pub decay_steps: u64,
    pub decay_rate: f64,
    pub clip_norm: f64,
}

impl Default for SgdSchedule {
    fn default() -> Self {
        SgdSchedule { start_lr: 0.5, decay_steps: 1000, decay_rate: 0.5, clip_norm: 5.0 }
    }
}

impl SgdSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.start_lr > 0.0)
            || self.decay_steps == 0
            || !(self.decay_rate > 0.0 && self.decay_rate <= 1.0)
            || !(self.clip_norm > 0.0)
        {
            return Err(Error::InvalidArgument(format!("invalid SGD schedule {self:?}")));
        }
        Ok(())
    }

    /// `start_lr · decay_rate^⌊step / decay_steps⌋`
    pub fn learning_rate(&self, step: u64) -> f64 {
        self.start_lr * self.decay_rate.powi((step / self.decay_steps) as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdStep {
    pub learning_rate: f64,
    pub grad_norm: f64,
    pub clipped: bool,
}

/// `params ← params − lr · grads`, after rescaling `grads` to `clip_norm`
/// when their global L2 norm exceeds it.
pub fn sgd_update<P: ParamSet>(params: &mut P, grads: &P, step: u64, schedule: &SgdSchedule) -> Result<SgdStep> {
    let pb = params.blocks();
    let gb = grads.blocks();
    if pb.len() != gb.len() || pb.iter().zip(&gb).any(|(p, g)| p.dims != g.dims) {
        return Err(Error::Shape("gradient blocks do not match parameter blocks".into()));
    }
    if let Some(b) = gb.iter().find(|b| b.values.iter().any(|v| !v.is_finite())) {
        return Err(Error::Numeric(format!("non-finite gradient in {}", b.name)));
    }
    let norm = grads.l2_norm();
    let clipped = norm > schedule.clip_norm;
    let scale = if clipped { schedule.clip_norm / norm } else { 1.0 };
    let lr = schedule.learning_rate(step);
    params.add_scaled(grads, -lr * scale);
    Ok(SgdStep { learning_rate: lr, grad_norm: norm, clipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::DenseParams;

    #[test]
    fn staircase_decay() {
        let s = SgdSchedule::default();
        assert_eq!(s.learning_rate(0), 0.5);
        assert_eq!(s.learning_rate(999), 0.5);
        assert_eq!(s.learning_rate(1000), 0.25);
        assert_eq!(s.learning_rate(2000), 0.125);
        assert_eq!(s.learning_rate(2500), 0.125);
    }

    #[test]
    fn clipping_halves_large_gradients() {
        let mut p = DenseParams::zeros(&[2, 1]);
        let mut g = p.zeroed();
        // norm 10
        g.layers[0].w.as_mut_slice().copy_from_slice(&[6.0, 8.0]);
        let sched = SgdSchedule { start_lr: 1.0, clip_norm: 5.0, ..Default::default() };
        let info = sgd_update(&mut p, &g, 0, &sched).unwrap();
        assert!(info.clipped);
        assert_eq!(info.grad_norm, 10.0);
        assert_eq!(p.layers[0].w.as_slice(), &[-3.0, -4.0]);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = DenseParams::zeros(&[2, 2, 1]);
        p.layers[0].b = vec![0.3, -0.1];
        let before = p.clone();
        sgd_update(&mut p, &before.zeroed(), 5, &SgdSchedule::default()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut p = DenseParams::zeros(&[2, 2, 1]);
        let mut g = p.zeroed();
        g.layers[1].b[0] = f64::NAN;
        match sgd_update(&mut p, &g, 0, &SgdSchedule::default()) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("dense.1.b")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schedule_validation() {
        assert!(SgdSchedule::default().validate().is_ok());
        assert!(SgdSchedule { decay_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(SgdSchedule { decay_rate: 1.5, ..Default::default() }.validate().is_err());
    }
}
