//! Adam with global-norm gradient clipping and the inverse-sqrt warmup
//! schedule.

use crate::param::ParamStore;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// Inverse square root schedule with linear warmup:
/// `lr(s) = base_lr * min(s / warmup, sqrt(warmup / s))`, peaking at
/// `s == warmup_steps`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub warmup_steps: u64,
}

impl LrSchedule {
    pub fn new(base_lr: f64, warmup_steps: u64) -> Self {
        assert!(base_lr > 0.0 && warmup_steps >= 1);
        LrSchedule {
            base_lr,
            warmup_steps,
        }
    }

    /// Learning rate at 1-based step `s`.
    pub fn lr(&self, step: u64) -> f64 {
        let s = step.max(1) as f64;
        let w = self.warmup_steps as f64;
        self.base_lr * (s / w).min((w / s).sqrt())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 0.1,
        }
    }
}

/// Clip the global gradient norm to `clip_norm`, then apply one Adam update
/// at the schedule's rate for `step` (1-based). Returns the pre-clip norm.
pub fn adam_step<F: Scalar>(
    store: &mut ParamStore<F>,
    schedule: &LrSchedule,
    cfg: &AdamConfig,
    step: u64,
) -> F {
    let norm = store.global_grad_norm();
    let clip = F::of(cfg.clip_norm);
    if cfg.clip_norm > 0.0 && norm > clip {
        store.scale_grads(clip / norm);
    }
    let lr = F::of(schedule.lr(step));
    let b1 = F::of(cfg.beta1);
    let b2 = F::of(cfg.beta2);
    let eps = F::of(cfg.eps);
    let one = F::one();
    for p in store.iter_mut() {
        p.step_count += 1;
        let t = F::of(p.step_count as f64);
        let bc1 = one - b1.powf(t);
        let bc2 = one - b2.powf(t);
        let m = p.adam_m.data_mut();
        let v = p.adam_v.data_mut();
        let val = p.value.data_mut();
        for ((x, &g), (mi, vi)) in val
            .iter_mut()
            .zip(p.grad.data().iter())
            .zip(m.iter_mut().zip(v.iter_mut()))
        {
            *mi = b1 * *mi + (one - b1) * g;
            *vi = b2 * *vi + (one - b2) * g * g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *x = *x - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut ps = ParamStore::<f64>::new();
        let id = ps.add("w", Tensor::filled(&[3], 0.7));
        let sched = LrSchedule::new(1e-3, 10);
        adam_step(&mut ps, &sched, &AdamConfig::default(), 1);
        assert!(ps.value(id).data().iter().all(|&x| x == 0.7));
    }

    #[test]
    fn lr_at_warmup_equals_base() {
        let sched = LrSchedule::new(2e-3, 100);
        assert!((sched.lr(100) - 2e-3).abs() < 1e-18);
    }

    #[test]
    fn lr_monotone_up_then_inverse_sqrt_down() {
        let sched = LrSchedule::new(1e-3, 50);
        for s in 1..50 {
            assert!(sched.lr(s) < sched.lr(s + 1));
        }
        for s in 50..500 {
            assert!(sched.lr(s) >= sched.lr(s + 1));
        }
        // After warmup the decay is exactly proportional to 1/sqrt(s).
        let r = sched.lr(100) / sched.lr(400);
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn clip_scales_unit_norm_gradient_exactly() {
        let mut ps = ParamStore::<f64>::new();
        let id = ps.add("w", Tensor::zeros(&[2]));
        let g = ps.grad_mut(id).data_mut();
        g[0] = 0.6;
        g[1] = 0.8; // norm 1.0
        let sched = LrSchedule::new(1e-3, 10);
        let cfg = AdamConfig {
            clip_norm: 0.1,
            ..Default::default()
        };
        let pre = adam_step(&mut ps, &sched, &cfg, 1);
        assert_eq!(pre, 1.0);
        let g = ps.grad(id).data();
        assert!((g[0] - 0.06).abs() < 1e-15 && (g[1] - 0.08).abs() < 1e-15);
        let norm: f64 = (g[0] * g[0] + g[1] * g[1]).sqrt();
        assert!((norm - 0.1).abs() < 1e-15);
    }

    #[test]
    fn effective_gradient_never_exceeds_clip_norm() {
        let mut ps = ParamStore::<f64>::new();
        let id = ps.add("w", Tensor::zeros(&[4]));
        let cfg = AdamConfig {
            clip_norm: 0.25,
            ..Default::default()
        };
        let sched = LrSchedule::new(1e-3, 10);
        for mag in [0.01, 0.2, 1.0, 40.0] {
            for g in ps.grad_mut(id).data_mut() {
                *g = mag;
            }
            adam_step(&mut ps, &sched, &cfg, 1);
            let norm = ps.global_grad_norm();
            assert!(norm <= 0.25 + 1e-12, "mag {mag} left norm {norm}");
        }
    }
}
