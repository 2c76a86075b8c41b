//! AdamW with decoupled weight decay, and reduce-on-plateau LR scheduling.

use crate::{GradError, Result};

#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    // first/second moment buffers per tensor, in step() iteration order
    state: Vec<(Vec<f64>, Vec<f64>)>,
}

impl AdamW {
    pub fn new(lr: f64, betas: (f64, f64), eps: f64, weight_decay: f64) -> Result<Self> {
        if lr <= 0.0 {
            return Err(GradError::BadLearningRate(lr));
        }
        Ok(AdamW {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps,
            weight_decay,
            t: 0,
            state: Vec::new(),
        })
    }

    /// Defaults from the training recipe: lr as given, betas (0.9, 0.999),
    /// eps 1e-8.
    pub fn with_lr(lr: f64, weight_decay: f64) -> Result<Self> {
        Self::new(lr, (0.9, 0.999), 1e-8, weight_decay)
    }

    pub fn set_lr(&mut self, lr: f64) -> Result<()> {
        if lr <= 0.0 {
            return Err(GradError::BadLearningRate(lr));
        }
        self.lr = lr;
        Ok(())
    }

    /// One update over all parameter tensors. Tensors must arrive in the
    /// same order every step; moment buffers are keyed by position.
    pub fn step(&mut self, params_and_grads: &mut [(&mut [f64], &[f64])]) -> Result<()> {
        if self.state.is_empty() {
            self.state = params_and_grads
                .iter()
                .map(|(p, _)| (vec![0.0; p.len()], vec![0.0; p.len()]))
                .collect();
        }
        if self.state.len() != params_and_grads.len() {
            return Err(GradError::StateMismatch {
                state: self.state.len(),
                got: params_and_grads.len(),
            });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((param, grad), (m, v)) in params_and_grads.iter_mut().zip(&mut self.state) {
            for i in 0..param.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                // decoupled decay: applied to the parameter, not the gradient
                param[i] -=
                    self.lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * param[i]);
            }
        }
        Ok(())
    }
}

/// Multiplies the learning rate by `factor` after `patience` evaluations
/// without an improvement larger than `min_delta`.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub min_delta: f64,
    best: f64,
    bad_count: usize,
}

impl PlateauScheduler {
    pub fn new(initial_lr: f64) -> Self {
        PlateauScheduler {
            lr: initial_lr,
            factor: 0.5,
            patience: 10,
            min_delta: 1e-4,
            best: f64::INFINITY,
            bad_count: 0,
        }
    }

    /// Feeds one validation loss; returns the (possibly reduced) LR.
    pub fn observe(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best - self.min_delta {
            self.best = val_loss;
            self.bad_count = 0;
        } else {
            self.bad_count += 1;
            if self.bad_count >= self.patience {
                self.lr *= self.factor;
                self.bad_count = 0;
            }
        }
        self.lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_zero_decay_leaves_params() {
        let mut opt = AdamW::with_lr(1e-3, 0.0).unwrap();
        let mut p = vec![1.0, -2.0];
        let g = vec![0.0, 0.0];
        opt.step(&mut [(&mut p, &g)]).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn single_step_hand_evaluated() {
        // p=1, g=1, lr=1e-3: m̂=1, v̂=1 → Δ = lr/(1+eps) ≈ 1e-3
        let mut opt = AdamW::with_lr(1e-3, 0.0).unwrap();
        let mut p = vec![1.0];
        let g = vec![1.0];
        opt.step(&mut [(&mut p, &g)]).unwrap();
        assert!((p[0] - 0.999).abs() < 1e-9, "p = {}", p[0]);
    }

    #[test]
    fn decoupled_weight_decay_term() {
        let wd = 0.01;
        let mut with_wd = AdamW::with_lr(1e-3, wd).unwrap();
        let mut without = AdamW::with_lr(1e-3, 0.0).unwrap();
        let (mut p1, mut p2) = (vec![2.0], vec![2.0]);
        let g = vec![0.5];
        with_wd.step(&mut [(&mut p1, &g)]).unwrap();
        without.step(&mut [(&mut p2, &g)]).unwrap();
        // difference is exactly −lr·wd·p
        let want = p2[0] - 1e-3 * wd * 2.0;
        assert!((p1[0] - want).abs() < 1e-15);
    }

    #[test]
    fn adamw_zero_decay_equals_adam_trajectory() {
        // against a hand-rolled Adam on a short recorded trajectory
        let mut opt = AdamW::with_lr(0.01, 0.0).unwrap();
        let mut p = vec![1.5];
        let (mut m, mut v) = (0.0, 0.0);
        let mut p_ref = 1.5;
        for t in 1..=25 {
            let g = 2.0 * p_ref; // d/dp p² at the reference point
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let m_hat = m / (1.0 - 0.9f64.powi(t));
            let v_hat = v / (1.0 - 0.999f64.powi(t));
            p_ref -= 0.01 * m_hat / (v_hat.sqrt() + 1e-8);

            let g_vec = vec![2.0 * p[0]];
            opt.step(&mut [(&mut p, &g_vec)]).unwrap();
            assert!((p[0] - p_ref).abs() < 1e-12, "step {t}");
        }
    }

    #[test]
    fn bad_lr_rejected() {
        assert!(AdamW::with_lr(0.0, 0.0).is_err());
        assert!(AdamW::with_lr(-1.0, 0.0).is_err());
    }

    #[test]
    fn plateau_constant_losses_reduce_once_at_patience() {
        let mut sched = PlateauScheduler::new(1.0);
        let mut lrs = Vec::new();
        for _ in 0..11 {
            lrs.push(sched.observe(0.5));
        }
        assert_eq!(lrs[9], 1.0);
        assert_eq!(lrs[10], 0.5);
    }

    #[test]
    fn plateau_decreasing_losses_keep_lr() {
        let mut sched = PlateauScheduler::new(1.0);
        for k in 0..30 {
            let lr = sched.observe(1.0 - 0.01 * k as f64);
            assert_eq!(lr, 1.0);
        }
    }

    #[test]
    fn two_plateaus_compose() {
        let mut sched = PlateauScheduler::new(1.0);
        for _ in 0..21 {
            sched.observe(0.5);
        }
        assert_eq!(sched.lr, 0.25);
    }
}
