//! Adam with bias correction and the warmup + cosine learning-rate
//! schedule.

use crate::params::ParamStore;
use crate::Tensor;

pub struct Adam {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        let m = store.ids().map(|id| Tensor::zeros(store.value(id).shape())).collect();
        let v = store.ids().map(|id| Tensor::zeros(store.value(id).shape())).collect();
        Self { m, v, t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// One update from the gradients currently held in the store.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, id) in store.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let grad = store.grad(id).clone();
            for (((m, v), g), p) in self.m[i]
                .data_mut()
                .iter_mut()
                .zip(self.v[i].data_mut())
                .zip(grad.data())
                .zip(store.value_mut(id).data_mut())
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Linear warmup to `lr_max` over `warmup` steps, then cosine decay to
/// `lr_min` at `step == total`.
pub fn cosine_lr(step: usize, warmup: usize, total: usize, lr_max: f64, lr_min: f64) -> f64 {
    debug_assert!(step <= total);
    if warmup > 0 && step < warmup {
        return lr_max * (step + 1) as f64 / warmup as f64;
    }
    if total <= warmup {
        return lr_max;
    }
    let progress = (step - warmup) as f64 / (total - warmup) as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_hits_lr_max_at_end_of_warmup() {
        assert_eq!(cosine_lr(20, 20, 500, 2e-3, 5e-5), 2e-3);
        assert!((cosine_lr(19, 20, 500, 2e-3, 5e-5) - 2e-3).abs() < 1e-15);
    }

    #[test]
    fn cosine_hits_lr_min_at_final_step() {
        assert!((cosine_lr(500, 20, 500, 2e-3, 5e-5) - 5e-5).abs() < 1e-12);
    }

    #[test]
    fn warmup_is_linear() {
        let lr = cosine_lr(9, 20, 500, 2e-3, 5e-5);
        assert!((lr - 2e-3 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut store = ParamStore::new();
        let id = store
            .add("w", Tensor::from_vec(&[2], vec![1.5, -0.5]).unwrap())
            .unwrap();
        let mut adam = Adam::new(&store);
        adam.step(&mut store, 1e-3);
        assert_eq!(store.value(id).data(), &[1.5, -0.5]);
    }
}
