//! Adam optimizer over a whole parameter store.

use super::tensor::{ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    scale: Vec<f64>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let m: Vec<Vec<f64>> =
            store.ids().map(|id| vec![0.0; store.value(id).len()]).collect();
        let v = m.clone();
        let scale = vec![1.0; m.len()];
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m,
            v,
            scale,
        }
    }

    /// Per-tensor step-size multiplier. Geometry-like parameters whose loss
    /// surface oscillates on a much finer scale than the rest of the model
    /// need smaller steps than Adam's uniform normalization gives them.
    pub fn set_scale(&mut self, id: ParamId, scale: f64) {
        self.scale[id.0] = scale;
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update from the accumulated gradients. Rejects non-finite
    /// gradients by parameter name before touching any state.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        for id in store.ids() {
            if store.grad(id).iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    name: store.name(id).to_string(),
                });
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for id in store.ids() {
            let i = id.0;
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            // Gradients are read before values are written, so split the
            // work: moments first, then the value sweep.
            for ((m, v), g) in m.iter_mut().zip(v.iter_mut()).zip(store.grad(id)) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            }
            let (lr, eps) = (self.lr * self.scale[i], self.eps);
            for ((val, m), v) in store.value_mut(id).iter_mut().zip(m.iter()).zip(v.iter()) {
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                *val -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_signed_learning_rate() {
        let mut store = ParamStore::new();
        let id = store.add("p", 1, 2, vec![1.0, -3.0]);
        store.grad_mut(id).copy_from_slice(&[1.0, -0.5]);
        let mut opt = Adam::new(&store, 1e-3);
        opt.step(&mut store).unwrap();
        // m_hat = g, v_hat = g^2, so the move is lr * g / (|g| + eps).
        let expect0 = 1.0 - 1e-3 * (1.0 / (1.0 + 1e-8));
        let expect1 = -3.0 + 1e-3 * (0.5 / (0.5 + 1e-8));
        assert!((store.value(id)[0] - expect0).abs() < 1e-15);
        assert!((store.value(id)[1] - expect1).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_moves_are_bounded_by_lr() {
        let mut store = ParamStore::new();
        let id = store.add("p", 1, 1, vec![0.0]);
        let lr = 1e-3;
        let mut opt = Adam::new(&store, lr);
        let mut prev = 0.0;
        for _ in 0..200 {
            store.zero_grads();
            store.grad_mut(id)[0] = 2.7;
            opt.step(&mut store).unwrap();
            let now = store.value(id)[0];
            let dm = now - prev;
            // For a constant gradient, bias corrections keep every step at
            // most lr in magnitude (up to epsilon slack).
            assert!(dm < 0.0 && dm.abs() <= lr * (1.0 + 1e-6), "step {dm}");
            prev = now;
        }
        assert!(prev < -0.19, "200 near-lr steps should travel ~0.2: {prev}");
    }

    #[test]
    fn per_tensor_scale_shrinks_steps() {
        let mut store = ParamStore::new();
        let slow = store.add("slow", 1, 1, vec![0.0]);
        let fast = store.add("fast", 1, 1, vec![0.0]);
        let mut opt = Adam::new(&store, 1e-3);
        opt.set_scale(slow, 0.01);
        store.grad_mut(slow)[0] = 1.0;
        store.grad_mut(fast)[0] = 1.0;
        opt.step(&mut store).unwrap();
        assert!((store.value(fast)[0] + 1e-3).abs() < 1e-9);
        assert!((store.value(slow)[0] + 1e-5).abs() < 1e-11);
    }

    #[test]
    fn non_finite_gradient_is_reported_by_name() {
        let mut store = ParamStore::new();
        store.add("fine", 1, 1, vec![0.0]);
        let bad = store.add("layer2.w", 1, 1, vec![0.0]);
        store.grad_mut(bad)[0] = f64::NAN;
        let mut opt = Adam::new(&store, 1e-3);
        match opt.step(&mut store) {
            Err(Error::NonFiniteGradient { name }) => assert_eq!(name, "layer2.w"),
            other => panic!("expected NonFiniteGradient, got {other:?}"),
        }
        // Nothing moved.
        assert_eq!(opt.steps_taken(), 0);
    }
}
