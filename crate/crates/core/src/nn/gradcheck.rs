//! Central-difference verification of analytic gradients. The comparison is
//! norm-based per parameter tensor: `|a - n| / max(|a| + |n|, 1e-12)` over
//! the sampled coordinates, which tolerates individually tiny entries while
//! catching any systematic formula error.

use super::tensor::ParamStore;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// `(param name, relative error)` in registration order.
    pub per_param: Vec<(String, f64)>,
    pub worst: f64,
    pub worst_param: String,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.worst <= tol
    }
}

/// Compare `analytic` (a gradient snapshot aligned with the store's ids)
/// against central differences of `loss`. Parameters larger than
/// `max_coords_per_param` are subsampled on a deterministic stride, so the
/// cost stays bounded on wide layers.
pub fn finite_diff_check(
    store: &mut ParamStore,
    analytic: &[Vec<f64>],
    h: f64,
    max_coords_per_param: usize,
    loss: &mut dyn FnMut(&ParamStore) -> f64,
) -> GradCheckReport {
    assert_eq!(analytic.len(), store.len(), "snapshot/store mismatch");
    assert!(h > 0.0 && max_coords_per_param > 0);
    let mut per_param = Vec::with_capacity(store.len());
    let mut worst = 0.0f64;
    let mut worst_param = String::new();
    for id in store.ids().collect::<Vec<_>>() {
        let n = store.value(id).len();
        assert_eq!(analytic[id.0].len(), n, "snapshot shape for {}", store.name(id));
        let coords: Vec<usize> = if n <= max_coords_per_param {
            (0..n).collect()
        } else {
            (0..max_coords_per_param)
                .map(|i| i * n / max_coords_per_param)
                .collect()
        };
        let mut diff2 = 0.0;
        let mut a2 = 0.0;
        let mut n2 = 0.0;
        for &i in &coords {
            let orig = store.value(id)[i];
            store.value_mut(id)[i] = orig + h;
            let up = loss(store);
            store.value_mut(id)[i] = orig - h;
            let down = loss(store);
            store.value_mut(id)[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[id.0][i];
            diff2 += (a - numeric) * (a - numeric);
            a2 += a * a;
            n2 += numeric * numeric;
        }
        let rel = diff2.sqrt() / (a2.sqrt() + n2.sqrt()).max(1e-12);
        per_param.push((store.name(id).to_string(), rel));
        if rel > worst {
            worst = rel;
            worst_param = store.name(id).to_string();
        }
    }
    GradCheckReport {
        per_param,
        worst,
        worst_param,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::dense::{Activation, DenseLayer};
    use crate::nn::init::{init_dense, InitKind};
    use crate::nn::loss::{mse, mse_grad};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn build(store: &mut ParamStore) -> (DenseLayer, DenseLayer) {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let (w0, b0) = init_dense(InitKind::Xavier, 3, 6, &mut rng);
        let (w1, b1) = init_dense(InitKind::Xavier, 6, 4, &mut rng);
        (
            DenseLayer::new(store, "l0", 3, 6, Activation::Tanh, w0, b0),
            DenseLayer::new(store, "l1", 6, 4, Activation::Identity, w1, b1),
        )
    }

    fn data() -> (Vec<f64>, Vec<f64>) {
        let x: Vec<f64> = (0..6).map(|i| ((i as f64) * 0.8).sin()).collect();
        let y: Vec<f64> = (0..8).map(|i| ((i as f64) * 0.5).cos() * 0.3).collect();
        (x, y)
    }

    fn backprop(store: &mut ParamStore, l0: &mut DenseLayer, l1: &mut DenseLayer) {
        let (x, y) = data();
        store.zero_grads();
        let h0 = l0.forward(store, &x, 2);
        let pred = l1.forward(store, &h0, 2);
        let dy = mse_grad(&pred, &y);
        let dh = l1.backward(store, &dy);
        l0.backward(store, &dh);
    }

    #[test]
    fn clean_gradients_pass() {
        let mut store = ParamStore::new();
        let (mut l0, mut l1) = build(&mut store);
        backprop(&mut store, &mut l0, &mut l1);
        let snapshot = store.snapshot_grads();
        let (x, y) = data();
        let report = finite_diff_check(&mut store, &snapshot, 1e-6, 64, &mut |store| {
            let h0 = l0.forward_eval(store, &x, 2);
            mse(&l1.forward_eval(store, &h0, 2), &y)
        });
        assert!(report.passes(1e-4), "worst {}", report.worst);
        assert!(report.worst < 1e-6, "worst {}", report.worst);
        assert_eq!(report.per_param.len(), 4);
    }

    #[test]
    fn corrupted_gradient_is_named() {
        let mut store = ParamStore::new();
        let (mut l0, mut l1) = build(&mut store);
        backprop(&mut store, &mut l0, &mut l1);
        let mut snapshot = store.snapshot_grads();
        // Double one tensor's gradient; the report must single it out.
        for g in &mut snapshot[2] {
            *g *= 2.0;
        }
        let (x, y) = data();
        let report = finite_diff_check(&mut store, &snapshot, 1e-6, 64, &mut |store| {
            let h0 = l0.forward_eval(store, &x, 2);
            mse(&l1.forward_eval(store, &h0, 2), &y)
        });
        assert!(!report.passes(1e-4));
        assert_eq!(report.worst_param, "l1.w");
        assert!(report.worst > 1e-2);
        // The untouched tensors still check out individually.
        for (name, rel) in &report.per_param {
            if name != "l1.w" {
                assert!(*rel < 1e-6, "{name}: {rel}");
            }
        }
    }

    #[test]
    fn subsampling_still_covers_every_tensor() {
        let mut store = ParamStore::new();
        let (mut l0, mut l1) = build(&mut store);
        backprop(&mut store, &mut l0, &mut l1);
        let snapshot = store.snapshot_grads();
        let (x, y) = data();
        let report = finite_diff_check(&mut store, &snapshot, 1e-6, 3, &mut |store| {
            let h0 = l0.forward_eval(store, &x, 2);
            mse(&l1.forward_eval(store, &h0, 2), &y)
        });
        assert_eq!(report.per_param.len(), 4);
        assert!(report.passes(1e-4), "worst {}", report.worst);
    }
}
