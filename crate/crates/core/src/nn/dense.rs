//! Fully connected layer with explicit backward pass. Inputs and outputs are
//! row-major `[batch, dim]` slices.

use super::tensor::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    /// `sin(omega0 * z)`; weight init compensates for the frequency scale.
    Sine { omega0: f64 },
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sine { omega0 } => (omega0 * z).sin(),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative with respect to the preactivation.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Sine { omega0 } => omega0 * (omega0 * z).cos(),
            Activation::Tanh => 1.0 - z.tanh().powi(2),
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
    pub act: Activation,
    cache_x: Vec<f64>,
    cache_z: Vec<f64>,
    cache_batch: usize,
}

impl DenseLayer {
    /// Register weights (`rows = out_dim, cols = in_dim`) and biases under
    /// `name.w` / `name.b`.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        act: Activation,
        w: Vec<f64>,
        b: Vec<f64>,
    ) -> Self {
        let w = store.add(&format!("{name}.w"), out_dim, in_dim, w);
        let b = store.add(&format!("{name}.b"), out_dim, 1, b);
        Self {
            w,
            b,
            in_dim,
            out_dim,
            act,
            cache_x: Vec::new(),
            cache_z: Vec::new(),
            cache_batch: 0,
        }
    }

    /// Training forward: caches input and preactivation for backward.
    pub fn forward(&mut self, store: &ParamStore, x: &[f64], batch: usize) -> Vec<f64> {
        let (y, z) = self.compute(store, x, batch);
        self.cache_x = x.to_vec();
        self.cache_z = z;
        self.cache_batch = batch;
        y
    }

    /// Inference forward: no caches touched, usable through `&self`.
    pub fn forward_eval(&self, store: &ParamStore, x: &[f64], batch: usize) -> Vec<f64> {
        self.compute(store, x, batch).0
    }

    fn compute(&self, store: &ParamStore, x: &[f64], batch: usize) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(x.len(), batch * self.in_dim, "dense input shape");
        let w = store.value(self.w);
        let b = store.value(self.b);
        let mut z = vec![0.0; batch * self.out_dim];
        for s in 0..batch {
            let xs = &x[s * self.in_dim..(s + 1) * self.in_dim];
            let zs = &mut z[s * self.out_dim..(s + 1) * self.out_dim];
            for (o, zo) in zs.iter_mut().enumerate() {
                let row = &w[o * self.in_dim..(o + 1) * self.in_dim];
                let mut acc = b[o];
                for (wi, xi) in row.iter().zip(xs) {
                    acc += wi * xi;
                }
                *zo = acc;
            }
        }
        let y = z.iter().map(|&v| self.act.apply(v)).collect();
        (y, z)
    }

    /// Accumulate weight/bias gradients from `dy` and return `dx`. Must
    /// follow a caching [`forward`](Self::forward) with the same batch.
    pub fn backward(&mut self, store: &mut ParamStore, dy: &[f64]) -> Vec<f64> {
        let batch = self.cache_batch;
        assert_eq!(dy.len(), batch * self.out_dim, "dense grad shape");
        let dz: Vec<f64> = dy
            .iter()
            .zip(&self.cache_z)
            .map(|(dy, &z)| dy * self.act.derivative(z))
            .collect();

        {
            let gw = store.grad_mut(self.w);
            for s in 0..batch {
                let xs = &self.cache_x[s * self.in_dim..(s + 1) * self.in_dim];
                let dzs = &dz[s * self.out_dim..(s + 1) * self.out_dim];
                for (o, dzo) in dzs.iter().enumerate() {
                    let grow = &mut gw[o * self.in_dim..(o + 1) * self.in_dim];
                    for (g, xi) in grow.iter_mut().zip(xs) {
                        *g += dzo * xi;
                    }
                }
            }
        }
        {
            let gb = store.grad_mut(self.b);
            for s in 0..batch {
                let dzs = &dz[s * self.out_dim..(s + 1) * self.out_dim];
                for (g, dzo) in gb.iter_mut().zip(dzs) {
                    *g += dzo;
                }
            }
        }

        let w = store.value(self.w);
        let mut dx = vec![0.0; batch * self.in_dim];
        for s in 0..batch {
            let dxs = &mut dx[s * self.in_dim..(s + 1) * self.in_dim];
            let dzs = &dz[s * self.out_dim..(s + 1) * self.out_dim];
            for (o, dzo) in dzs.iter().enumerate() {
                let row = &w[o * self.in_dim..(o + 1) * self.in_dim];
                for (d, wi) in dxs.iter_mut().zip(row) {
                    *d += dzo * wi;
                }
            }
        }
        dx
    }
}
