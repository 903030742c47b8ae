//! Cosine-Gaussian kernel head. The preceding layer's output is read as a
//! list of 3-D points; each point drives a pair of kernels
//! `phi(t) = cos(w*|t - a| + b) * exp(beta*|t - c|^2)` with independent
//! parameters, and a linear map mixes all kernel responses into the output
//! vector.

use super::tensor::{ParamId, ParamStore};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Scene-derived quantities the kernel init is anchored to.
#[derive(Debug, Clone)]
pub struct KernelInit {
    /// Candidate oscillation centers (transmitter and its strongest mirror
    /// images, repeated in proportion to path energy). Kernel pairs take them
    /// round-robin, each jittered within a half-wavelength cube.
    pub anchors: Vec<[f64; 3]>,
    /// Box the model's inputs live in; envelope centers start uniform here.
    pub region_min: [f64; 3],
    pub region_max: [f64; 3],
    pub wavelength_m: f64,
    /// Carrier angular wavenumber `2*pi*f/c`, the mean initial `w`.
    pub angular_wavenumber: f64,
}

#[derive(Debug, Clone)]
pub struct KernelCombiner {
    pub a: ParamId,
    pub b: ParamId,
    pub w: ParamId,
    pub beta: ParamId,
    pub c: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
    pub n_kernels: usize,
    pub q_out: usize,
    cache_x: Vec<f64>,
    cache_phi: Vec<f64>,
    cache_r: Vec<f64>,
    cache_sin: Vec<f64>,
    cache_env: Vec<f64>,
    cache_g: Vec<f64>,
    cache_batch: usize,
}

impl KernelCombiner {
    /// `n_triples` input points produce `2*n_triples` kernels. Each pair of
    /// kernels oscillates around one anchor (jittered by half a wavelength);
    /// Gaussian centers start uniform over the input region with near-flat
    /// curvatures, clamped nonpositive after every optimizer step.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        n_triples: usize,
        q_out: usize,
        init: KernelInit,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(n_triples > 0 && q_out > 0);
        assert!(!init.anchors.is_empty());
        let k = 2 * n_triples;
        let half = init.wavelength_m / 2.0;
        let a: Vec<f64> = (0..3 * k)
            .map(|i| {
                let anchor = &init.anchors[(i / 3 / 2) % init.anchors.len()];
                anchor[i % 3] + rng.random_range(-half..=half)
            })
            .collect();
        let b: Vec<f64> = (0..k)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        let normal = Normal::new(init.angular_wavenumber, 1.0).expect("finite mean");
        let w: Vec<f64> = (0..k).map(|_| normal.sample(rng)).collect();
        // Alternate pair flavors: even pairs stay near-flat (global carriers
        // the mix can beat against), odd pairs start as localized patches a
        // few wavelengths wide (they stitch the stepwise bin sweeps). Both
        // kernels of a pair share the value so the pair keeps quadrature.
        let beta: Vec<f64> = (0..n_triples)
            .flat_map(|j| {
                let v = if j % 2 == 0 {
                    -1.0 / 1800.0
                } else {
                    let sigma = rng.random_range(2.0..=5.0) * init.wavelength_m;
                    -1.0 / (2.0 * sigma * sigma)
                };
                [v, v]
            })
            .collect();
        let c: Vec<f64> = (0..3 * k)
            .map(|i| {
                let (lo, hi) = (init.region_min[i % 3], init.region_max[i % 3]);
                if hi > lo {
                    rng.random_range(lo..=hi)
                } else {
                    lo
                }
            })
            .collect();
        let out_bound = (6.0 / (k + q_out) as f64).sqrt();
        let out_w: Vec<f64> = (0..q_out * k)
            .map(|_| rng.random_range(-out_bound..=out_bound))
            .collect();

        Self {
            a: store.add(&format!("{name}.a"), k, 3, a),
            b: store.add(&format!("{name}.b"), k, 1, b),
            w: store.add(&format!("{name}.w"), k, 1, w),
            beta: store.add(&format!("{name}.beta"), k, 1, beta),
            c: store.add(&format!("{name}.c"), k, 3, c),
            out_w: store.add(&format!("{name}.out.w"), q_out, k, out_w),
            out_b: store.add(&format!("{name}.out.b"), q_out, 1, vec![0.0; q_out]),
            n_kernels: k,
            q_out,
            cache_x: Vec::new(),
            cache_phi: Vec::new(),
            cache_r: Vec::new(),
            cache_sin: Vec::new(),
            cache_env: Vec::new(),
            cache_g: Vec::new(),
            cache_batch: 0,
        }
    }

    pub fn in_dim(&self) -> usize {
        3 * (self.n_kernels / 2)
    }

    fn responses(
        &self,
        store: &ParamStore,
        x: &[f64],
        batch: usize,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let k = self.n_kernels;
        assert_eq!(x.len(), batch * self.in_dim(), "kernel input shape");
        let a = store.value(self.a);
        let b = store.value(self.b);
        let w = store.value(self.w);
        let beta = store.value(self.beta);
        let c = store.value(self.c);
        let mut phi = vec![0.0; batch * k];
        let mut r_all = vec![0.0; batch * k];
        let mut sin_all = vec![0.0; batch * k];
        let mut env_all = vec![0.0; batch * k];
        let mut g_all = vec![0.0; batch * k];
        for s in 0..batch {
            let xs = &x[s * self.in_dim()..(s + 1) * self.in_dim()];
            for ki in 0..k {
                let t = &xs[3 * (ki / 2)..3 * (ki / 2) + 3];
                let ak = &a[3 * ki..3 * ki + 3];
                let ck = &c[3 * ki..3 * ki + 3];
                let mut r2 = 0.0;
                let mut g = 0.0;
                for d in 0..3 {
                    let ua = t[d] - ak[d];
                    let vc = t[d] - ck[d];
                    r2 += ua * ua;
                    g += vc * vc;
                }
                let r = r2.sqrt();
                let ang = w[ki] * r + b[ki];
                let env = (beta[ki] * g).exp();
                let idx = s * k + ki;
                phi[idx] = ang.cos() * env;
                r_all[idx] = r;
                sin_all[idx] = ang.sin();
                env_all[idx] = env;
                g_all[idx] = g;
            }
        }
        (phi, r_all, sin_all, env_all, g_all)
    }

    fn mix(&self, store: &ParamStore, phi: &[f64], batch: usize) -> Vec<f64> {
        let k = self.n_kernels;
        let ow = store.value(self.out_w);
        let ob = store.value(self.out_b);
        let mut y = vec![0.0; batch * self.q_out];
        for s in 0..batch {
            let ph = &phi[s * k..(s + 1) * k];
            let ys = &mut y[s * self.q_out..(s + 1) * self.q_out];
            for (o, yo) in ys.iter_mut().enumerate() {
                let row = &ow[o * k..(o + 1) * k];
                let mut acc = ob[o];
                for (wi, p) in row.iter().zip(ph) {
                    acc += wi * p;
                }
                *yo = acc;
            }
        }
        y
    }

    pub fn forward(&mut self, store: &ParamStore, x: &[f64], batch: usize) -> Vec<f64> {
        let (phi, r, sin, env, g) = self.responses(store, x, batch);
        let y = self.mix(store, &phi, batch);
        self.cache_x = x.to_vec();
        self.cache_phi = phi;
        self.cache_r = r;
        self.cache_sin = sin;
        self.cache_env = env;
        self.cache_g = g;
        self.cache_batch = batch;
        y
    }

    pub fn forward_eval(&self, store: &ParamStore, x: &[f64], batch: usize) -> Vec<f64> {
        let (phi, ..) = self.responses(store, x, batch);
        self.mix(store, &phi, batch)
    }

    pub fn backward(&mut self, store: &mut ParamStore, dy: &[f64]) -> Vec<f64> {
        let k = self.n_kernels;
        let batch = self.cache_batch;
        assert_eq!(dy.len(), batch * self.q_out, "kernel grad shape");

        // Mixer gradients plus dL/dphi.
        let mut dphi = vec![0.0; batch * k];
        {
            let ow = store.value(self.out_w);
            for s in 0..batch {
                let dys = &dy[s * self.q_out..(s + 1) * self.q_out];
                let dph = &mut dphi[s * k..(s + 1) * k];
                for (o, dyo) in dys.iter().enumerate() {
                    let row = &ow[o * k..(o + 1) * k];
                    for (d, wi) in dph.iter_mut().zip(row) {
                        *d += dyo * wi;
                    }
                }
            }
        }
        {
            let gw = store.grad_mut(self.out_w);
            for s in 0..batch {
                let dys = &dy[s * self.q_out..(s + 1) * self.q_out];
                let ph = &self.cache_phi[s * k..(s + 1) * k];
                for (o, dyo) in dys.iter().enumerate() {
                    let grow = &mut gw[o * k..(o + 1) * k];
                    for (g, p) in grow.iter_mut().zip(ph) {
                        *g += dyo * p;
                    }
                }
            }
        }
        {
            let gb = store.grad_mut(self.out_b);
            for s in 0..batch {
                let dys = &dy[s * self.q_out..(s + 1) * self.q_out];
                for (g, dyo) in gb.iter_mut().zip(dys) {
                    *g += dyo;
                }
            }
        }

        // Kernel parameter gradients, accumulated locally first so the store
        // is borrowed one tensor at a time.
        let mut da = vec![0.0; 3 * k];
        let mut db = vec![0.0; k];
        let mut dw = vec![0.0; k];
        let mut dbeta = vec![0.0; k];
        let mut dc = vec![0.0; 3 * k];
        let mut dx = vec![0.0; batch * self.in_dim()];
        {
            let a = store.value(self.a);
            let w = store.value(self.w);
            let beta = store.value(self.beta);
            let c = store.value(self.c);
            for s in 0..batch {
                let xs = &self.cache_x[s * self.in_dim()..(s + 1) * self.in_dim()];
                let dxs = &mut dx[s * self.in_dim()..(s + 1) * self.in_dim()];
                for ki in 0..k {
                    let idx = s * k + ki;
                    let dp = dphi[idx];
                    if dp == 0.0 {
                        continue;
                    }
                    let phi = self.cache_phi[idx];
                    let r = self.cache_r[idx];
                    let sin = self.cache_sin[idx];
                    let env = self.cache_env[idx];
                    let g = self.cache_g[idx];
                    let t = &xs[3 * (ki / 2)..3 * (ki / 2) + 3];

                    db[ki] += dp * (-sin * env);
                    dw[ki] += dp * (-sin * r * env);
                    dbeta[ki] += dp * phi * g;
                    // Radial direction is undefined at r = 0; the cosine term
                    // is flat there, so its contribution is zero.
                    let radial = if r > 0.0 {
                        dp * -sin * w[ki] * env / r
                    } else {
                        0.0
                    };
                    for d in 0..3 {
                        let ua = t[d] - a[3 * ki + d];
                        let vc = t[d] - c[3 * ki + d];
                        da[3 * ki + d] += -radial * ua;
                        dc[3 * ki + d] += dp * -2.0 * beta[ki] * vc * phi;
                        dxs[3 * (ki / 2) + d] += radial * ua + dp * 2.0 * beta[ki] * vc * phi;
                    }
                }
            }
        }
        for (g, v) in store.grad_mut(self.a).iter_mut().zip(&da) {
            *g += v;
        }
        for (g, v) in store.grad_mut(self.b).iter_mut().zip(&db) {
            *g += v;
        }
        for (g, v) in store.grad_mut(self.w).iter_mut().zip(&dw) {
            *g += v;
        }
        for (g, v) in store.grad_mut(self.beta).iter_mut().zip(&dbeta) {
            *g += v;
        }
        for (g, v) in store.grad_mut(self.c).iter_mut().zip(&dc) {
            *g += v;
        }
        dx
    }

    /// Keep every Gaussian envelope nonincreasing; call after each optimizer
    /// step.
    pub fn clamp_beta(&self, store: &mut ParamStore) {
        for v in store.value_mut(self.beta) {
            if *v > 0.0 {
                *v = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    // Anchors sit scene-distances away while the input region hugs the
    // origin, so envelopes stay alive for the test inputs below.
    fn test_init() -> KernelInit {
        KernelInit {
            anchors: vec![[45.0, 48.0, 37.0], [45.0, 48.0, -37.0]],
            region_min: [-1.0, -1.0, -1.0],
            region_max: [1.0, 1.0, 1.0],
            wavelength_m: 0.1,
            angular_wavenumber: 62.88,
        }
    }

    fn tiny(store: &mut ParamStore) -> KernelCombiner {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        KernelCombiner::new(store, "k", 2, 5, test_init(), &mut rng)
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn init_ranges() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let comb = KernelCombiner::new(&mut store, "k", 100, 7, test_init(), &mut rng);
        assert_eq!(comb.n_kernels, 200);
        assert_eq!(comb.in_dim(), 300);
        let init = test_init();
        // Pairs alternate anchors: pair index selects from the anchor list.
        for (i, v) in store.value(comb.a).iter().enumerate() {
            let anchor = &init.anchors[(i / 6) % 2];
            assert!((v - anchor[i % 3]).abs() <= init.wavelength_m / 2.0);
        }
        for v in store.value(comb.b) {
            assert!((0.0..std::f64::consts::TAU).contains(v));
        }
        let w = store.value(comb.w);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        assert!((mean - 62.88).abs() < 0.5, "w mean {mean}");
        let beta = store.value(comb.beta);
        let sharp_lo = -1.0 / (2.0 * (2.0 * init.wavelength_m).powi(2));
        let sharp_hi = -1.0 / (2.0 * (5.0 * init.wavelength_m).powi(2));
        for (i, v) in beta.iter().enumerate() {
            if (i / 2) % 2 == 0 {
                assert_eq!(*v, -1.0 / 1800.0, "flat pair beta[{i}]");
            } else {
                assert!((sharp_lo..=sharp_hi).contains(v), "sharp pair beta[{i}]={v}");
            }
            // Pair mates share the value.
            if i % 2 == 1 {
                assert_eq!(beta[i - 1], *v);
            }
        }
        for (i, v) in store.value(comb.c).iter().enumerate() {
            assert!(
                (init.region_min[i % 3]..=init.region_max[i % 3]).contains(v),
                "c[{i}]={v}"
            );
        }
    }

    #[test]
    fn response_matches_closed_form() {
        let mut store = ParamStore::new();
        let mut comb = tiny(&mut store);
        // One kernel made transparent by hand: out row picks kernel 2 only.
        store.value_mut(comb.out_w).fill(0.0);
        store.value_mut(comb.out_b).fill(0.0);
        let k = comb.n_kernels;
        store.value_mut(comb.out_w)[0 * k + 2] = 1.0;
        let x = vec![0.3, -0.2, 0.5, 0.1, 0.9, -0.4];
        let y = comb.forward(&store, &x, 1);

        // Kernel 2 reads triple 1.
        let t = [0.1, 0.9, -0.4];
        let a = &store.value(comb.a)[6..9];
        let c = &store.value(comb.c)[6..9];
        let r = ((t[0] - a[0]).powi(2) + (t[1] - a[1]).powi(2) + (t[2] - a[2]).powi(2)).sqrt();
        let g = (t[0] - c[0]).powi(2) + (t[1] - c[1]).powi(2) + (t[2] - c[2]).powi(2);
        let expect = (store.value(comb.w)[2] * r + store.value(comb.b)[2]).cos()
            * (store.value(comb.beta)[2] * g).exp();
        assert!(close(y[0], expect, 1e-12), "{} vs {expect}", y[0]);
        for v in &y[1..] {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut store = ParamStore::new();
        let mut comb = tiny(&mut store);
        // Make curvatures big enough that envelope grads are well above
        // finite-difference noise.
        for v in store.value_mut(comb.beta) {
            *v = -0.37;
        }
        let x: Vec<f64> = (0..18).map(|i| ((i as f64) * 0.9).sin() * 0.8).collect();
        let batch = 3;

        let y = comb.forward(&store, &x, batch);
        let dy = vec![1.0; y.len()];
        let dx = comb.backward(&mut store, &dy);

        let h = 1e-6;
        let eval =
            |store: &ParamStore, x: &[f64]| comb.forward_eval(store, x, batch).iter().sum::<f64>();
        for id in [
            comb.a, comb.b, comb.w, comb.beta, comb.c, comb.out_w, comb.out_b,
        ] {
            for i in 0..store.value(id).len() {
                let orig = store.value(id)[i];
                store.value_mut(id)[i] = orig + h;
                let up = eval(&store, &x);
                store.value_mut(id)[i] = orig - h;
                let down = eval(&store, &x);
                store.value_mut(id)[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = store.grad(id)[i];
                assert!(
                    close(analytic, numeric, 1e-4),
                    "{} [{i}]: {analytic} vs {numeric}",
                    store.name(id)
                );
            }
        }
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let up = eval(&store, &xp);
            xp[i] = x[i] - h;
            let down = eval(&store, &xp);
            let numeric = (up - down) / (2.0 * h);
            assert!(
                close(dx[i], numeric, 1e-4),
                "dx[{i}]: {} vs {numeric}",
                dx[i]
            );
        }
    }

    #[test]
    fn zero_radius_stays_finite() {
        let mut store = ParamStore::new();
        let mut comb = tiny(&mut store);
        // Place the input triple exactly on kernel 0's oscillation center.
        let a0: Vec<f64> = store.value(comb.a)[0..3].to_vec();
        let mut x = vec![0.0; 6];
        x[..3].copy_from_slice(&a0);
        let y = comb.forward(&store, &x, 1);
        assert!(y.iter().all(|v| v.is_finite()));
        let dx = comb.backward(&mut store, &vec![1.0; y.len()]);
        assert!(dx.iter().all(|v| v.is_finite()));
        for id in [comb.a, comb.b, comb.w, comb.beta, comb.c] {
            assert!(store.grad(id).iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn pairs_read_their_own_triple() {
        let mut store = ParamStore::new();
        let mut comb = tiny(&mut store);
        // Route only kernel 3 (pair 1) to the output.
        store.value_mut(comb.out_w).fill(0.0);
        let k = comb.n_kernels;
        store.value_mut(comb.out_w)[3] = 1.0;
        assert_eq!(k, 4);
        let x = vec![0.2, 0.1, -0.3, 0.4, -0.5, 0.6];
        comb.forward(&store, &x, 1);
        let dx = comb.backward(&mut store, &vec![1.0; 5]);
        assert_eq!(&dx[0..3], &[0.0, 0.0, 0.0]);
        assert!(dx[3..].iter().any(|v| *v != 0.0));
    }

    #[test]
    fn beta_clamp_only_lowers() {
        let mut store = ParamStore::new();
        let comb = tiny(&mut store);
        store.value_mut(comb.beta).copy_from_slice(&[0.4, -0.2, 0.0, -5.0]);
        comb.clamp_beta(&mut store);
        assert_eq!(store.value(comb.beta), [0.0, -0.2, 0.0, -5.0]);
    }
}
