//! Predictor assembly: declarative model specs, seeded builders, parameter
//! and arithmetic-cost accounting, and checkpoint I/O.
//!
//! Four families cover everything the experiments run:
//! - `Cgrbf`: sine front ending in 3-D points, cosine-Gaussian kernel head.
//! - `Siren`: sine dense stack with a linear output map.
//! - `Ae`: sigmoid autoencoder over CIR vectors with a tiny spatial code.
//! - `Dense`: plain tanh/sigmoid regressor (code mappers, array mappers).

use crate::error::{Error, Result};
use crate::nn::{
    init_dense, Activation, Adam, DenseLayer, InitKind, KernelCombiner, KernelInit, ParamStore,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const OMEGA0: f64 = 30.0;
/// Desk-strip sine models face phase slopes up to ~75 rad per normalized
/// half-region (the south-face reflection); 60 lets the stack reach them by
/// composition, while 90+ starts hallucinating between samples.
const OMEGA0_DESK: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenseAct {
    Tanh,
    Sigmoid,
}

impl DenseAct {
    fn activation(self) -> Activation {
        match self {
            DenseAct::Tanh => Activation::Tanh,
            DenseAct::Sigmoid => Activation::Sigmoid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Smooth front `3 -> front[..]` whose last width is read as
    /// `front.last()/3` points, each feeding a pair of cosine-Gaussian
    /// kernels, mixed linearly into `q_out` outputs.
    Cgrbf {
        front: Vec<usize>,
        q_out: usize,
        /// Candidate oscillation centers (transmitter and mirror images,
        /// repeated by energy); kernel pairs start around them round-robin.
        anchors: Vec<[f64; 3]>,
        /// Box the input coordinates live in (meters).
        region_min: [f64; 3],
        region_max: [f64; 3],
        wavelength_m: f64,
    },
    /// Sine stack `in_dim -> hidden[..] -> q_out` with a linear output.
    Siren {
        in_dim: usize,
        hidden: Vec<usize>,
        q_out: usize,
        /// First-layer frequency scale. Inputs are normalized to [-1, 1], so
        /// this bounds the spatial frequency (radians per half-region) the
        /// first layer can express; later layers init-compensate as usual.
        omega0: f64,
    },
    /// Sigmoid autoencoder `q -> pre_code[..] -> code -> post_code[..] -> q`
    /// with a linear reconstruction layer.
    Ae {
        pre_code: Vec<usize>,
        code: usize,
        post_code: Vec<usize>,
        q: usize,
    },
    /// Plain dense regressor with a linear output.
    Dense {
        in_dim: usize,
        hidden: Vec<usize>,
        out_dim: usize,
        act: DenseAct,
    },
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        match self {
            ModelSpec::Cgrbf {
                front,
                q_out,
                anchors,
                region_min,
                region_max,
                wavelength_m,
            } => {
                if front.is_empty() || front.iter().any(|&w| w == 0) {
                    return bad("cgrbf front must be nonempty positive widths".into());
                }
                let last = *front.last().unwrap();
                if last % 3 != 0 {
                    return bad(format!(
                        "cgrbf front must end in a multiple of 3 (3-D points), got {last}"
                    ));
                }
                if *q_out == 0 {
                    return bad("q_out must be positive".into());
                }
                if !(wavelength_m.is_finite() && *wavelength_m > 0.0) {
                    return bad(format!("wavelength must be positive, got {wavelength_m}"));
                }
                if anchors.is_empty() || anchors.iter().flatten().any(|v| !v.is_finite()) {
                    return bad("cgrbf needs at least one finite anchor".into());
                }
                for d in 0..3 {
                    if !(region_min[d].is_finite()
                        && region_max[d].is_finite()
                        && region_min[d] <= region_max[d])
                    {
                        return bad("cgrbf region must be an ordered finite box".into());
                    }
                }
            }
            ModelSpec::Siren {
                in_dim,
                hidden,
                q_out,
                omega0,
            } => {
                if *in_dim == 0 || *q_out == 0 || hidden.is_empty() {
                    return bad("siren needs positive in/out dims and hidden layers".into());
                }
                if hidden.iter().any(|&w| w == 0) {
                    return bad("siren hidden widths must be positive".into());
                }
                if !(omega0.is_finite() && *omega0 > 0.0) {
                    return bad(format!("siren omega0 must be positive, got {omega0}"));
                }
            }
            ModelSpec::Ae {
                pre_code,
                code,
                post_code,
                q,
            } => {
                if *code == 0 || *q == 0 {
                    return bad("ae code and q must be positive".into());
                }
                if pre_code.iter().chain(post_code).any(|&w| w == 0) {
                    return bad("ae widths must be positive".into());
                }
            }
            ModelSpec::Dense {
                in_dim,
                hidden,
                out_dim,
                ..
            } => {
                if *in_dim == 0 || *out_dim == 0 {
                    return bad("dense needs positive in/out dims".into());
                }
                if hidden.iter().any(|&w| w == 0) {
                    return bad("dense hidden widths must be positive".into());
                }
            }
        }
        Ok(())
    }

    pub fn in_dim(&self) -> usize {
        match self {
            ModelSpec::Cgrbf { .. } => 3,
            ModelSpec::Siren { in_dim, .. } => *in_dim,
            ModelSpec::Ae { q, .. } => *q,
            ModelSpec::Dense { in_dim, .. } => *in_dim,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            ModelSpec::Cgrbf { q_out, .. } => *q_out,
            ModelSpec::Siren { q_out, .. } => *q_out,
            ModelSpec::Ae { q, .. } => *q,
            ModelSpec::Dense { out_dim, .. } => *out_dim,
        }
    }

    /// The dense chain dimensions, input first, excluding the output map.
    fn chain(&self) -> Vec<usize> {
        match self {
            ModelSpec::Cgrbf { front, .. } => {
                let mut v = vec![3];
                v.extend(front);
                v
            }
            ModelSpec::Siren { in_dim, hidden, .. } => {
                let mut v = vec![*in_dim];
                v.extend(hidden);
                v
            }
            ModelSpec::Ae {
                pre_code,
                code,
                post_code,
                q,
            } => {
                let mut v = vec![*q];
                v.extend(pre_code);
                v.push(*code);
                v.extend(post_code);
                v
            }
            ModelSpec::Dense { in_dim, hidden, .. } => {
                let mut v = vec![*in_dim];
                v.extend(hidden);
                v
            }
        }
    }
}

/// Closed-form trainable-scalar count for a spec.
pub fn expected_param_count(spec: &ModelSpec) -> usize {
    let chain = spec.chain();
    let mut n: usize = chain.windows(2).map(|w| (w[0] + 1) * w[1]).sum();
    let last = *chain.last().unwrap();
    match spec {
        ModelSpec::Cgrbf { q_out, .. } => {
            let kernels = 2 * (last / 3);
            // Per kernel: 3-D oscillation center, phase, frequency,
            // curvature, 3-D Gaussian center.
            n += 9 * kernels;
            n += (kernels + 1) * q_out;
        }
        _ => {
            n += (last + 1) * spec.out_dim();
        }
    }
    n
}

/// Arithmetic cost under the reporting conventions used throughout: one
/// multiplication per weight visit, kernels booked as one activation per
/// pair and `q_out` mixer multiplications per pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Complexity {
    pub mults: usize,
    pub activations: usize,
}

pub fn complexity_count(spec: &ModelSpec) -> Complexity {
    let chain = spec.chain();
    let mut mults: usize = chain.windows(2).map(|w| w[0] * w[1]).sum();
    let mut activations: usize = chain.iter().skip(1).sum();
    let last = *chain.last().unwrap();
    match spec {
        ModelSpec::Cgrbf { q_out, .. } => {
            let pairs = last / 3;
            mults += q_out * pairs;
            activations += pairs;
        }
        _ => {
            mults += last * spec.out_dim();
        }
    }
    Complexity {
        mults,
        activations,
    }
}

enum Head {
    Linear(DenseLayer),
    Kernel(KernelCombiner),
}

pub struct Model {
    pub spec: ModelSpec,
    layers: Vec<DenseLayer>,
    head: Head,
    /// For autoencoders: index of the code layer inside `layers`.
    code_layer: Option<usize>,
    /// Kernel models add the raw input point to every output triple of the
    /// chain, so virtual source points are parameterized as offsets from the
    /// user position. Costs no parameters or multiplications.
    input_skip_to_triples: bool,
}

/// Build a model with seeded initialization. The same spec and seed always
/// produce bit-identical parameters.
pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<(ParamStore, Model)> {
    spec.validate()?;
    let mut store = ParamStore::new();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let mut code_layer = None;

    let add_dense = |store: &mut ParamStore,
                         layers: &mut Vec<DenseLayer>,
                         in_dim: usize,
                         out_dim: usize,
                         act: Activation,
                         kind: InitKind,
                         rng: &mut ChaCha12Rng| {
        let (w, b) = init_dense(kind, in_dim, out_dim, rng);
        let name = format!("l{}", layers.len());
        layers.push(DenseLayer::new(store, &name, in_dim, out_dim, act, w, b));
    };

    let head = match spec {
        ModelSpec::Cgrbf {
            front,
            q_out,
            anchors,
            region_min,
            region_max,
            wavelength_m,
        } => {
            // Smooth tanh trunk, then a linear layer whose output triples are
            // offsets added to the raw input point (the model's input skip),
            // so every virtual source point starts at the user plus at most
            // half a wavelength. Path phase advances one cycle per wavelength
            // of distance, so a point that starts on the user is phase-locked
            // to the direct path from step one, and the trunk only has to
            // move points at the slow rate the reflection geometry varies.
            let mut prev = 3;
            let n_front = front.len();
            // Inputs are meter coordinates; damp the first layer so tanh
            // starts in its linear range at scene scale.
            let coord_scale = region_min
                .iter()
                .chain(region_max.iter())
                .fold(1.0f64, |m, v| m.max(v.abs()));
            for (i, &width) in front.iter().enumerate() {
                if i + 1 == n_front {
                    let (mut w, mut b) = init_dense(InitKind::Xavier, prev, width, &mut rng);
                    let half = wavelength_m / 2.0;
                    // Offsets must start sub-wavelength or the alignment is
                    // randomized before training begins.
                    let damp = half / if i == 0 { coord_scale } else { 1.0 };
                    for wv in w.iter_mut() {
                        *wv *= damp;
                    }
                    for bv in b.iter_mut() {
                        *bv = rng.random_range(-half..=half);
                    }
                    let name = format!("l{}", layers.len());
                    layers.push(DenseLayer::new(
                        &mut store,
                        &name,
                        prev,
                        width,
                        Activation::Identity,
                        w,
                        b,
                    ));
                } else {
                    let (mut w, b) = init_dense(InitKind::Xavier, prev, width, &mut rng);
                    if i == 0 {
                        for wv in w.iter_mut() {
                            *wv /= coord_scale;
                        }
                    }
                    let name = format!("l{}", layers.len());
                    layers.push(DenseLayer::new(
                        &mut store,
                        &name,
                        prev,
                        width,
                        Activation::Tanh,
                        w,
                        b,
                    ));
                }
                prev = width;
            }
            let init = KernelInit {
                anchors: anchors.clone(),
                region_min: *region_min,
                region_max: *region_max,
                wavelength_m: *wavelength_m,
                angular_wavenumber: std::f64::consts::TAU / wavelength_m,
            };
            Head::Kernel(KernelCombiner::new(
                &mut store,
                "kernel",
                prev / 3,
                *q_out,
                init,
                &mut rng,
            ))
        }
        ModelSpec::Siren {
            in_dim,
            hidden,
            q_out,
            omega0,
        } => {
            let mut prev = *in_dim;
            for (i, &width) in hidden.iter().enumerate() {
                let kind = if i == 0 {
                    InitKind::SineFirst { omega0: *omega0 }
                } else {
                    InitKind::SineHidden { omega0: *omega0 }
                };
                add_dense(
                    &mut store,
                    &mut layers,
                    prev,
                    width,
                    Activation::Sine { omega0: *omega0 },
                    kind,
                    &mut rng,
                );
                prev = width;
            }
            let (w, b) = init_dense(InitKind::Xavier, prev, *q_out, &mut rng);
            Head::Linear(DenseLayer::new(
                &mut store,
                "out",
                prev,
                *q_out,
                Activation::Identity,
                w,
                b,
            ))
        }
        ModelSpec::Ae {
            pre_code,
            code,
            post_code,
            q,
        } => {
            let mut prev = *q;
            for &width in pre_code {
                add_dense(
                    &mut store,
                    &mut layers,
                    prev,
                    width,
                    Activation::Sigmoid,
                    InitKind::Xavier,
                    &mut rng,
                );
                prev = width;
            }
            add_dense(
                &mut store,
                &mut layers,
                prev,
                *code,
                Activation::Sigmoid,
                InitKind::Xavier,
                &mut rng,
            );
            code_layer = Some(layers.len() - 1);
            prev = *code;
            for &width in post_code {
                add_dense(
                    &mut store,
                    &mut layers,
                    prev,
                    width,
                    Activation::Sigmoid,
                    InitKind::Xavier,
                    &mut rng,
                );
                prev = width;
            }
            let (w, b) = init_dense(InitKind::Xavier, prev, *q, &mut rng);
            Head::Linear(DenseLayer::new(
                &mut store,
                "out",
                prev,
                *q,
                Activation::Identity,
                w,
                b,
            ))
        }
        ModelSpec::Dense {
            in_dim,
            hidden,
            out_dim,
            act,
        } => {
            let mut prev = *in_dim;
            for &width in hidden {
                add_dense(
                    &mut store,
                    &mut layers,
                    prev,
                    width,
                    act.activation(),
                    InitKind::Xavier,
                    &mut rng,
                );
                prev = width;
            }
            let (w, b) = init_dense(InitKind::Xavier, prev, *out_dim, &mut rng);
            Head::Linear(DenseLayer::new(
                &mut store,
                "out",
                prev,
                *out_dim,
                Activation::Identity,
                w,
                b,
            ))
        }
    };

    Ok((
        store,
        Model {
            spec: spec.clone(),
            layers,
            head,
            code_layer,
            input_skip_to_triples: matches!(spec, ModelSpec::Cgrbf { .. }),
        },
    ))
}

impl Model {
    pub fn in_dim(&self) -> usize {
        self.spec.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.spec.out_dim()
    }

    pub fn param_count(&self, store: &ParamStore) -> usize {
        store.n_scalars()
    }

    fn add_triple_skip(&self, x: &[f64], h: &mut [f64], batch: usize) {
        let dim = h.len() / batch;
        for s in 0..batch {
            for t in 0..dim / 3 {
                for ax in 0..3 {
                    h[s * dim + 3 * t + ax] += x[s * 3 + ax];
                }
            }
        }
    }

    /// Training forward; caches activations for [`backward`](Self::backward).
    pub fn forward(&mut self, store: &ParamStore, x: &[f64], batch: usize) -> Vec<f64> {
        let mut h = x.to_vec();
        for layer in &mut self.layers {
            h = layer.forward(store, &h, batch);
        }
        if self.input_skip_to_triples {
            self.add_triple_skip(x, &mut h, batch);
        }
        match &mut self.head {
            Head::Linear(l) => l.forward(store, &h, batch),
            Head::Kernel(k) => k.forward(store, &h, batch),
        }
    }

    pub fn forward_eval(&self, store: &ParamStore, x: &[f64], batch: usize) -> Vec<f64> {
        let mut h = x.to_vec();
        for layer in &self.layers {
            h = layer.forward_eval(store, &h, batch);
        }
        if self.input_skip_to_triples {
            self.add_triple_skip(x, &mut h, batch);
        }
        match &self.head {
            Head::Linear(l) => l.forward_eval(store, &h, batch),
            Head::Kernel(k) => k.forward_eval(store, &h, batch),
        }
    }

    /// Accumulate gradients for the last cached forward and return dL/dx.
    pub fn backward(&mut self, store: &mut ParamStore, dy: &[f64]) -> Vec<f64> {
        let mut d = match &mut self.head {
            Head::Linear(l) => l.backward(store, dy),
            Head::Kernel(k) => k.backward(store, dy),
        };
        let skip_grad = if self.input_skip_to_triples {
            let dim = self.layers.last().map_or(0, |l| l.out_dim);
            let batch = d.len() / dim.max(1);
            let mut dx = vec![0.0; batch * 3];
            for s in 0..batch {
                for t in 0..dim / 3 {
                    for ax in 0..3 {
                        dx[s * 3 + ax] += d[s * dim + 3 * t + ax];
                    }
                }
            }
            Some(dx)
        } else {
            None
        };
        for layer in self.layers.iter_mut().rev() {
            d = layer.backward(store, &d);
        }
        if let Some(dx) = skip_grad {
            for (dv, sv) in d.iter_mut().zip(&dx) {
                *dv += sv;
            }
        }
        d
    }

    /// Constraint projection after each optimizer step.
    pub fn post_update(&self, store: &mut ParamStore) {
        if let Head::Kernel(k) = &self.head {
            k.clamp_beta(store);
        }
    }

    /// Per-tensor step-size policy for the optimizer.
    ///
    /// Kernel models keep phase-critical geometry almost still: a
    /// half-wavelength drift of an oscillation center flips its phase, so
    /// uniform Adam steps turn those tensors into noise long before the
    /// mixing weights can learn. Envelope centers and the linear mix keep
    /// full-size steps; curvatures move slowly enough to sharpen without
    /// dying.
    ///
    /// Sine stacks get the same treatment for the same reason: hidden
    /// weights init at sqrt(6/fan)/omega0, so a full-size Adam step moves
    /// them by a large fraction of their own scale each iteration and the
    /// stack never settles. The linear output keeps full-size steps.
    pub fn tune_step_sizes(&self, opt: &mut Adam) {
        if let Head::Kernel(k) = &self.head {
            for l in &self.layers {
                opt.set_scale(l.w, 0.02);
                opt.set_scale(l.b, 0.02);
            }
            opt.set_scale(k.a, 0.02);
            opt.set_scale(k.w, 0.02);
            opt.set_scale(k.beta, 0.3);
            return;
        }
        for l in &self.layers {
            if matches!(l.act, Activation::Sine { .. }) {
                opt.set_scale(l.w, 0.1);
                opt.set_scale(l.b, 0.1);
            }
        }
    }

    /// Autoencoder input-to-code pass (through the code layer inclusive).
    pub fn encode_eval(&self, store: &ParamStore, x: &[f64], batch: usize) -> Vec<f64> {
        let code = self.code_layer.expect("not an autoencoder");
        let mut h = x.to_vec();
        for layer in &self.layers[..=code] {
            h = layer.forward_eval(store, &h, batch);
        }
        h
    }

    /// Autoencoder code-to-output pass (everything after the code layer).
    pub fn decode_eval(&self, store: &ParamStore, code_vals: &[f64], batch: usize) -> Vec<f64> {
        let code = self.code_layer.expect("not an autoencoder");
        let mut h = code_vals.to_vec();
        for layer in &self.layers[code + 1..] {
            h = layer.forward_eval(store, &h, batch);
        }
        match &self.head {
            Head::Linear(l) => l.forward_eval(store, &h, batch),
            Head::Kernel(k) => k.forward_eval(store, &h, batch),
        }
    }

    pub fn code_dim(&self) -> Option<usize> {
        self.code_layer.map(|i| self.layers[i].out_dim)
    }

    /// Re-derive the arithmetic cost by walking the built layers' actual
    /// shapes. Must agree exactly with [`complexity_count`] of the spec.
    pub fn instrumented_complexity(&self, store: &ParamStore) -> Complexity {
        let mut mults = 0;
        let mut activations = 0;
        for layer in &self.layers {
            let meta = store.meta(layer.w);
            mults += meta.rows * meta.cols;
            // Every chain layer occupies an activation slot, the virtual-point
            // layer included; only the linear output head is free.
            activations += meta.rows;
        }
        match &self.head {
            Head::Linear(l) => {
                let meta = store.meta(l.w);
                mults += meta.rows * meta.cols;
                if l.act != Activation::Identity {
                    activations += meta.rows;
                }
            }
            Head::Kernel(k) => {
                let pairs = k.n_kernels / 2;
                mults += k.q_out * pairs;
                activations += pairs;
            }
        }
        Complexity {
            mults,
            activations,
        }
    }
}

/// Single-antenna CIR length shared by the bundled presets.
pub const PRESET_Q: usize = 182;
const MIMO_Q: usize = 64 * PRESET_Q;

/// Kernel anchor candidates for a scene and user region: the transmitter
/// plus its mirror image for every path reaching probe positions (region
/// center and footprint corners). Each image is repeated in proportion to
/// its share of received energy, so a round-robin walk over the list spreads
/// kernels the way the channel spreads power.
pub fn scene_anchors(scene: &crate::scene::Scene, region: &crate::geometry::Box3) -> Vec<[f64; 3]> {
    use crate::geometry::Vec3;
    let probes = [
        Vec3::new(
            0.5 * (region.min.x + region.max.x),
            0.5 * (region.min.y + region.max.y),
            region.min.z,
        ),
        Vec3::new(region.min.x, region.min.y, region.min.z),
        Vec3::new(region.max.x, region.min.y, region.min.z),
        Vec3::new(region.min.x, region.max.y, region.min.z),
        Vec3::new(region.max.x, region.max.y, region.min.z),
    ];
    let mut images: Vec<([f64; 3], f64)> = Vec::new();
    for p in probes {
        let Ok(paths) = crate::raytrace::trace_paths(scene, p) else {
            continue;
        };
        for path in paths {
            let mut img = scene.bs_position;
            for &sid in &path.surface_ids {
                img = crate::raytrace::mirror_point(img, &scene.surfaces[sid]);
            }
            let img = [img.x, img.y, img.z];
            let e = path.gain_re * path.gain_re + path.gain_im * path.gain_im;
            if let Some(slot) = images.iter_mut().find(|(a, _)| {
                (a[0] - img[0]).abs() + (a[1] - img[1]).abs() + (a[2] - img[2]).abs() < 1e-6
            }) {
                slot.1 += e;
            } else {
                images.push((img, e));
            }
        }
    }
    if images.is_empty() {
        let bs = scene.bs_position;
        return vec![[bs.x, bs.y, bs.z]];
    }
    images.sort_by(|x, y| y.1.total_cmp(&x.1));
    let total: f64 = images.iter().map(|(_, e)| e).sum();
    let mut anchors = Vec::new();
    for (img, e) in &images {
        let reps = ((e / total * 24.0).round() as usize).max(1);
        anchors.extend(std::iter::repeat_n(*img, reps));
    }
    anchors
}

/// Kernel-model spec wired to a scene: anchors harvested from probe traces,
/// the given input region, and the scene's carrier wavelength.
pub fn cgrbf_spec_for_scene(
    scene: &crate::scene::Scene,
    region: &crate::geometry::Box3,
    front: &[usize],
    q_out: usize,
) -> ModelSpec {
    ModelSpec::Cgrbf {
        front: front.to_vec(),
        q_out,
        anchors: scene_anchors(scene, region),
        region_min: [region.min.x, region.min.y, region.min.z],
        region_max: [region.max.x, region.max.y, region.max.z],
        wavelength_m: scene.wavelength_m(),
    }
}

fn cgrbf(front: &[usize], q_out: usize) -> ModelSpec {
    let scene = crate::scene::paper_scene();
    let region = scene.ue_region;
    cgrbf_spec_for_scene(&scene, &region, front, q_out)
}

fn cgrbf_desk(front: &[usize], q_out: usize) -> ModelSpec {
    let scene = crate::scene::paper_scene();
    let region = crate::scene::desk_region(&scene);
    cgrbf_spec_for_scene(&scene, &region, front, q_out)
}

/// Named architectures: full-scale reference models, parameter-budget "lite"
/// variants, desk-scale experiment models, array mappers, and minis for
/// gradient checking.
pub fn model_preset(name: &str) -> Result<ModelSpec> {
    let spec = match name {
        "cgrbf_full" => cgrbf(&[256, 512, 900], PRESET_Q),
        "siren_full" => ModelSpec::Siren {
            in_dim: 3,
            hidden: vec![380, 512, 512, 512, 256],
            q_out: PRESET_Q,
            omega0: OMEGA0,
        },
        "ae_full" => ModelSpec::Ae {
            pre_code: vec![128, 32],
            code: 3,
            post_code: vec![32, 128],
            q: PRESET_Q,
        },
        "pos2code_full" => ModelSpec::Dense {
            in_dim: 3,
            hidden: vec![128, 256, 256, 128],
            out_dim: 3,
            act: DenseAct::Tanh,
        },
        "cgrbf_lite" => cgrbf(&[128, 256, 600], PRESET_Q),
        "siren_lite" => ModelSpec::Siren {
            in_dim: 3,
            hidden: vec![150, 256, 300, 256],
            q_out: PRESET_Q,
            omega0: OMEGA0,
        },
        "cgrbf_mimo" => {
            let scene = crate::scene::paper_scene_mimo();
            let region = scene.ue_region;
            cgrbf_spec_for_scene(&scene, &region, &[256, 512, 1050], MIMO_Q)
        }
        "siren_mimo" => ModelSpec::Siren {
            in_dim: 3,
            hidden: vec![512, 768, 1024, 768, 512],
            q_out: MIMO_Q,
            omega0: OMEGA0,
        },
        "mapper_2" => mapper(2),
        "mapper_4" => mapper(4),
        "mapper_8" => mapper(8),
        "cgrbf_desk" => cgrbf_desk(&[900], PRESET_Q),
        "siren_desk" => ModelSpec::Siren {
            in_dim: 3,
            hidden: vec![128, 192, 192],
            q_out: PRESET_Q,
            omega0: OMEGA0_DESK,
        },
        "ae_desk" => ModelSpec::Ae {
            pre_code: vec![128, 32],
            code: 3,
            post_code: vec![32, 128],
            q: PRESET_Q,
        },
        "pos2code_desk" => ModelSpec::Dense {
            in_dim: 3,
            hidden: vec![64, 64],
            out_dim: 3,
            act: DenseAct::Tanh,
        },
        "cgrbf_mini" => ModelSpec::Cgrbf {
            front: vec![8, 6],
            q_out: 10,
            anchors: vec![[0.6, -0.4, 0.8], [-0.9, 0.3, -0.2]],
            region_min: [-1.0, -1.0, -1.0],
            region_max: [1.0, 1.0, 1.0],
            wavelength_m: 0.1,
        },
        "siren_mini" => ModelSpec::Siren {
            in_dim: 3,
            hidden: vec![8, 8],
            q_out: 10,
            omega0: OMEGA0,
        },
        "ae_mini" => ModelSpec::Ae {
            pre_code: vec![8],
            code: 3,
            post_code: vec![8],
            q: 12,
        },
        "dense_mini" => ModelSpec::Dense {
            in_dim: 5,
            hidden: vec![8],
            out_dim: 7,
            act: DenseAct::Tanh,
        },
        other => {
            return Err(Error::UnknownPreset {
                name: other.to_string(),
            })
        }
    };
    Ok(spec)
}

fn mapper(sub_antennas: usize) -> ModelSpec {
    ModelSpec::Dense {
        in_dim: sub_antennas * PRESET_Q,
        hidden: vec![256, 512, 512, 512],
        out_dim: MIMO_Q,
        act: DenseAct::Tanh,
    }
}

pub fn model_preset_names() -> &'static [&'static str] {
    &[
        "cgrbf_full",
        "siren_full",
        "ae_full",
        "pos2code_full",
        "cgrbf_lite",
        "siren_lite",
        "cgrbf_mimo",
        "siren_mimo",
        "mapper_2",
        "mapper_4",
        "mapper_8",
        "cgrbf_desk",
        "siren_desk",
        "ae_desk",
        "pos2code_desk",
        "cgrbf_mini",
        "siren_mini",
        "ae_mini",
        "dense_mini",
    ]
}

// --- checkpoints -------------------------------------------------------------

const CKPT_MAGIC: &[u8; 8] = b"CIRCKPT1";

/// Save spec and parameter values (little-endian, name-tagged tensors).
pub fn save_checkpoint(path: &Path, spec: &ModelSpec, store: &ParamStore) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    w.write_all(CKPT_MAGIC)?;
    let spec_toml = toml::to_string(spec)?;
    w.write_all(&(spec_toml.len() as u32).to_le_bytes())?;
    w.write_all(spec_toml.as_bytes())?;
    w.write_all(&(store.len() as u64).to_le_bytes())?;
    for id in store.ids() {
        let name = store.name(id).as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        let vals = store.value(id);
        w.write_all(&(vals.len() as u64).to_le_bytes())?;
        for v in vals {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rebuild the model from its stored spec and restore parameter values.
pub fn load_checkpoint(path: &Path) -> Result<(ParamStore, Model)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut pos = 0usize;
    let corrupt = |pos: usize, what: &str| Error::Corrupt {
        offset: pos as u64,
        what: what.to_string(),
    };
    let take = |pos: &mut usize, n: usize, what: &str| -> Result<&[u8]> {
        if *pos + n > buf.len() {
            return Err(corrupt(*pos, &format!("truncated while reading {what}")));
        }
        let s = &buf[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 8, "magic")? != CKPT_MAGIC {
        return Err(corrupt(0, "bad magic; not a checkpoint"));
    }
    let spec_len =
        u32::from_le_bytes(take(&mut pos, 4, "spec length")?.try_into().unwrap()) as usize;
    let spec_text = std::str::from_utf8(take(&mut pos, spec_len, "spec body")?)
        .map_err(|_| corrupt(pos, "spec is not UTF-8"))?;
    let spec: ModelSpec = toml::from_str(spec_text)?;
    let (mut store, model) = build_model(&spec, 0)?;
    let n = u64::from_le_bytes(take(&mut pos, 8, "param count")?.try_into().unwrap()) as usize;
    if n != store.len() {
        return Err(corrupt(
            pos,
            &format!("checkpoint has {n} tensors, spec builds {}", store.len()),
        ));
    }
    for id in store.ids().collect::<Vec<_>>() {
        let name_len =
            u32::from_le_bytes(take(&mut pos, 4, "name length")?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(take(&mut pos, name_len, "name")?)
            .map_err(|_| corrupt(pos, "name is not UTF-8"))?
            .to_string();
        if name != store.name(id) {
            return Err(corrupt(
                pos,
                &format!("tensor order mismatch: {name} vs {}", store.name(id)),
            ));
        }
        let len = u64::from_le_bytes(take(&mut pos, 8, "tensor length")?.try_into().unwrap())
            as usize;
        if len != store.value(id).len() {
            return Err(corrupt(pos, &format!("tensor {name} length {len} unexpected")));
        }
        for i in 0..len {
            let v = f64::from_le_bytes(take(&mut pos, 8, "value")?.try_into().unwrap());
            store.value_mut(id)[i] = v;
        }
    }
    if pos != buf.len() {
        return Err(corrupt(pos, "trailing bytes"));
    }
    Ok((store, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{finite_diff_check, mse, mse_grad};
    use rand::Rng;

    #[test]
    fn preset_table_is_complete_and_valid() {
        for name in model_preset_names() {
            let spec = model_preset(name).unwrap();
            spec.validate().unwrap();
        }
        assert!(matches!(
            model_preset("nope"),
            Err(Error::UnknownPreset { .. })
        ));
    }

    #[test]
    fn lite_model_param_counts() {
        // Front 3->128->256->600 dense chain, 400 kernels of 9 scalars,
        // 182 x 400 mixer plus bias.
        let spec = model_preset("cgrbf_lite").unwrap();
        assert_eq!(expected_param_count(&spec), 187_736 + 3_600 + 72_982);
        let (store, model) = build_model(&spec, 1).unwrap();
        assert_eq!(model.param_count(&store), 264_318);

        let spec = model_preset("siren_lite").unwrap();
        // Hidden chain 193,412 plus the 256 -> 182 output map.
        assert_eq!(expected_param_count(&spec), 193_412 + 46_774);
        let (store, model) = build_model(&spec, 1).unwrap();
        assert_eq!(model.param_count(&store), 240_186);
    }

    #[test]
    fn built_models_match_expected_counts() {
        for name in ["cgrbf_mini", "siren_mini", "ae_mini", "dense_mini", "ae_desk"] {
            let spec = model_preset(name).unwrap();
            let (store, model) = build_model(&spec, 3).unwrap();
            assert_eq!(
                model.param_count(&store),
                expected_param_count(&spec),
                "{name}"
            );
        }
    }

    #[test]
    fn complexity_oracle_values() {
        // 3*128 + 128*256 + 256*600 + 182*200 multiplications;
        // 128 + 256 + 600 sine outputs + 200 kernel pairs.
        let c = complexity_count(&model_preset("cgrbf_lite").unwrap());
        assert_eq!(c.mults, 223_152);
        assert_eq!(c.activations, 1_184);

        let c = complexity_count(&model_preset("siren_lite").unwrap());
        assert_eq!(c.mults, 450 + 38_400 + 76_800 + 76_800 + 46_592);
        assert_eq!(c.activations, 962);
    }

    #[test]
    fn instrumented_complexity_agrees_on_random_specs() {
        let mut rng = ChaCha12Rng::seed_from_u64(40);
        for trial in 0..20 {
            let spec = match trial % 4 {
                0 => ModelSpec::Cgrbf {
                    front: vec![
                        rng.random_range(2..20),
                        3 * rng.random_range(1..8usize),
                    ],
                    q_out: rng.random_range(1..30),
                    anchors: vec![[0.0, 0.0, 0.0], [0.4, -0.2, 0.3]],
                    region_min: [-1.0, -1.0, -1.0],
                    region_max: [1.0, 1.0, 1.0],
                    wavelength_m: 0.1,
                },
                1 => ModelSpec::Siren {
                    in_dim: rng.random_range(1..5),
                    hidden: (0..rng.random_range(1..4usize))
                        .map(|_| rng.random_range(2..20))
                        .collect(),
                    q_out: rng.random_range(1..30),
                    omega0: 30.0,
                },
                2 => ModelSpec::Ae {
                    pre_code: vec![rng.random_range(2..16)],
                    code: rng.random_range(1..5),
                    post_code: vec![rng.random_range(2..16)],
                    q: rng.random_range(4..40),
                },
                _ => ModelSpec::Dense {
                    in_dim: rng.random_range(1..20),
                    hidden: (0..rng.random_range(1..4usize))
                        .map(|_| rng.random_range(2..20))
                        .collect(),
                    out_dim: rng.random_range(1..30),
                    act: if trial % 2 == 0 {
                        DenseAct::Tanh
                    } else {
                        DenseAct::Sigmoid
                    },
                },
            };
            let (store, model) = build_model(&spec, trial as u64).unwrap();
            assert_eq!(
                model.instrumented_complexity(&store),
                complexity_count(&spec),
                "{spec:?}"
            );
            assert_eq!(
                model.param_count(&store),
                expected_param_count(&spec),
                "{spec:?}"
            );
        }
    }

    #[test]
    fn builds_are_seed_deterministic() {
        let spec = model_preset("cgrbf_mini").unwrap();
        let (s1, _) = build_model(&spec, 9).unwrap();
        let (s2, _) = build_model(&spec, 9).unwrap();
        let (s3, _) = build_model(&spec, 10).unwrap();
        for id in s1.ids() {
            assert_eq!(s1.value(id), s2.value(id));
        }
        let differs = s1.ids().any(|id| s1.value(id) != s3.value(id));
        assert!(differs);
    }

    #[test]
    fn every_variant_backprops_correctly() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for name in ["cgrbf_mini", "siren_mini", "ae_mini", "dense_mini"] {
            let spec = model_preset(name).unwrap();
            let (mut store, mut model) = build_model(&spec, 5).unwrap();
            let batch = 3;
            let x: Vec<f64> = (0..batch * model.in_dim())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let y: Vec<f64> = (0..batch * model.out_dim())
                .map(|_| rng.random_range(-0.5..0.5))
                .collect();
            store.zero_grads();
            let pred = model.forward(&store, &x, batch);
            let dy = mse_grad(&pred, &y);
            model.backward(&mut store, &dy);
            let snapshot = store.snapshot_grads();
            let report = finite_diff_check(&mut store, &snapshot, 1e-6, 32, &mut |store| {
                mse(&model.forward_eval(store, &x, batch), &y)
            });
            assert!(report.passes(1e-4), "{name}: worst {} at {}", report.worst, report.worst_param);
        }
    }

    #[test]
    fn autoencoder_splits_compose() {
        let spec = model_preset("ae_mini").unwrap();
        let (store, model) = build_model(&spec, 2).unwrap();
        assert_eq!(model.code_dim(), Some(3));
        let x: Vec<f64> = (0..24).map(|i| ((i as f64) * 0.37).sin()).collect();
        let full = model.forward_eval(&store, &x, 2);
        let code = model.encode_eval(&store, &x, 2);
        assert_eq!(code.len(), 6);
        // Sigmoid codes live in (0, 1).
        assert!(code.iter().all(|v| (0.0..1.0).contains(v)));
        let recomposed = model.decode_eval(&store, &code, 2);
        assert_eq!(full, recomposed);
    }

    #[test]
    fn kernel_constraint_projection_applies() {
        let spec = model_preset("cgrbf_mini").unwrap();
        let (mut store, model) = build_model(&spec, 2).unwrap();
        // Find the curvature tensor and push it positive.
        let beta_id = store
            .ids()
            .find(|&id| store.name(id) == "kernel.beta")
            .unwrap();
        store.value_mut(beta_id).fill(0.5);
        model.post_update(&mut store);
        assert!(store.value(beta_id).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = std::env::temp_dir().join("cirforge_ckpt");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.ckpt");
        let spec = model_preset("cgrbf_mini").unwrap();
        let (mut store, model) = build_model(&spec, 11).unwrap();
        // Make values distinctive relative to any fresh build.
        for id in store.ids().collect::<Vec<_>>() {
            for v in store.value_mut(id) {
                *v += 0.123;
            }
        }
        save_checkpoint(&path, &spec, &store).unwrap();
        let (loaded_store, loaded) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.spec, spec);
        for id in store.ids() {
            assert_eq!(store.value(id), loaded_store.value(id));
        }
        let x = vec![0.1, -0.2, 0.3];
        assert_eq!(
            model.forward_eval(&store, &x, 1),
            loaded.forward_eval(&loaded_store, &x, 1)
        );

        // Truncation is caught with an offset.
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::Corrupt { .. })
        ));
    }
}
