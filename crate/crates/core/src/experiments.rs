//! Training loops, evaluation metrics, and the named experiment presets the
//! CLI exposes. Everything here is deterministic given the config seeds:
//! identical runs write byte-identical outputs.

use crate::dataset::{
    density_preset_to_per_m2, generate_dataset, inject_noise, Dataset, GenerateConfig, NoiseSpec,
};
use crate::error::{Error, Result};
use crate::geometry::Box3;
use crate::models::{build_model, cgrbf_spec_for_scene, save_checkpoint, Model, ModelSpec};
use crate::nn::{mse, mse_grad, Adam, ParamStore};
use crate::scene::{desk_region, paper_scene, paper_scene_mimo, paper_scene_nlos, Scene};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Flattened supervised task: row-major inputs/targets, train rows first.
#[derive(Debug, Clone)]
pub struct Supervised {
    pub in_dim: usize,
    pub out_dim: usize,
    pub train_x: Vec<f64>,
    pub train_y: Vec<f64>,
    pub test_x: Vec<f64>,
    pub test_y: Vec<f64>,
}

impl Supervised {
    pub fn n_train(&self) -> usize {
        if self.in_dim == 0 {
            0
        } else {
            self.train_x.len() / self.in_dim
        }
    }

    pub fn n_test(&self) -> usize {
        if self.in_dim == 0 {
            0
        } else {
            self.test_x.len() / self.in_dim
        }
    }
}

/// Map a position into the unit cube of the dataset's sampling region.
/// Degenerate axes (a fixed height) map to 0.
pub fn normalize_position(region: &Box3, p: crate::geometry::Vec3) -> [f64; 3] {
    let mut out = [0.0; 3];
    for axis in 0..3 {
        let lo = region.min.axis(axis);
        let hi = region.max.axis(axis);
        if hi > lo {
            out[axis] = 2.0 * (p.axis(axis) - lo) / (hi - lo) - 1.0;
        }
    }
    out
}

fn position_task(ds: &Dataset, meter_inputs: bool) -> Result<Supervised> {
    if ds.test_records().is_empty() {
        return Err(Error::EmptyTestSplit);
    }
    let q = ds.meta.q;
    let s = ds.meta.scale_factor;
    let embed = |p: crate::geometry::Vec3| -> [f64; 3] {
        if meter_inputs {
            p.to_array()
        } else {
            normalize_position(&ds.meta.region, p)
        }
    };
    let mut task = Supervised {
        in_dim: 3,
        out_dim: q,
        train_x: Vec::with_capacity(ds.train_count() * 3),
        train_y: Vec::with_capacity(ds.train_count() * q),
        test_x: Vec::new(),
        test_y: Vec::new(),
    };
    for r in ds.train_records() {
        let p = r.position_noisy.unwrap_or(r.position);
        task.train_x.extend(embed(p));
        let cir = r.cir_noisy.as_ref().unwrap_or(&r.cir);
        task.train_y.extend(cir.iter().map(|v| v * s));
    }
    for r in ds.test_records() {
        task.test_x.extend(embed(r.position));
        task.test_y.extend(r.cir.iter().map(|v| v * s));
    }
    Ok(task)
}

/// Position -> scaled CIR regression with inputs normalized into the unit
/// cube. Training rows use the noisy companion fields when present; test
/// rows always use clean data.
pub fn position_to_cir_task(ds: &Dataset) -> Result<Supervised> {
    position_task(ds, false)
}

/// Position -> scaled CIR regression keeping meter coordinates, for models
/// whose geometry lives in physical space.
pub fn position_to_cir_task_meters(ds: &Dataset) -> Result<Supervised> {
    position_task(ds, true)
}

/// Scaled clean CIR -> itself (autoencoder stage).
pub fn cir_autoencode_task(ds: &Dataset) -> Result<Supervised> {
    if ds.test_records().is_empty() {
        return Err(Error::EmptyTestSplit);
    }
    let q = ds.meta.q;
    let s = ds.meta.scale_factor;
    let scaled = |records: &[crate::dataset::SampleRecord]| -> Vec<f64> {
        records
            .iter()
            .flat_map(|r| r.cir.iter().map(move |v| v * s))
            .collect()
    };
    let train = scaled(ds.train_records());
    let test = scaled(ds.test_records());
    Ok(Supervised {
        in_dim: q,
        out_dim: q,
        train_x: train.clone(),
        train_y: train,
        test_x: test.clone(),
        test_y: test,
    })
}

/// Pick the natural task for a model shape on this dataset: coordinate
/// models regress position -> CIR, autoencoders reconstruct the CIR, and
/// wide dense models map a sub-array CIR onto the full array.
pub fn task_for_spec(spec: &ModelSpec, ds: &Dataset) -> Result<Supervised> {
    let q = ds.meta.q;
    match spec {
        // Kernel models keep meter coordinates: their virtual points and
        // distance kernels live in physical space.
        ModelSpec::Cgrbf { .. } => position_to_cir_task_meters(ds),
        ModelSpec::Siren { .. } => position_to_cir_task(ds),
        ModelSpec::Ae { .. } => cir_autoencode_task(ds),
        ModelSpec::Dense { in_dim, .. } if *in_dim == 3 => position_to_cir_task(ds),
        ModelSpec::Dense { in_dim, .. } => {
            let block = q / ds.meta.n_antennas;
            if block > 0 && in_dim % block == 0 {
                array_mapping_task(ds, in_dim / block)
            } else {
                Err(Error::Validation(format!(
                    "no task pairs a {in_dim}-input model with a q={q} dataset"
                )))
            }
        }
    }
}

/// Sub-array CIR -> full-array CIR. The first `sub_antennas` antenna blocks
/// of each record form the input.
pub fn array_mapping_task(ds: &Dataset, sub_antennas: usize) -> Result<Supervised> {
    if ds.test_records().is_empty() {
        return Err(Error::EmptyTestSplit);
    }
    if sub_antennas == 0 || sub_antennas > ds.meta.n_antennas {
        return Err(Error::Validation(format!(
            "sub-array of {sub_antennas} antennas from a {}-antenna dataset",
            ds.meta.n_antennas
        )));
    }
    let q = ds.meta.q;
    let block = q / ds.meta.n_antennas;
    let in_dim = sub_antennas * block;
    let s = ds.meta.scale_factor;
    let mut task = Supervised {
        in_dim,
        out_dim: q,
        train_x: Vec::new(),
        train_y: Vec::new(),
        test_x: Vec::new(),
        test_y: Vec::new(),
    };
    for r in ds.train_records() {
        task.train_x.extend(r.cir[..in_dim].iter().map(|v| v * s));
        task.train_y.extend(r.cir.iter().map(|v| v * s));
    }
    for r in ds.test_records() {
        task.test_x.extend(r.cir[..in_dim].iter().map(|v| v * s));
        task.test_y.extend(r.cir.iter().map(|v| v * s));
    }
    Ok(task)
}

/// Mean over records of (error energy / label energy). Scale-invariant, so
/// scaled and physical vectors give the same value. Records with zero label
/// energy are rejected upstream at generation time.
pub fn nmse(pred: &[f64], target: &[f64], n_records: usize) -> f64 {
    assert_eq!(pred.len(), target.len());
    assert!(n_records > 0 && pred.len() % n_records == 0);
    let dim = pred.len() / n_records;
    let mut total = 0.0;
    for r in 0..n_records {
        let p = &pred[r * dim..(r + 1) * dim];
        let t = &target[r * dim..(r + 1) * dim];
        let err: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        let energy: f64 = t.iter().map(|v| v * v).sum();
        total += err / energy.max(1e-300);
    }
    total / n_records as f64
}

/// Evaluate a model's NMSE over a flattened record set in bounded batches.
pub fn evaluate_nmse(
    model: &Model,
    store: &ParamStore,
    x: &[f64],
    y: &[f64],
    in_dim: usize,
) -> f64 {
    let n = x.len() / in_dim;
    let out_dim = y.len() / n;
    let mut pred = Vec::with_capacity(y.len());
    let chunk = 256;
    let mut i = 0;
    while i < n {
        let take = chunk.min(n - i);
        let xs = &x[i * in_dim..(i + take) * in_dim];
        pred.extend(model.forward_eval(store, xs, take));
        i += take;
    }
    let _ = out_dim;
    nmse(&pred, y, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub step: usize,
    pub train_mse: f64,
    pub test_nmse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub curve: Vec<CurvePoint>,
    /// Batch train MSE at every step, for moving-average diagnostics.
    pub train_losses: Vec<f64>,
    pub final_train_mse: f64,
    pub final_test_nmse: f64,
}

/// Mean of the last `window` entries (or all of them if shorter).
pub fn moving_average_tail(losses: &[f64], window: usize) -> f64 {
    let n = losses.len().min(window).max(1);
    let tail = &losses[losses.len() - n.min(losses.len())..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub eval_every: usize,
    /// Where to dump parameters if the loss goes non-finite.
    pub nan_checkpoint: Option<PathBuf>,
}

impl TrainConfig {
    pub fn new(steps: usize, seed: u64) -> Self {
        Self {
            steps,
            batch: 20,
            lr: 1e-3,
            seed,
            eval_every: 250,
            nan_checkpoint: None,
        }
    }

    pub fn with_lr(mut self, lr: f64) -> Self {
        self.lr = lr;
        self
    }
}

/// Minibatch Adam training with batch-mean gradients. Records the loss curve
/// at `eval_every` cadence plus the final step.
pub fn train(
    model: &mut Model,
    store: &mut ParamStore,
    task: &Supervised,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    let n_train = task.n_train();
    if n_train == 0 {
        return Err(Error::Validation("no training records".into()));
    }
    if cfg.steps == 0 || cfg.batch == 0 {
        return Err(Error::Validation("steps and batch must be positive".into()));
    }
    if task.in_dim != model.in_dim() || task.out_dim != model.out_dim() {
        return Err(Error::Validation(format!(
            "task is {}->{} but model is {}->{}",
            task.in_dim,
            task.out_dim,
            model.in_dim(),
            model.out_dim()
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(store, cfg.lr);
    model.tune_step_sizes(&mut adam);
    let mut curve = Vec::new();
    let mut xb = vec![0.0; cfg.batch * task.in_dim];
    let mut yb = vec![0.0; cfg.batch * task.out_dim];
    let mut last_mse = f64::NAN;
    let mut train_losses = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        // Cosine decay to a 2% floor. Minibatch Adam at a fixed rate settles
        // into a noise ball around the optimum; the late small steps are what
        // let it actually land.
        let frac = step as f64 / cfg.steps as f64;
        adam.lr = cfg.lr * (0.5 * (1.0 + (std::f64::consts::PI * frac).cos())).max(0.02);
        for s in 0..cfg.batch {
            let pick = rng.random_range(0..n_train);
            xb[s * task.in_dim..(s + 1) * task.in_dim]
                .copy_from_slice(&task.train_x[pick * task.in_dim..(pick + 1) * task.in_dim]);
            yb[s * task.out_dim..(s + 1) * task.out_dim]
                .copy_from_slice(&task.train_y[pick * task.out_dim..(pick + 1) * task.out_dim]);
        }
        store.zero_grads();
        let pred = model.forward(store, &xb, cfg.batch);
        let loss = mse(&pred, &yb);
        if !loss.is_finite() {
            let path = cfg
                .nan_checkpoint
                .clone()
                .unwrap_or_else(|| std::env::temp_dir().join(format!("nan_step{step}.ckpt")));
            save_checkpoint(&path, &model.spec, store)?;
            return Err(Error::NonFiniteLoss {
                step,
                checkpoint: path,
            });
        }
        last_mse = loss;
        train_losses.push(loss);
        let dy = mse_grad(&pred, &yb);
        model.backward(store, &dy);
        adam.step(store)?;
        model.post_update(store);
        if step % cfg.eval_every == 0 || step == cfg.steps {
            let test_nmse = if task.n_test() > 0 {
                evaluate_nmse(model, store, &task.test_x, &task.test_y, task.in_dim)
            } else {
                f64::NAN
            };
            curve.push(CurvePoint {
                step,
                train_mse: loss,
                test_nmse,
            });
        }
    }
    let last = curve.last().copied().unwrap();
    Ok(TrainResult {
        curve,
        train_losses,
        final_train_mse: last_mse,
        final_test_nmse: last.test_nmse,
    })
}

/// Two-stage baseline: train the autoencoder on CIR vectors, then train the
/// position-to-code regressor against the frozen encoder's codes. The
/// returned NMSE composes position -> code -> decoder against clean CIRs.
pub struct AePipelineOutcome {
    pub ae: TrainResult,
    pub pos2code: TrainResult,
    pub final_test_nmse: f64,
}

pub fn train_ae_pipeline(
    ae_spec: &ModelSpec,
    p2c_spec: &ModelSpec,
    ds: &Dataset,
    ae_cfg: &TrainConfig,
    p2c_cfg: &TrainConfig,
) -> Result<AePipelineOutcome> {
    let ae_task = cir_autoencode_task(ds)?;
    let (mut ae_store, mut ae_model) = build_model(ae_spec, ae_cfg.seed)?;
    let ae_result = train(&mut ae_model, &mut ae_store, &ae_task, ae_cfg)?;

    let code_dim = ae_model.code_dim().ok_or_else(|| {
        Error::Validation("pipeline first stage must be an autoencoder".into())
    })?;
    let pos_task = position_to_cir_task(ds)?;
    let n_train = ae_task.n_train();
    let train_codes = ae_model.encode_eval(&ae_store, &ae_task.train_x, n_train);
    let test_codes = ae_model.encode_eval(&ae_store, &ae_task.test_x, ae_task.n_test());
    let p2c_task = Supervised {
        in_dim: 3,
        out_dim: code_dim,
        train_x: pos_task.train_x.clone(),
        train_y: train_codes,
        test_x: pos_task.test_x.clone(),
        test_y: test_codes,
    };
    let (mut p2c_store, mut p2c_model) = build_model(p2c_spec, p2c_cfg.seed)?;
    let p2c_result = train(&mut p2c_model, &mut p2c_store, &p2c_task, p2c_cfg)?;

    let n_test = pos_task.n_test();
    let pred_codes = p2c_model.forward_eval(&p2c_store, &pos_task.test_x, n_test);
    let pred_cir = ae_model.decode_eval(&ae_store, &pred_codes, n_test);
    let final_test_nmse = nmse(&pred_cir, &pos_task.test_y, n_test);
    Ok(AePipelineOutcome {
        ae: ae_result,
        pos2code: p2c_result,
        final_test_nmse,
    })
}

// --- scene/model wiring for the presets ---------------------------------------

/// Generate the desk-scale (or paper-scale) dataset for a density preset.
pub fn preset_dataset(
    scene: &Scene,
    density_preset: f64,
    seed: u64,
    paper_scale: bool,
) -> Result<Dataset> {
    let region = if paper_scale {
        scene.ue_region
    } else {
        desk_region(scene)
    };
    let density = density_preset_to_per_m2(density_preset, region.footprint_area(), paper_scale);
    let mut cfg = GenerateConfig::new(density, seed);
    cfg.region = Some(region);
    let (ds, _) = generate_dataset(scene, &cfg)?;
    Ok(ds)
}

fn desk_front() -> Vec<usize> {
    vec![900]
}

fn desk_siren_spec() -> ModelSpec {
    crate::models::model_preset("siren_desk").expect("bundled preset")
}

fn desk_ae_spec(q: usize) -> ModelSpec {
    ModelSpec::Ae {
        pre_code: vec![128, 32],
        code: 3,
        post_code: vec![32, 128],
        q,
    }
}

fn desk_p2c_spec() -> ModelSpec {
    ModelSpec::Dense {
        in_dim: 3,
        hidden: vec![64, 64],
        out_dim: 3,
        act: crate::models::DenseAct::Tanh,
    }
}

/// Desk-scale MIMO scene: the bundled array scene with a 4x4 panel instead
/// of 8x8, keeping runtimes in budget while preserving the mapping geometry.
pub fn desk_mimo_scene() -> Scene {
    let mut scene = paper_scene_mimo();
    if let Some(arr) = &mut scene.bs_array {
        arr.nx = 4;
        arr.ny = 4;
    }
    scene
}

// --- named presets -------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Cgrbf,
    Siren,
    AePipeline,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Cgrbf => "cgrbf",
            ModelKind::Siren => "siren",
            ModelKind::AePipeline => "ae_pipeline",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub model: ModelKind,
    pub density_preset: f64,
    pub seed: u64,
    pub nmse: f64,
    pub curve: Vec<CurvePoint>,
    pub label: String,
}

/// Train one desk model on one dataset; shared by the sweep presets.
pub fn run_desk_model(
    scene: &Scene,
    ds: &Dataset,
    kind: ModelKind,
    steps: usize,
    seed: u64,
) -> Result<(f64, Vec<CurvePoint>)> {
    match kind {
        ModelKind::Cgrbf => {
            let spec = cgrbf_spec_for_scene(scene, &ds.meta.region, &desk_front(), ds.meta.q);
            let (mut store, mut model) = build_model(&spec, seed)?;
            let task = task_for_spec(&spec, ds)?;
            let result = train(&mut model, &mut store, &task, &TrainConfig::new(steps, seed))?;
            Ok((result.final_test_nmse, result.curve))
        }
        ModelKind::Siren => {
            let mut spec = desk_siren_spec();
            if let ModelSpec::Siren { q_out, .. } = &mut spec {
                *q_out = ds.meta.q;
            }
            let (mut store, mut model) = build_model(&spec, seed)?;
            let task = task_for_spec(&spec, ds)?;
            let result = train(&mut model, &mut store, &task, &TrainConfig::new(steps, seed))?;
            Ok((result.final_test_nmse, result.curve))
        }
        ModelKind::AePipeline => {
            let ae_cfg = TrainConfig::new(steps, seed);
            // Code regression converges best an order of magnitude hotter.
            let p2c_cfg = TrainConfig::new(steps, seed.wrapping_add(1)).with_lr(1e-2);
            let outcome = train_ae_pipeline(
                &desk_ae_spec(ds.meta.q),
                &desk_p2c_spec(),
                ds,
                &ae_cfg,
                &p2c_cfg,
            )?;
            Ok((outcome.final_test_nmse, outcome.pos2code.curve))
        }
    }
}

/// Every model at every density preset for each seed.
pub fn density_sweep(
    scene: &Scene,
    density_presets: &[f64],
    seeds: &[u64],
    steps: usize,
    paper_scale: bool,
) -> Result<Vec<SweepRun>> {
    let mut runs = Vec::new();
    for &density in density_presets {
        for &seed in seeds {
            let ds = preset_dataset(scene, density, seed, paper_scale)?;
            for kind in [ModelKind::Cgrbf, ModelKind::Siren, ModelKind::AePipeline] {
                let (nmse, curve) = run_desk_model(scene, &ds, kind, steps, seed)?;
                runs.push(SweepRun {
                    model: kind,
                    density_preset: density,
                    seed,
                    nmse,
                    curve,
                    label: format!("{}_d{}_s{}", kind.label(), density, seed),
                });
            }
        }
    }
    Ok(runs)
}

pub fn median(values: &mut Vec<f64>) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

/// 1-D latent-periodicity study: a fast oscillation under a smooth envelope,
/// fit from sparse samples by a sine MLP and an equal-size tanh MLP.
pub struct LatentPeriodicOutcome {
    pub sine_test_mse: f64,
    pub tanh_test_mse: f64,
    pub sine_curve: Vec<CurvePoint>,
    pub tanh_curve: Vec<CurvePoint>,
}

pub fn latent_periodic_1d(
    n_train: usize,
    n_wavelengths: f64,
    steps: usize,
    seed: u64,
) -> Result<LatentPeriodicOutcome> {
    let target = |x: f64| -> f64 {
        let envelope = 1.0 - 0.6 * x * x;
        envelope * (std::f64::consts::PI * n_wavelengths * (x + 1.0) + 0.7).sin()
    };
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut train_x = Vec::with_capacity(n_train);
    for _ in 0..n_train {
        train_x.push(rng.random_range(-1.0..=1.0));
    }
    let train_y: Vec<f64> = train_x.iter().map(|&x| target(x)).collect();
    let n_test = 400;
    let test_x: Vec<f64> = (0..n_test)
        .map(|i| -1.0 + 2.0 * i as f64 / (n_test - 1) as f64)
        .collect();
    let test_y: Vec<f64> = test_x.iter().map(|&x| target(x)).collect();
    let task = Supervised {
        in_dim: 1,
        out_dim: 1,
        train_x,
        train_y,
        test_x,
        test_y,
    };

    let hidden = vec![64, 64];
    let sine_spec = ModelSpec::Siren {
        in_dim: 1,
        hidden: hidden.clone(),
        q_out: 1,
        omega0: 30.0,
    };
    let tanh_spec = ModelSpec::Dense {
        in_dim: 1,
        hidden,
        out_dim: 1,
        act: crate::models::DenseAct::Tanh,
    };

    let run = |spec: &ModelSpec| -> Result<(f64, Vec<CurvePoint>)> {
        let (mut store, mut model) = build_model(spec, seed)?;
        let mut cfg = TrainConfig::new(steps, seed);
        cfg.batch = n_train.min(20);
        let result = train(&mut model, &mut store, &task, &cfg)?;
        // Plain MSE on the dense grid; NMSE would hide the envelope scale.
        let pred = model.forward_eval(&store, &task.test_x, task.n_test());
        Ok((mse(&pred, &task.test_y), result.curve))
    };
    let (sine_test_mse, sine_curve) = run(&sine_spec)?;
    let (tanh_test_mse, tanh_curve) = run(&tanh_spec)?;
    Ok(LatentPeriodicOutcome {
        sine_test_mse,
        tanh_test_mse,
        sine_curve,
        tanh_curve,
    })
}

/// Clean-vs-noisy comparison used by the robustness presets.
pub struct NoisePairOutcome {
    pub clean_nmse: f64,
    pub noisy_nmse: f64,
    pub realized_noise_nmse: f64,
    pub clean_curve: Vec<CurvePoint>,
    pub noisy_curve: Vec<CurvePoint>,
}

pub fn noise_robustness(
    scene: &Scene,
    density_preset: f64,
    spec_noise: NoiseSpec,
    steps: usize,
    seed: u64,
    paper_scale: bool,
) -> Result<NoisePairOutcome> {
    let clean_ds = preset_dataset(scene, density_preset, seed, paper_scale)?;
    let (clean_nmse, clean_curve) =
        run_desk_model(scene, &clean_ds, ModelKind::Cgrbf, steps, seed)?;
    let mut noisy_ds = clean_ds;
    let report = inject_noise(&mut noisy_ds, spec_noise, seed ^ 0x4e4f_4953_45)?;
    let (noisy_nmse, noisy_curve) =
        run_desk_model(scene, &noisy_ds, ModelKind::Cgrbf, steps, seed)?;
    Ok(NoisePairOutcome {
        clean_nmse,
        noisy_nmse,
        realized_noise_nmse: report.realized_nmse,
        clean_curve,
        noisy_curve,
    })
}

/// Alpha-stable dispersion matched to a fraction of the dataset's RMS CIR
/// value, so different alphas perturb at comparable scale.
pub fn alpha_dispersion_for(ds: &Dataset, fraction: f64) -> f64 {
    let mut sum2 = 0.0;
    let mut n = 0usize;
    for r in &ds.records {
        for v in &r.cir {
            sum2 += v * v;
        }
        n += r.cir.len();
    }
    fraction * (sum2 / n.max(1) as f64).sqrt()
}

/// Sub-array to full-array mapping at several sub-array sizes, fixed seed.
pub struct MappingOutcome {
    pub sub_antennas: usize,
    pub nmse: f64,
    pub curve: Vec<CurvePoint>,
}

pub fn channel_mapping_study(
    sub_sizes: &[usize],
    steps: usize,
    seed: u64,
    density_preset: f64,
    paper_scale: bool,
) -> Result<Vec<MappingOutcome>> {
    let scene = if paper_scale {
        paper_scene_mimo()
    } else {
        desk_mimo_scene()
    };
    let ds = preset_dataset(&scene, density_preset, seed, paper_scale)?;
    let mut out = Vec::new();
    for &k in sub_sizes {
        let task = array_mapping_task(&ds, k)?;
        let spec = ModelSpec::Dense {
            in_dim: task.in_dim,
            hidden: vec![128, 128],
            out_dim: task.out_dim,
            act: crate::models::DenseAct::Tanh,
        };
        let (mut store, mut model) = build_model(&spec, seed)?;
        let result = train(&mut model, &mut store, &task, &TrainConfig::new(steps, seed))?;
        out.push(MappingOutcome {
            sub_antennas: k,
            nmse: result.final_test_nmse,
            curve: result.curve,
        });
    }
    Ok(out)
}

// --- preset runner with on-disk outputs ---------------------------------------

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub seed: u64,
    pub steps: usize,
    pub paper_scale: bool,
    pub out_root: PathBuf,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            steps: 20_000,
            paper_scale: false,
            out_root: PathBuf::from("runs"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PresetReport {
    pub name: String,
    pub out_dir: PathBuf,
    /// Human-readable result lines, one per trained run.
    pub lines: Vec<String>,
}

pub const EXPERIMENT_PRESETS: &[&str] = &[
    "density_sweep",
    "limited_params",
    "pos_noise",
    "cir_noise_gaussian",
    "cir_noise_alpha",
    "freq_sweep",
    "nlos_scene",
    "mimo_shared",
    "channel_mapping",
    "latent_periodic_1d",
];

fn config_digest(name: &str, opts: &RunOptions) -> String {
    let text = format!(
        "{name}|seed={}|steps={}|paper_scale={}",
        opts.seed, opts.steps, opts.paper_scale
    );
    let hash = Sha256::digest(text.as_bytes());
    hash[..6].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "step,train_mse,test_nmse")?;
    for p in curve {
        writeln!(w, "{},{},{}", p.step, p.train_mse, p.test_nmse)?;
    }
    w.flush()?;
    Ok(())
}

fn write_summary(dir: &Path, lines: &[String]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("summary.txt"))?);
    for line in lines {
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Run a named experiment preset, writing per-run curve CSVs and a summary
/// into `out_root/<preset>/<config digest>/`. Returns the result lines.
pub fn run_preset(name: &str, opts: &RunOptions) -> Result<PresetReport> {
    let dir = opts
        .out_root
        .join(name)
        .join(config_digest(name, opts));
    std::fs::create_dir_all(&dir)?;
    let mut lines = Vec::new();
    let mut curves: Vec<(String, Vec<CurvePoint>)> = Vec::new();

    match name {
        "density_sweep" => {
            // One curve per (model, density): 9 files.
            let scene = paper_scene();
            let runs = density_sweep(
                &scene,
                &[40.0, 60.0, 100.0],
                &[opts.seed],
                opts.steps,
                opts.paper_scale,
            )?;
            for run in runs {
                lines.push(format!(
                    "model={} density={} seed={} nmse={:.6}",
                    run.model.label(),
                    run.density_preset,
                    run.seed,
                    run.nmse
                ));
                curves.push((run.label.clone(), run.curve));
            }
        }
        "limited_params" => {
            let scene = paper_scene();
            let ds = preset_dataset(&scene, 100.0, opts.seed, opts.paper_scale)?;
            for (label, spec) in [
                (
                    "cgrbf_lite",
                    cgrbf_spec_for_scene(&scene, &ds.meta.region, &[128, 256, 600], ds.meta.q),
                ),
                (
                    "siren_lite",
                    ModelSpec::Siren {
                        in_dim: 3,
                        hidden: vec![150, 256, 300, 256],
                        q_out: ds.meta.q,
                        omega0: 30.0,
                    },
                ),
            ] {
                let task = task_for_spec(&spec, &ds)?;
                let (mut store, mut model) = build_model(&spec, opts.seed)?;
                let result = train(
                    &mut model,
                    &mut store,
                    &task,
                    &TrainConfig::new(opts.steps, opts.seed),
                )?;
                lines.push(format!("model={label} nmse={:.6}", result.final_test_nmse));
                curves.push((label.to_string(), result.curve));
            }
        }
        "pos_noise" => {
            let scene = paper_scene();
            let outcome = noise_robustness(
                &scene,
                100.0,
                NoiseSpec::PositionGaussian { sigma_m: 0.03 },
                opts.steps,
                opts.seed,
                opts.paper_scale,
            )?;
            lines.push(format!("clean nmse={:.6}", outcome.clean_nmse));
            lines.push(format!(
                "pos_noise sigma=0.03 nmse={:.6} ratio={:.3}",
                outcome.noisy_nmse,
                outcome.noisy_nmse / outcome.clean_nmse
            ));
            curves.push(("clean".into(), outcome.clean_curve));
            curves.push(("noisy".into(), outcome.noisy_curve));
        }
        "cir_noise_gaussian" => {
            let scene = paper_scene();
            let outcome = noise_robustness(
                &scene,
                100.0,
                NoiseSpec::CirGaussian { target_nmse: 0.01 },
                opts.steps,
                opts.seed,
                opts.paper_scale,
            )?;
            lines.push(format!("clean nmse={:.6}", outcome.clean_nmse));
            lines.push(format!(
                "gaussian target=0.01 realized={:.6} nmse={:.6}",
                outcome.realized_noise_nmse, outcome.noisy_nmse
            ));
            curves.push(("clean".into(), outcome.clean_curve));
            curves.push(("noisy".into(), outcome.noisy_curve));
        }
        "cir_noise_alpha" => {
            let scene = paper_scene();
            let base = preset_dataset(&scene, 100.0, opts.seed, opts.paper_scale)?;
            let dispersion = alpha_dispersion_for(&base, 0.05);
            let (clean_nmse, clean_curve) =
                run_desk_model(&scene, &base, ModelKind::Cgrbf, opts.steps, opts.seed)?;
            lines.push(format!("clean nmse={clean_nmse:.6}"));
            curves.push(("clean".into(), clean_curve));
            for alpha in [1.2, 1.5, 1.8] {
                let mut noisy = base.clone();
                let report = inject_noise(
                    &mut noisy,
                    NoiseSpec::CirAlphaStable {
                        alpha,
                        dispersion_scale: dispersion,
                    },
                    opts.seed ^ 0xa1fa,
                )?;
                let (nmse, curve) =
                    run_desk_model(&scene, &noisy, ModelKind::Cgrbf, opts.steps, opts.seed)?;
                lines.push(format!(
                    "alpha={alpha} realized_noise={:.4} nmse={nmse:.6}",
                    report.realized_nmse
                ));
                curves.push((format!("alpha_{alpha}"), curve));
            }
        }
        "freq_sweep" => {
            for freq_ghz in [2.0, 4.0, 8.0] {
                let mut scene = paper_scene();
                scene.frequency_hz = freq_ghz * 1e9;
                let ds = preset_dataset(&scene, 100.0, opts.seed, opts.paper_scale)?;
                let (nmse, curve) =
                    run_desk_model(&scene, &ds, ModelKind::Cgrbf, opts.steps, opts.seed)?;
                lines.push(format!("freq_ghz={freq_ghz} nmse={nmse:.6}"));
                curves.push((format!("f{freq_ghz}ghz"), curve));
            }
        }
        "nlos_scene" => {
            let scene = paper_scene_nlos();
            let ds = preset_dataset(&scene, 100.0, opts.seed, opts.paper_scale)?;
            for kind in [ModelKind::Cgrbf, ModelKind::Siren] {
                let (nmse, curve) = run_desk_model(&scene, &ds, kind, opts.steps, opts.seed)?;
                lines.push(format!("model={} nmse={nmse:.6}", kind.label()));
                curves.push((kind.label().to_string(), curve));
            }
        }
        "mimo_shared" => {
            let scene = if opts.paper_scale {
                paper_scene_mimo()
            } else {
                desk_mimo_scene()
            };
            let ds = preset_dataset(&scene, 40.0, opts.seed, opts.paper_scale)?;
            for kind in [ModelKind::Cgrbf, ModelKind::Siren] {
                let (nmse, curve) = run_desk_model(&scene, &ds, kind, opts.steps, opts.seed)?;
                lines.push(format!(
                    "model={} antennas={} nmse={nmse:.6}",
                    kind.label(),
                    ds.meta.n_antennas
                ));
                curves.push((kind.label().to_string(), curve));
            }
        }
        "channel_mapping" => {
            let outcomes =
                channel_mapping_study(&[2, 4, 8], opts.steps, opts.seed, 40.0, opts.paper_scale)?;
            for o in &outcomes {
                lines.push(format!("sub_antennas={} nmse={:.6}", o.sub_antennas, o.nmse));
                curves.push((format!("sub{}", o.sub_antennas), o.curve.clone()));
            }
        }
        "latent_periodic_1d" => {
            let outcome = latent_periodic_1d(40, 10.0, opts.steps, opts.seed)?;
            lines.push(format!("sine test_mse={:.8}", outcome.sine_test_mse));
            lines.push(format!("tanh test_mse={:.8}", outcome.tanh_test_mse));
            lines.push(format!(
                "ratio={:.6}",
                outcome.sine_test_mse / outcome.tanh_test_mse
            ));
            curves.push(("sine".into(), outcome.sine_curve));
            curves.push(("tanh".into(), outcome.tanh_curve));
        }
        other => {
            return Err(Error::UnknownPreset {
                name: other.to_string(),
            })
        }
    }

    for (label, curve) in &curves {
        write_curve_csv(&dir.join(format!("{label}.csv")), curve)?;
    }
    write_summary(&dir, &lines)?;
    Ok(PresetReport {
        name: name.to_string(),
        out_dir: dir,
        lines,
    })
}
