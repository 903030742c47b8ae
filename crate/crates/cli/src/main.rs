//! `cirforge`: scene validation, dataset generation, model training and
//! evaluation, gradient checking, and the named experiment presets.
//!
//! Exit codes: 0 success, 1 operational or validation failure, 2 usage error.

use clap::{Args, Parser, Subcommand};
use cirforge_core::dataset::{
    density_preset_to_per_m2, export_csv, file_digest, generate_dataset, inject_noise,
    GenerateConfig, NoiseSpec,
};
use cirforge_core::error::{Error, Result};
use cirforge_core::experiments::{
    run_preset, task_for_spec, train, write_curve_csv, RunOptions, TrainConfig,
};
use cirforge_core::models::{
    build_model, load_checkpoint, model_preset, model_preset_names, save_checkpoint, ModelSpec,
};
use cirforge_core::nn::{finite_diff_check, mse};
use cirforge_core::scene::{desk_region, load_scene};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Deserialize;
use std::io::Write as _;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "cirforge",
    version,
    about = "Ray-traced channel impulse responses and coordinate-to-CIR models"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a scene's invariants and print path statistics for 10 probes.
    SceneValidate {
        /// Bundled scene name or path to a scene TOML file.
        scene: String,
    },
    /// Ray-trace a dataset of position/CIR records.
    DatasetGenerate(GenArgs),
    /// Train a model on a dataset and write curve, checkpoint, and summary.
    Train(TrainArgs),
    /// Report train/test NMSE of a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        model_ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Compare analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Run a named experiment preset.
    Preset(PresetArgs),
    /// Convert a binary dataset to CSV.
    ExportCsv {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct GenArgs {
    /// Bundled scene name or scene TOML path.
    #[arg(long)]
    scene: String,
    /// Density preset; desk scale maps it onto the compact region.
    #[arg(long)]
    density: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Sample the full-size region at the preset density.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    split_fraction: Option<f64>,
    /// Gaussian CIR noise at this target noise-to-signal ratio.
    #[arg(long)]
    noise_gaussian: Option<f64>,
    /// Alpha-stable CIR noise exponent; needs --noise-scale.
    #[arg(long)]
    noise_alpha: Option<f64>,
    /// Alpha-stable dispersion scale.
    #[arg(long)]
    noise_scale: Option<f64>,
    /// Gaussian position noise sigma in meters.
    #[arg(long)]
    noise_pos: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Model preset name or path to a model spec TOML file.
    #[arg(long)]
    model: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Optional TOML file with steps/batch/lr/eval_every overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    eval_every: Option<usize>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 4)]
    batch: usize,
}

#[derive(Args)]
struct PresetArgs {
    name: String,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    paper_scale: bool,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

fn main() {
    if let Err(code) = check_thread_cap() {
        std::process::exit(code);
    }
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

/// All execution is single-threaded; the cap is validated and a cap above 1
/// is reported as having no effect rather than silently accepted.
fn check_thread_cap() -> std::result::Result<(), i32> {
    match std::env::var("CIRFORGE_THREADS") {
        Err(_) => Ok(()),
        Ok(raw) => match raw.parse::<usize>() {
            Ok(0) | Err(_) => {
                eprintln!("error: CIRFORGE_THREADS must be a positive integer, got {raw:?}");
                Err(2)
            }
            Ok(1) => Ok(()),
            Ok(n) => {
                eprintln!("note: CIRFORGE_THREADS={n} capped to 1 (serial build)");
                Ok(())
            }
        },
    }
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::SceneValidate { scene } => scene_validate(&scene),
        Cmd::DatasetGenerate(args) => dataset_generate(args),
        Cmd::Train(args) => run_train(args),
        Cmd::Eval { model_ckpt, data } => run_eval(&model_ckpt, &data),
        Cmd::Gradcheck(args) => run_gradcheck(args),
        Cmd::Preset(args) => run_preset_verb(args),
        Cmd::ExportCsv { input, out } => {
            let ds = cirforge_core::dataset::deserialize_dataset(&input)?;
            export_csv(&ds, &out)?;
            println!(
                "wrote {} records to {} (sha256 {})",
                ds.meta.count,
                out.display(),
                file_digest(&out)?
            );
            Ok(())
        }
    }
}

fn scene_validate(arg: &str) -> Result<()> {
    let scene = load_scene(arg)?;
    scene.validate()?;
    println!(
        "scene ok: {} surfaces, carrier {:.3} GHz, max bounce {}",
        scene.surfaces.len(),
        scene.frequency_hz / 1e9,
        scene.max_reflection_order
    );
    // Fixed probe seed: validation output is part of the reproducible record.
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let region = scene.ue_region;
    let mut counts = Vec::new();
    for i in 0..10 {
        let p = cirforge_core::geometry::Vec3::new(
            rng.random_range(region.min.x..=region.max.x),
            rng.random_range(region.min.y..=region.max.y),
            if region.max.z > region.min.z {
                rng.random_range(region.min.z..=region.max.z)
            } else {
                region.min.z
            },
        );
        let paths = cirforge_core::raytrace::trace_paths(&scene, p)?;
        let los = paths.iter().any(|c| c.surface_ids.is_empty());
        println!(
            "probe {} at ({:.2}, {:.2}, {:.2}): {} paths, los={}",
            i + 1,
            p.x,
            p.y,
            p.z,
            paths.len(),
            los
        );
        counts.push(paths.len());
    }
    let min = counts.iter().min().unwrap();
    let max = counts.iter().max().unwrap();
    let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
    println!("paths per probe: min {min}, mean {mean:.1}, max {max}");
    Ok(())
}

fn noise_spec_from(args: &GenArgs) -> Result<Option<NoiseSpec>> {
    let picked = [
        args.noise_gaussian.is_some(),
        args.noise_alpha.is_some(),
        args.noise_pos.is_some(),
    ]
    .iter()
    .filter(|&&b| b)
    .count();
    if picked > 1 {
        return Err(Error::Validation(
            "choose at most one of --noise-gaussian, --noise-alpha, --noise-pos".into(),
        ));
    }
    if args.noise_scale.is_some() && args.noise_alpha.is_none() {
        return Err(Error::Validation(
            "--noise-scale only applies with --noise-alpha".into(),
        ));
    }
    Ok(if let Some(target) = args.noise_gaussian {
        Some(NoiseSpec::CirGaussian {
            target_nmse: target,
        })
    } else if let Some(alpha) = args.noise_alpha {
        let scale = args.noise_scale.ok_or_else(|| {
            Error::Validation("--noise-alpha requires --noise-scale".into())
        })?;
        Some(NoiseSpec::CirAlphaStable {
            alpha,
            dispersion_scale: scale,
        })
    } else {
        args.noise_pos
            .map(|sigma_m| NoiseSpec::PositionGaussian { sigma_m })
    })
}

fn dataset_generate(args: GenArgs) -> Result<()> {
    let scene = load_scene(&args.scene)?;
    let noise = noise_spec_from(&args)?;
    let region = if args.paper_scale {
        scene.ue_region
    } else {
        desk_region(&scene)
    };
    let density =
        density_preset_to_per_m2(args.density, region.footprint_area(), args.paper_scale);
    let mut cfg = GenerateConfig::new(density, args.seed);
    cfg.region = Some(region);
    if let Some(f) = args.split_fraction {
        cfg.split_fraction = f;
    }
    let (mut ds, report) = generate_dataset(&scene, &cfg)?;
    println!(
        "generated {} records, q={}, window [{:.1}, {:.1}] ns, {} paths dropped",
        ds.meta.count,
        ds.meta.q,
        ds.meta.window.start_s * 1e9,
        ds.meta.window.end_s * 1e9,
        report.dropped_paths
    );
    if let Some(spec) = noise {
        let noise_report = inject_noise(&mut ds, spec, args.seed ^ 0x4e4f_4953_45)?;
        println!("noise realized nmse {:.6}", noise_report.realized_nmse);
    }
    cirforge_core::dataset::serialize_dataset(&ds, &args.out)?;
    println!(
        "wrote {} (sha256 {})",
        args.out.display(),
        file_digest(&args.out)?
    );
    Ok(())
}

fn resolve_model_spec(arg: &str) -> Result<ModelSpec> {
    if model_preset_names().contains(&arg) {
        model_preset(arg)
    } else {
        let text = std::fs::read_to_string(arg)?;
        let spec: ModelSpec = toml::from_str(&text)
            .map_err(|e| Error::Validation(format!("model spec {arg}: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Optional config-file fields; CLI flags override these, which override
/// the built-in defaults.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct TrainOverrides {
    steps: Option<usize>,
    batch: Option<usize>,
    lr: Option<f64>,
    eval_every: Option<usize>,
}

fn run_train(args: TrainArgs) -> Result<()> {
    let spec = resolve_model_spec(&args.model)?;
    let ds = cirforge_core::dataset::deserialize_dataset(&args.data)?;
    let task = task_for_spec(&spec, &ds)?;

    let file_cfg: TrainOverrides = match &args.config {
        Some(path) => toml::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::Validation(format!("config {}: {e}", path.display())))?,
        None => TrainOverrides::default(),
    };
    let mut cfg = TrainConfig::new(20_000, args.seed);
    if let Some(v) = file_cfg.steps {
        cfg.steps = v;
    }
    if let Some(v) = file_cfg.batch {
        cfg.batch = v;
    }
    if let Some(v) = file_cfg.lr {
        cfg.lr = v;
    }
    if let Some(v) = file_cfg.eval_every {
        cfg.eval_every = v;
    }
    if let Some(v) = args.steps {
        cfg.steps = v;
    }
    if let Some(v) = args.batch {
        cfg.batch = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.eval_every {
        cfg.eval_every = v;
    }
    std::fs::create_dir_all(&args.out)?;
    cfg.nan_checkpoint = Some(args.out.join("nan.ckpt"));

    let (mut store, mut model) = build_model(&spec, args.seed)?;
    let result = train(&mut model, &mut store, &task, &cfg)?;
    write_curve_csv(&args.out.join("curve.csv"), &result.curve)?;
    save_checkpoint(&args.out.join("model.ckpt"), &spec, &store)?;
    let mut summary = std::io::BufWriter::new(std::fs::File::create(args.out.join("summary.txt"))?);
    writeln!(summary, "model={}", args.model)?;
    writeln!(summary, "steps={} batch={} lr={}", cfg.steps, cfg.batch, cfg.lr)?;
    writeln!(summary, "final_train_mse={}", result.final_train_mse)?;
    writeln!(summary, "final_test_nmse={}", result.final_test_nmse)?;
    summary.flush()?;
    println!(
        "trained {} for {} steps: train mse {:.6e}, test nmse {:.6}",
        args.model, cfg.steps, result.final_train_mse, result.final_test_nmse
    );
    Ok(())
}

fn run_eval(ckpt: &PathBuf, data: &PathBuf) -> Result<()> {
    let (store, model) = load_checkpoint(ckpt)?;
    let ds = cirforge_core::dataset::deserialize_dataset(data)?;
    let task = task_for_spec(&model.spec, &ds)?;
    let train_nmse = cirforge_core::experiments::evaluate_nmse(
        &model,
        &store,
        &task.train_x,
        &task.train_y,
        task.in_dim,
    );
    let test_nmse = cirforge_core::experiments::evaluate_nmse(
        &model,
        &store,
        &task.test_x,
        &task.test_y,
        task.in_dim,
    );
    println!("train nmse {train_nmse:.6}");
    println!("test nmse {test_nmse:.6}");
    Ok(())
}

fn run_gradcheck(args: GradcheckArgs) -> Result<()> {
    let spec = resolve_model_spec(&args.model)?;
    let (mut store, mut model) = build_model(&spec, args.seed)?;
    let mut rng = ChaCha12Rng::seed_from_u64(args.seed ^ 0x6772_6164);
    let x: Vec<f64> = (0..args.batch * model.in_dim())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let y: Vec<f64> = (0..args.batch * model.out_dim())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();

    store.zero_grads();
    let pred = model.forward(&store, &x, args.batch);
    let dy = cirforge_core::nn::mse_grad(&pred, &y);
    model.backward(&mut store, &dy);
    let analytic = store.snapshot_grads();
    let report = finite_diff_check(&mut store, &analytic, 1e-6, 6, &mut |s| {
        mse(&model.forward_eval(s, &x, args.batch), &y)
    });
    for (name, err) in &report.per_param {
        println!("{name:<16} rel_err {err:.3e}");
    }
    println!("worst {} at {:.3e}", report.worst_param, report.worst);
    if report.passes(args.tol) {
        println!("gradcheck ok (tol {:.1e})", args.tol);
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "gradient mismatch: {} at {:.3e} exceeds tol {:.1e}",
            report.worst_param, report.worst, args.tol
        )))
    }
}

fn run_preset_verb(args: PresetArgs) -> Result<()> {
    let mut opts = RunOptions {
        seed: args.seed,
        paper_scale: args.paper_scale,
        out_root: args.out,
        ..RunOptions::default()
    };
    if let Some(steps) = args.steps {
        opts.steps = steps;
    }
    let report = run_preset(&args.name, &opts)?;
    for line in &report.lines {
        println!("{line}");
    }
    println!("outputs in {}", report.out_dir.display());
    Ok(())
}
