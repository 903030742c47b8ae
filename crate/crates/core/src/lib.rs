//! Ray-traced channel impulse responses and coordinate-to-CIR neural
//! networks.
//!
//! The crate splits into a physics half and a learning half. `scene` and
//! `raytrace` build specular multipath between a transmitter and a user
//! position; `cir` samples those paths into fixed delay windows; `dataset`
//! turns a scene into position/CIR training records with optional noise.
//! `nn` is a small hand-written f64 network stack (dense layers, a
//! cosine-Gaussian radial kernel, Adam, finite-difference gradient checking)
//! and `models` assembles it into the predictor architectures. `experiments`
//! drives training runs and the named preset studies.

pub mod cir;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod models;
pub mod nn;
pub mod raytrace;
pub mod scene;

pub use cir::{synthesize_cir, CirVector, DelayWindow, SynthesisReport};
pub use dataset::{
    deserialize_dataset, generate_dataset, inject_noise, serialize_dataset, Dataset, DatasetMeta,
    GenerateConfig, NoiseSpec, SampleRecord, WindowMode,
};
pub use error::{Error, Result};
pub use experiments::{run_preset, train, PresetReport, RunOptions, Supervised, TrainConfig};
pub use geometry::{Box3, Vec3};
pub use models::{
    build_model, load_checkpoint, model_preset, model_preset_names, save_checkpoint, Model,
    ModelSpec,
};
pub use raytrace::{
    mirror_point, path_gain, reflection_coefficients, trace_paths, trace_paths_between,
    PathComponent,
};
pub use scene::{load_scene, Polarization, Scene, Surface, SPEED_OF_LIGHT};
