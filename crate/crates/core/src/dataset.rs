//! Position/CIR training data: sampling, generation, scaling, noise, and the
//! `.cirds` on-disk format.
//!
//! Records hold physical (unscaled) values. `meta.scale_factor` is the
//! max-abs normalizer fitted at generation time; training pipelines multiply
//! by it and divide predictions back out. Noise injection fills the
//! `*_noisy` companion fields and leaves the clean data in place.

use crate::cir::DelayWindow;
use crate::error::{Error, Result};
use crate::geometry::{Box3, Vec3};
use crate::raytrace::trace_paths_between;
use crate::scene::Scene;
use crate::{synthesize_cir, SynthesisReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;

/// Mean sample count per unit of density preset at desk scale: preset "40"
/// means 40 x 45 = 1,800 expected records regardless of footprint size.
pub const DESK_REFERENCE_AREA_M2: f64 = 45.0;

const SHUFFLE_SALT: u64 = 0x5348_5546_464c_4531;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub position: Vec3,
    /// Perturbed training input; present only after position noise.
    pub position_noisy: Option<Vec3>,
    /// Interleaved complex CIR, physical units, length `meta.q`.
    pub cir: Vec<f64>,
    /// Perturbed training label; present only after CIR noise.
    pub cir_noisy: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    /// Additive white Gaussian CIR noise calibrated so the realized
    /// noise-to-signal energy ratio equals `target_nmse`.
    CirGaussian { target_nmse: f64 },
    /// Additive symmetric alpha-stable CIR noise of the given dispersion.
    CirAlphaStable { alpha: f64, dispersion_scale: f64 },
    /// Gaussian perturbation of the training-input position, per coordinate.
    PositionGaussian { sigma_m: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseReport {
    pub spec: NoiseSpec,
    /// Empirical noise-to-signal energy ratio of the injected draws
    /// (0 for position noise).
    pub realized_nmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    /// Record CIR length: `n_antennas * window.q()`.
    pub q: usize,
    pub n_antennas: usize,
    pub count: usize,
    pub seed: u64,
    /// Multiplier that maps stored CIR values into [-1, 1].
    pub scale_factor: f64,
    pub split_fraction: f64,
    pub window: DelayWindow,
    /// Box the positions were drawn from; consumers use it to normalize
    /// coordinates into the unit cube.
    pub region: Box3,
    pub scene_digest: String,
    pub noise: Option<NoiseReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub records: Vec<SampleRecord>,
}

impl Dataset {
    /// Records are stored shuffled, so the first `train_count` form the
    /// training split.
    pub fn train_count(&self) -> usize {
        split_train_count(self.records.len(), self.meta.split_fraction)
    }

    pub fn train_records(&self) -> &[SampleRecord] {
        &self.records[..self.train_count()]
    }

    pub fn test_records(&self) -> &[SampleRecord] {
        &self.records[self.train_count()..]
    }
}

pub fn split_train_count(n: usize, fraction: f64) -> usize {
    if n == 0 {
        0
    } else {
        ((n as f64 * fraction).floor() as usize).max(1).min(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowMode {
    /// Window starts 5 ns before the dataset's earliest path (q = 182).
    Auto { dt_s: f64 },
    Fixed(DelayWindow),
}

impl Default for WindowMode {
    fn default() -> Self {
        WindowMode::Auto { dt_s: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateConfig {
    /// True spatial density, samples per square meter of region footprint.
    pub density_per_m2: f64,
    pub seed: u64,
    pub window: WindowMode,
    pub split_fraction: f64,
    /// Overrides `scene.ue_region` (e.g. the desk-scale sub-box).
    pub region: Option<Box3>,
}

impl GenerateConfig {
    pub fn new(density_per_m2: f64, seed: u64) -> Self {
        Self {
            density_per_m2,
            seed,
            window: WindowMode::default(),
            split_fraction: 0.8,
            region: None,
        }
    }
}

/// Convert a density preset number (40/60/100) to samples per square meter.
/// At desk scale presets are total-count multipliers: expected records =
/// preset x 45. At paper scale the preset is the spatial density itself.
pub fn density_preset_to_per_m2(preset: f64, footprint_area_m2: f64, paper_scale: bool) -> f64 {
    if paper_scale {
        preset
    } else {
        preset * DESK_REFERENCE_AREA_M2 / footprint_area_m2
    }
}

/// Poisson point process over the region footprint at `min.z`. Positions
/// falling inside an exclusion box are redrawn.
pub fn sample_positions(
    region: &Box3,
    exclusions: &[Box3],
    density_per_m2: f64,
    seed: u64,
) -> Result<Vec<Vec3>> {
    if !region.is_ordered() || region.footprint_area() <= 0.0 {
        return Err(Error::DegenerateRegion);
    }
    if !(density_per_m2.is_finite() && density_per_m2 >= 0.0) {
        return Err(Error::Validation(format!(
            "density must be nonnegative, got {density_per_m2}"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let lambda = density_per_m2 * region.footprint_area();
    let count = if lambda <= 0.0 {
        0
    } else {
        let pois = Poisson::new(lambda)
            .map_err(|e| Error::Validation(format!("Poisson({lambda}): {e}")))?;
        pois.sample(&mut rng) as usize
    };
    sample_n_in(region, exclusions, count, &mut rng)
}

/// Exactly `count` uniform positions in the region footprint, outside all
/// exclusions. Used by probes and tests.
pub fn sample_n_positions(
    region: &Box3,
    exclusions: &[Box3],
    count: usize,
    seed: u64,
) -> Result<Vec<Vec3>> {
    if !region.is_ordered() || region.footprint_area() <= 0.0 {
        return Err(Error::DegenerateRegion);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    sample_n_in(region, exclusions, count, &mut rng)
}

fn sample_n_in(
    region: &Box3,
    exclusions: &[Box3],
    count: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<Vec3>> {
    let mut out = Vec::with_capacity(count);
    let budget = 1000 + count.saturating_mul(1000);
    let mut draws = 0usize;
    while out.len() < count {
        draws += 1;
        if draws > budget {
            return Err(Error::Validation(
                "exclusion boxes reject nearly all of the UE region".into(),
            ));
        }
        let p = Vec3::new(
            rng.random_range(region.min.x..region.max.x),
            rng.random_range(region.min.y..region.max.y),
            region.min.z,
        );
        if exclusions
            .iter()
            .any(|b| p.x >= b.min.x && p.x <= b.max.x && p.y >= b.min.y && p.y <= b.max.y)
        {
            continue;
        }
        out.push(p);
    }
    Ok(out)
}

fn rx_points(scene: &Scene) -> Vec<Vec3> {
    match &scene.bs_array {
        Some(arr) => (0..arr.len()).map(|i| arr.element(i)).collect(),
        None => vec![scene.bs_position],
    }
}

/// Trace every sampled position, synthesize CIR vectors, fit the max-abs
/// scale factor, and return the records pre-shuffled for splitting.
pub fn generate_dataset(scene: &Scene, cfg: &GenerateConfig) -> Result<(Dataset, SynthesisReport)> {
    scene.validate()?;
    if !(0.0..=1.0).contains(&cfg.split_fraction) {
        return Err(Error::Validation(format!(
            "split_fraction must be in [0, 1], got {}",
            cfg.split_fraction
        )));
    }
    let region = cfg.region.unwrap_or(scene.ue_region);
    let positions = sample_positions(&region, &scene.ue_exclusions, cfg.density_per_m2, cfg.seed)?;
    let rxs = rx_points(scene);

    let window = match cfg.window {
        WindowMode::Fixed(w) => w,
        WindowMode::Auto { dt_s } => {
            let mut min_delay = f64::INFINITY;
            for &pos in &positions {
                for &rx in &rxs {
                    for p in trace_paths_between(scene, rx, pos)? {
                        min_delay = min_delay.min(p.delay_s);
                    }
                }
            }
            if !min_delay.is_finite() {
                return Err(Error::Validation(
                    "no propagation paths found; cannot derive an auto window".into(),
                ));
            }
            DelayWindow::auto(min_delay, dt_s)?
        }
    };

    let mut report = SynthesisReport::default();
    let mut records = Vec::with_capacity(positions.len());
    let q_total = window.q() * rxs.len();
    for &pos in &positions {
        let mut cir = Vec::with_capacity(q_total);
        for &rx in &rxs {
            let paths = trace_paths_between(scene, rx, pos)?;
            let (v, r) = synthesize_cir(&paths, window);
            report.collided_bins += r.collided_bins;
            report.dropped_paths += r.dropped_paths;
            cir.extend_from_slice(&v.values);
        }
        records.push(SampleRecord {
            position: pos,
            position_noisy: None,
            cir,
            cir_noisy: None,
        });
    }

    let scale_factor = if records.is_empty() {
        1.0
    } else {
        fit_scale_factor(records.iter().map(|r| r.cir.as_slice()))?
    };

    // Shuffle once so the serialized order doubles as the split order.
    let mut shuffle_rng = ChaCha12Rng::seed_from_u64(cfg.seed ^ SHUFFLE_SALT);
    for i in (1..records.len()).rev() {
        let j = shuffle_rng.random_range(0..=i);
        records.swap(i, j);
    }

    let meta = DatasetMeta {
        q: q_total,
        n_antennas: rxs.len(),
        count: records.len(),
        seed: cfg.seed,
        scale_factor,
        split_fraction: cfg.split_fraction,
        window,
        region,
        scene_digest: scene.digest(),
        noise: None,
    };
    Ok((Dataset { meta, records }, report))
}

/// Max-abs normalizer: `1 / max |v|` over every value of every vector.
pub fn fit_scale_factor<'a>(vectors: impl Iterator<Item = &'a [f64]>) -> Result<f64> {
    let mut max_abs = 0.0f64;
    for v in vectors {
        for &x in v {
            max_abs = max_abs.max(x.abs());
        }
    }
    if max_abs == 0.0 {
        return Err(Error::AllZeroCir);
    }
    Ok(1.0 / max_abs)
}

/// Scale a vector into [-1, 1] by the fitted factor.
pub fn apply_scale(values: &[f64], scale_factor: f64) -> Vec<f64> {
    values.iter().map(|v| v * scale_factor).collect()
}

/// One draw from a symmetric alpha-stable law (Chambers-Mallows-Stuck).
/// `alpha` in (0, 2], `scale` > 0; alpha = 2 gives N(0, 2 scale^2), alpha = 1
/// gives a Cauchy with quartiles at +-scale.
pub fn sample_alpha_stable(rng: &mut impl Rng, alpha: f64, scale: f64) -> f64 {
    assert!(alpha > 0.0 && alpha <= 2.0, "alpha {alpha} outside (0, 2]");
    assert!(scale > 0.0, "scale {scale} must be positive");
    let u: f64 = rng.random_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2);
    let e: f64 = -(1.0 - rng.random::<f64>()).ln();
    if alpha == 1.0 {
        return scale * u.tan();
    }
    let x = (alpha * u).sin() / u.cos().powf(1.0 / alpha)
        * (((1.0 - alpha) * u).cos() / e).powf((1.0 - alpha) / alpha);
    scale * x
}

/// Inject one kind of noise into the dataset, recording what was realized in
/// `meta.noise`. Clean fields are never modified.
pub fn inject_noise(ds: &mut Dataset, spec: NoiseSpec, seed: u64) -> Result<NoiseReport> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let report = match spec {
        NoiseSpec::CirGaussian { target_nmse } => {
            if !(target_nmse.is_finite() && target_nmse >= 0.0) {
                return Err(Error::Validation(format!(
                    "target NMSE must be nonnegative, got {target_nmse}"
                )));
            }
            if target_nmse == 0.0 {
                NoiseReport {
                    spec,
                    realized_nmse: 0.0,
                }
            } else {
                let sum_y2: f64 = ds
                    .records
                    .iter()
                    .flat_map(|r| r.cir.iter())
                    .map(|v| v * v)
                    .sum();
                if sum_y2 == 0.0 {
                    return Err(Error::AllZeroCir);
                }
                let draws: Vec<Vec<f64>> = ds
                    .records
                    .iter()
                    .map(|r| {
                        (0..r.cir.len())
                            .map(|_| standard_normal(&mut rng))
                            .collect()
                    })
                    .collect();
                let sum_g2: f64 = draws.iter().flatten().map(|g| g * g).sum();
                // Calibrate the drawn realization exactly onto the target
                // energy ratio.
                let s = (target_nmse * sum_y2 / sum_g2).sqrt();
                let mut sum_n2 = 0.0;
                for (r, g) in ds.records.iter_mut().zip(&draws) {
                    let noisy: Vec<f64> = r
                        .cir
                        .iter()
                        .zip(g)
                        .map(|(v, g)| {
                            let n = s * g;
                            sum_n2 += n * n;
                            v + n
                        })
                        .collect();
                    r.cir_noisy = Some(noisy);
                }
                NoiseReport {
                    spec,
                    realized_nmse: sum_n2 / sum_y2,
                }
            }
        }
        NoiseSpec::CirAlphaStable {
            alpha,
            dispersion_scale,
        } => {
            if !(alpha > 0.0 && alpha <= 2.0) {
                return Err(Error::Validation(format!("alpha {alpha} outside (0, 2]")));
            }
            if !(dispersion_scale.is_finite() && dispersion_scale > 0.0) {
                return Err(Error::Validation(format!(
                    "dispersion scale must be positive, got {dispersion_scale}"
                )));
            }
            let mut sum_y2 = 0.0;
            let mut sum_n2 = 0.0;
            for r in ds.records.iter_mut() {
                let noisy: Vec<f64> = r
                    .cir
                    .iter()
                    .map(|v| {
                        sum_y2 += v * v;
                        let n = sample_alpha_stable(&mut rng, alpha, dispersion_scale);
                        sum_n2 += n * n;
                        v + n
                    })
                    .collect();
                r.cir_noisy = Some(noisy);
            }
            if sum_y2 == 0.0 {
                return Err(Error::AllZeroCir);
            }
            NoiseReport {
                spec,
                realized_nmse: sum_n2 / sum_y2,
            }
        }
        NoiseSpec::PositionGaussian { sigma_m } => {
            if !(sigma_m.is_finite() && sigma_m >= 0.0) {
                return Err(Error::Validation(format!(
                    "sigma must be nonnegative, got {sigma_m}"
                )));
            }
            for r in ds.records.iter_mut() {
                let d = Vec3::new(
                    sigma_m * standard_normal(&mut rng),
                    sigma_m * standard_normal(&mut rng),
                    sigma_m * standard_normal(&mut rng),
                );
                r.position_noisy = Some(r.position + d);
            }
            NoiseReport {
                spec,
                realized_nmse: 0.0,
            }
        }
    };
    ds.meta.noise = Some(report);
    Ok(report)
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    rand_distr::StandardNormal.sample(rng)
}

// --- binary .cirds format ---------------------------------------------------

const MAGIC: &[u8; 8] = b"CIRDS001";

struct Counter<W: Write> {
    inner: W,
}

impl<W: Write> Counter<W> {
    fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.inner.write_all(b)?;
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, what: &str) -> Error {
        Error::Corrupt {
            offset: self.pos as u64,
            what: what.to_string(),
        }
    }
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(self.corrupt(&format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn noise_kind_code(spec: &NoiseSpec) -> (u8, f64, f64) {
    match *spec {
        NoiseSpec::CirGaussian { target_nmse } => (1, target_nmse, 0.0),
        NoiseSpec::CirAlphaStable {
            alpha,
            dispersion_scale,
        } => (2, alpha, dispersion_scale),
        NoiseSpec::PositionGaussian { sigma_m } => (3, sigma_m, 0.0),
    }
}

/// Write the dataset in the versioned little-endian `.cirds` layout. Records
/// are stored in split order (training prefix first).
pub fn serialize_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let has_cir_noisy = ds.records.iter().filter(|r| r.cir_noisy.is_some()).count();
    let has_pos_noisy = ds
        .records
        .iter()
        .filter(|r| r.position_noisy.is_some())
        .count();
    if has_cir_noisy != 0 && has_cir_noisy != ds.records.len() {
        return Err(Error::Validation(
            "mixed presence of cir_noisy across records".into(),
        ));
    }
    if has_pos_noisy != 0 && has_pos_noisy != ds.records.len() {
        return Err(Error::Validation(
            "mixed presence of position_noisy across records".into(),
        ));
    }
    for (i, r) in ds.records.iter().enumerate() {
        if r.cir.len() != ds.meta.q {
            return Err(Error::ShapeMismatch {
                what: "record CIR",
                expected: ds.meta.q,
                got: r.cir.len(),
            });
        }
        if let Some(n) = &r.cir_noisy {
            if n.len() != ds.meta.q {
                return Err(Error::Validation(format!(
                    "record {i}: noisy CIR length {} != q {}",
                    n.len(),
                    ds.meta.q
                )));
            }
        }
    }

    let file = std::fs::File::create(path)?;
    let mut w = Counter {
        inner: std::io::BufWriter::new(file),
    };
    w.bytes(MAGIC)?;
    w.u32(ds.meta.q as u32)?;
    w.u32(ds.meta.n_antennas as u32)?;
    w.u64(ds.records.len() as u64)?;
    w.u64(ds.meta.seed)?;
    w.f64(ds.meta.scale_factor)?;
    w.f64(ds.meta.split_fraction)?;
    w.f64(ds.meta.window.start_s)?;
    w.f64(ds.meta.window.end_s)?;
    w.f64(ds.meta.window.dt_s)?;
    for v in ds.meta.region.min.to_array() {
        w.f64(v)?;
    }
    for v in ds.meta.region.max.to_array() {
        w.f64(v)?;
    }
    let mut flags = 0u8;
    if has_cir_noisy > 0 {
        flags |= 1;
    }
    if has_pos_noisy > 0 {
        flags |= 2;
    }
    if ds.meta.noise.is_some() {
        flags |= 4;
    }
    w.bytes(&[flags])?;
    if let Some(n) = &ds.meta.noise {
        let (kind, p1, p2) = noise_kind_code(&n.spec);
        w.bytes(&[kind])?;
        w.f64(p1)?;
        w.f64(p2)?;
        w.f64(n.realized_nmse)?;
    }
    let digest = hex_to_bytes(&ds.meta.scene_digest)?;
    w.bytes(&digest)?;
    for r in &ds.records {
        for v in r.position.to_array() {
            w.f64(v)?;
        }
        if let Some(p) = r.position_noisy {
            for v in p.to_array() {
                w.f64(v)?;
            }
        }
        for &v in &r.cir {
            w.f64(v)?;
        }
        if let Some(n) = &r.cir_noisy {
            for &v in n {
                w.f64(v)?;
            }
        }
    }
    w.inner.flush()?;
    Ok(())
}

pub fn deserialize_dataset(path: &Path) -> Result<Dataset> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Corrupt {
            offset: 0,
            what: "bad magic; not a .cirds file".into(),
        });
    }
    let q = r.u32("q")? as usize;
    let n_antennas = r.u32("n_antennas")? as usize;
    let count = r.u64("count")? as usize;
    let seed = r.u64("seed")?;
    let scale_factor = r.f64("scale_factor")?;
    let split_fraction = r.f64("split_fraction")?;
    let start_s = r.f64("window.start")?;
    let end_s = r.f64("window.end")?;
    let dt_s = r.f64("window.dt")?;
    let window = DelayWindow::new(start_s, end_s, dt_s)?;
    let region = Box3::new(
        Vec3::new(
            r.f64("region.min.x")?,
            r.f64("region.min.y")?,
            r.f64("region.min.z")?,
        ),
        Vec3::new(
            r.f64("region.max.x")?,
            r.f64("region.max.y")?,
            r.f64("region.max.z")?,
        ),
    );
    if window.q() * n_antennas.max(1) != q {
        return Err(r.corrupt(&format!(
            "q {} inconsistent with window ({} bins x {} antennas)",
            q,
            window.n_bins(),
            n_antennas
        )));
    }
    let flags = r.take(1, "flags")?[0];
    let noise = if flags & 4 != 0 {
        let kind = r.take(1, "noise kind")?[0];
        let p1 = r.f64("noise param 1")?;
        let p2 = r.f64("noise param 2")?;
        let realized = r.f64("realized nmse")?;
        let spec = match kind {
            1 => NoiseSpec::CirGaussian { target_nmse: p1 },
            2 => NoiseSpec::CirAlphaStable {
                alpha: p1,
                dispersion_scale: p2,
            },
            3 => NoiseSpec::PositionGaussian { sigma_m: p1 },
            k => return Err(r.corrupt(&format!("unknown noise kind {k}"))),
        };
        Some(NoiseReport {
            spec,
            realized_nmse: realized,
        })
    } else {
        None
    };
    let digest_bytes = r.take(32, "scene digest")?;
    let scene_digest = digest_bytes.iter().map(|b| format!("{b:02x}")).collect();

    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let position = Vec3::new(
            r.f64("position.x")?,
            r.f64("position.y")?,
            r.f64("position.z")?,
        );
        let position_noisy = if flags & 2 != 0 {
            Some(Vec3::new(
                r.f64("position_noisy.x")?,
                r.f64("position_noisy.y")?,
                r.f64("position_noisy.z")?,
            ))
        } else {
            None
        };
        let mut cir = Vec::with_capacity(q);
        for _ in 0..q {
            cir.push(r.f64("cir value")?);
        }
        let cir_noisy = if flags & 1 != 0 {
            let mut n = Vec::with_capacity(q);
            for _ in 0..q {
                n.push(r.f64("noisy cir value")?);
            }
            Some(n)
        } else {
            None
        };
        records.push(SampleRecord {
            position,
            position_noisy,
            cir,
            cir_noisy,
        });
    }
    if r.pos != buf.len() {
        return Err(r.corrupt("trailing bytes after last record"));
    }
    Ok(Dataset {
        meta: DatasetMeta {
            q,
            n_antennas,
            count,
            seed,
            scale_factor,
            split_fraction,
            window,
            region,
            scene_digest,
            noise,
        },
        records,
    })
}

fn hex_to_bytes(hex: &str) -> Result<[u8; 32]> {
    let mut out = [0u8; 32];
    if hex.len() != 64 {
        return Err(Error::Validation(format!(
            "scene digest must be 64 hex chars, got {}",
            hex.len()
        )));
    }
    for (i, chunk) in hex.as_bytes().chunks(2).enumerate() {
        let s = std::str::from_utf8(chunk)
            .map_err(|_| Error::Validation("scene digest is not valid hex".into()))?;
        out[i] = u8::from_str_radix(s, 16)
            .map_err(|_| Error::Validation("scene digest is not valid hex".into()))?;
    }
    Ok(out)
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let hash = Sha256::digest(&buf);
    Ok(hash.iter().map(|b| format!("{b:02x}")).collect())
}

// --- CSV mirror ---------------------------------------------------------------

/// Write the clean records as CSV: one leading `#` metadata line, a header
/// row `x,y,z,re_1,im_1,...`, then one row per record. Values print in
/// shortest round-trip form, so importing reproduces them bit-exactly. Noisy
/// companion fields are not exported.
pub fn export_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    let rg = ds.meta.region;
    writeln!(
        w,
        "# cirds q={} antennas={} count={} seed={} scale_factor={} split_fraction={} window_start_s={} window_end_s={} dt_s={} region={},{},{},{},{},{} scene={}",
        ds.meta.q,
        ds.meta.n_antennas,
        ds.records.len(),
        ds.meta.seed,
        ds.meta.scale_factor,
        ds.meta.split_fraction,
        ds.meta.window.start_s,
        ds.meta.window.end_s,
        ds.meta.window.dt_s,
        rg.min.x,
        rg.min.y,
        rg.min.z,
        rg.max.x,
        rg.max.y,
        rg.max.z,
        ds.meta.scene_digest
    )?;
    let mut header = String::from("x,y,z");
    for k in 1..=ds.meta.q / 2 {
        header.push_str(&format!(",re_{k},im_{k}"));
    }
    writeln!(w, "{header}")?;
    for r in &ds.records {
        let mut row = format!("{},{},{}", r.position.x, r.position.y, r.position.z);
        for v in &r.cir {
            row.push(',');
            row.push_str(&format!("{v}"));
        }
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(())
}

/// Read back a CSV produced by [`export_csv`] into a clean dataset.
pub fn import_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let meta_line = lines
        .next()
        .ok_or_else(|| Error::Validation("empty CSV".into()))?;
    let meta_line = meta_line
        .strip_prefix("# cirds ")
        .ok_or_else(|| Error::Validation("missing `# cirds` metadata line".into()))?;
    let mut fields = std::collections::BTreeMap::new();
    for kv in meta_line.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Validation(format!("bad metadata field {kv:?}")))?;
        fields.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| -> Result<&String> {
        fields
            .get(k)
            .ok_or_else(|| Error::Validation(format!("metadata missing {k}")))
    };
    let parse_f = |k: &str| -> Result<f64> {
        get(k)?
            .parse()
            .map_err(|_| Error::Validation(format!("metadata field {k} is not a number")))
    };
    let q: usize = get("q")?
        .parse()
        .map_err(|_| Error::Validation("bad q".into()))?;
    let n_antennas: usize = get("antennas")?
        .parse()
        .map_err(|_| Error::Validation("bad antennas".into()))?;
    let count: usize = get("count")?
        .parse()
        .map_err(|_| Error::Validation("bad count".into()))?;
    let seed: u64 = get("seed")?
        .parse()
        .map_err(|_| Error::Validation("bad seed".into()))?;
    let window = DelayWindow::new(
        parse_f("window_start_s")?,
        parse_f("window_end_s")?,
        parse_f("dt_s")?,
    )?;
    let region_vals: Vec<f64> = get("region")?
        .split(',')
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Validation("bad region coordinate".into()))
        })
        .collect::<Result<_>>()?;
    if region_vals.len() != 6 {
        return Err(Error::Validation(format!(
            "region needs 6 coordinates, got {}",
            region_vals.len()
        )));
    }
    let region = Box3::new(
        Vec3::new(region_vals[0], region_vals[1], region_vals[2]),
        Vec3::new(region_vals[3], region_vals[4], region_vals[5]),
    );

    lines.next(); // column header
    let mut records = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut vals = line.split(',').map(|s| s.parse::<f64>());
        let mut next = |what: &str| -> Result<f64> {
            vals.next()
                .ok_or_else(|| Error::Validation(format!("row {i}: missing {what}")))?
                .map_err(|_| Error::Validation(format!("row {i}: bad {what}")))
        };
        let position = Vec3::new(next("x")?, next("y")?, next("z")?);
        let mut cir = Vec::with_capacity(q);
        for k in 0..q {
            cir.push(next(&format!("value {k}"))?);
        }
        records.push(SampleRecord {
            position,
            position_noisy: None,
            cir,
            cir_noisy: None,
        });
    }
    if records.len() != count {
        return Err(Error::Validation(format!(
            "CSV declares {count} records but has {}",
            records.len()
        )));
    }
    Ok(Dataset {
        meta: DatasetMeta {
            q,
            n_antennas,
            count,
            seed,
            scale_factor: parse_f("scale_factor")?,
            split_fraction: parse_f("split_fraction")?,
            window,
            region,
            scene_digest: get("scene")?.clone(),
            noise: None,
        },
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::paper_scene;

    fn unit_region() -> Box3 {
        Box3::new(Vec3::new(0.0, 0.0, 1.6), Vec3::new(1.0, 1.0, 1.6))
    }

    #[test]
    fn poisson_count_statistics() {
        let region = unit_region();
        let counts: Vec<f64> = (0..500)
            .map(|s| sample_positions(&region, &[], 100.0, s).unwrap().len() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / counts.len() as f64;
        assert!((mean - 100.0).abs() < 10.0, "mean {mean}");
        assert!((70.0..130.0).contains(&var), "var {var}");
    }

    #[test]
    fn zero_density_gives_no_positions() {
        let got = sample_positions(&unit_region(), &[], 0.0, 7).unwrap();
        assert!(got.is_empty());
    }

    #[test]
    fn sampling_is_deterministic() {
        let region = unit_region();
        let a = sample_positions(&region, &[], 50.0, 42).unwrap();
        let b = sample_positions(&region, &[], 50.0, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_positions(&region, &[], 50.0, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_region_errors() {
        let region = Box3::new(Vec3::new(0.0, 0.0, 1.6), Vec3::new(0.0, 1.0, 1.6));
        assert!(matches!(
            sample_positions(&region, &[], 10.0, 1),
            Err(Error::DegenerateRegion)
        ));
    }

    #[test]
    fn exclusions_are_respected() {
        let region = unit_region();
        let hole = Box3::new(Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.5, 1.0, 5.0));
        let pts = sample_positions(&region, &[hole], 200.0, 3).unwrap();
        assert!(!pts.is_empty());
        for p in pts {
            assert!(p.x > 0.5);
        }
    }

    #[test]
    fn full_exclusion_errors_instead_of_spinning() {
        let region = unit_region();
        let hole = Box3::new(Vec3::new(-1.0, -1.0, 0.0), Vec3::new(2.0, 2.0, 5.0));
        assert!(sample_positions(&region, &[hole], 50.0, 3).is_err());
    }

    #[test]
    fn free_space_records_have_one_nonzero_bin() {
        let mut scene = paper_scene();
        scene.surfaces.clear();
        let mut cfg = GenerateConfig::new(0.2, 11);
        // Compact patch so the LOS delay spread stays inside one 91-bin
        // window; over the whole street it exceeds the window span.
        cfg.region = Some(Box3::new(
            Vec3::new(20.0, 20.0, 1.6),
            Vec3::new(30.0, 30.0, 1.6),
        ));
        let (ds, report) = generate_dataset(&scene, &cfg).unwrap();
        assert!(ds.meta.count > 0);
        assert_eq!(ds.meta.q, 182);
        assert_eq!(report.dropped_paths, 0);
        for r in &ds.records {
            let nonzero = (0..91)
                .filter(|&k| r.cir[2 * k] != 0.0 || r.cir[2 * k + 1] != 0.0)
                .count();
            assert_eq!(nonzero, 1);
        }
    }

    #[test]
    fn scale_factor_examples() {
        let f = fit_scale_factor([[2.0, -4.0, 1.0].as_slice()].into_iter()).unwrap();
        assert_eq!(f, 0.25);
        assert_eq!(apply_scale(&[2.0, -4.0, 1.0], f), vec![0.5, -1.0, 0.25]);

        let f = fit_scale_factor([[0.5, -0.25].as_slice()].into_iter()).unwrap();
        assert_eq!(f, 2.0);

        assert!(matches!(
            fit_scale_factor([[0.0, 0.0].as_slice()].into_iter()),
            Err(Error::AllZeroCir)
        ));
    }

    #[test]
    fn scaling_round_trips() {
        let v = vec![3.25e-5, -1.5e-7, 9.0e-6];
        let f = fit_scale_factor([v.as_slice()].into_iter()).unwrap();
        let scaled = apply_scale(&v, f);
        assert!(scaled.iter().all(|x| x.abs() <= 1.0));
        for (orig, s) in v.iter().zip(&scaled) {
            let back = s / f;
            assert!((back - orig).abs() <= 1e-12 * orig.abs());
        }
        let arg = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .unwrap()
                .0
        };
        assert_eq!(arg(&v), arg(&scaled));
    }

    #[test]
    fn alpha_two_matches_gaussian_variance() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let scale = 0.7;
        let n = 1_000_000;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let x = sample_alpha_stable(&mut rng, 2.0, scale);
            sum2 += x * x;
        }
        let var = sum2 / n as f64;
        let expect = 2.0 * scale * scale;
        assert!((var - expect).abs() / expect < 0.02, "var {var} vs {expect}");
    }

    #[test]
    fn alpha_one_is_cauchy() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let scale = 1.3;
        let mut xs: Vec<f64> = (0..200_000)
            .map(|_| sample_alpha_stable(&mut rng, 1.0, scale))
            .collect();
        xs.sort_by(f64::total_cmp);
        let med = xs[xs.len() / 2];
        let q1 = xs[xs.len() / 4];
        let q3 = xs[3 * xs.len() / 4];
        assert!(med.abs() < 0.02, "median {med}");
        let iqr = q3 - q1;
        assert!(
            (iqr - 2.0 * scale).abs() / (2.0 * scale) < 0.02,
            "IQR {iqr} vs {}",
            2.0 * scale
        );
    }

    fn tiny_dataset(n: usize, q: usize) -> Dataset {
        let window = DelayWindow::paper();
        let records = (0..n)
            .map(|i| SampleRecord {
                position: Vec3::new(i as f64, 0.0, 1.6),
                position_noisy: None,
                cir: (0..q).map(|k| ((i * q + k) as f64).sin() * 1e-5).collect(),
                cir_noisy: None,
            })
            .collect();
        Dataset {
            meta: DatasetMeta {
                q,
                n_antennas: 1,
                count: n,
                seed: 5,
                scale_factor: 1.0,
                split_fraction: 0.8,
                window,
                region: Box3::new(Vec3::new(0.0, 0.0, 1.6), Vec3::new(10.0, 10.0, 1.6)),
                scene_digest: "00".repeat(32),
                noise: None,
            },
            records,
        }
    }

    #[test]
    fn gaussian_noise_hits_target_nmse() {
        let mut ds = tiny_dataset(50, 182);
        let report =
            inject_noise(&mut ds, NoiseSpec::CirGaussian { target_nmse: 0.01 }, 123).unwrap();
        assert!((report.realized_nmse - 0.01).abs() / 0.01 < 0.01);
        let sum_y2: f64 = ds
            .records
            .iter()
            .flat_map(|r| r.cir.iter())
            .map(|v| v * v)
            .sum();
        let sum_n2: f64 = ds
            .records
            .iter()
            .flat_map(|r| {
                r.cir_noisy
                    .as_ref()
                    .unwrap()
                    .iter()
                    .zip(&r.cir)
                    .map(|(n, y)| (n - y).powi(2))
            })
            .sum();
        assert!((sum_n2 / sum_y2 - 0.01).abs() / 0.01 < 0.01);
    }

    #[test]
    fn zero_target_leaves_records_clean() {
        let mut ds = tiny_dataset(5, 10);
        let report = inject_noise(&mut ds, NoiseSpec::CirGaussian { target_nmse: 0.0 }, 1).unwrap();
        assert_eq!(report.realized_nmse, 0.0);
        assert!(ds.records.iter().all(|r| r.cir_noisy.is_none()));
    }

    #[test]
    fn position_noise_mean_displacement() {
        let mut ds = tiny_dataset(100_000, 2);
        let sigma = 0.03;
        inject_noise(&mut ds, NoiseSpec::PositionGaussian { sigma_m: sigma }, 77).unwrap();
        let mean: f64 = ds
            .records
            .iter()
            .map(|r| (r.position_noisy.unwrap() - r.position).norm())
            .sum::<f64>()
            / ds.records.len() as f64;
        // E||N(0, s^2 I3)|| = s * sqrt(8/pi)
        let expect = sigma * (8.0 / std::f64::consts::PI).sqrt();
        assert!((mean - expect).abs() / expect < 0.02, "mean {mean}");
        for r in &ds.records {
            assert!(r.cir_noisy.is_none());
        }
    }

    #[test]
    fn split_sizes() {
        assert_eq!(split_train_count(100, 0.8), 80);
        assert_eq!(split_train_count(1, 0.8), 1);
        assert_eq!(split_train_count(0, 0.8), 0);
        assert_eq!(split_train_count(4, 0.8), 3);
        let ds = tiny_dataset(100, 4);
        assert_eq!(ds.train_records().len(), 80);
        assert_eq!(ds.test_records().len(), 20);
    }

    #[test]
    fn binary_round_trip_is_byte_identical() {
        let dir = std::env::temp_dir().join("cirforge_test_rt");
        std::fs::create_dir_all(&dir).unwrap();
        let mut ds = tiny_dataset(20, 182);
        inject_noise(&mut ds, NoiseSpec::CirGaussian { target_nmse: 0.02 }, 4).unwrap();
        let p1 = dir.join("a.cirds");
        let p2 = dir.join("b.cirds");
        serialize_dataset(&ds, &p1).unwrap();
        let back = deserialize_dataset(&p1).unwrap();
        assert_eq!(ds, back);
        serialize_dataset(&back, &p2).unwrap();
        assert_eq!(file_digest(&p1).unwrap(), file_digest(&p2).unwrap());
    }

    #[test]
    fn truncated_file_reports_offset() {
        let dir = std::env::temp_dir().join("cirforge_test_trunc");
        std::fs::create_dir_all(&dir).unwrap();
        let ds = tiny_dataset(3, 10);
        let p = dir.join("t.cirds");
        serialize_dataset(&ds, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 4]).unwrap();
        match deserialize_dataset(&p) {
            Err(Error::Corrupt { offset, .. }) => assert!(offset > 0),
            other => panic!("expected Corrupt, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = std::env::temp_dir().join("cirforge_test_magic");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("m.cirds");
        std::fs::write(&p, b"NOTCIRDSxxxxxxxxxxxxxxxxxxx").unwrap();
        assert!(matches!(
            deserialize_dataset(&p),
            Err(Error::Corrupt { offset: 0, .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join("cirforge_test_csv");
        std::fs::create_dir_all(&dir).unwrap();
        let ds = tiny_dataset(7, 182);
        let p1 = dir.join("a.csv");
        let p2 = dir.join("b.csv");
        export_csv(&ds, &p1).unwrap();
        let back = import_csv(&p1).unwrap();
        assert_eq!(ds, back);
        export_csv(&back, &p2).unwrap();
        assert_eq!(file_digest(&p1).unwrap(), file_digest(&p2).unwrap());
        let text = std::fs::read_to_string(&p1).unwrap();
        let header = text.lines().nth(1).unwrap();
        assert!(header.starts_with("x,y,z,re_1,im_1,"));
        assert!(header.ends_with("re_91,im_91"));
        assert_eq!(header.split(',').count(), 3 + 182);
    }

    #[test]
    fn density_preset_conversion() {
        // Desk scale: preset 40 over a 450 m^2 footprint -> 4 samples/m^2,
        // i.e. 1,800 expected records.
        let per_m2 = density_preset_to_per_m2(40.0, 450.0, false);
        assert_eq!(per_m2 * 450.0, 1800.0);
        let per_m2 = density_preset_to_per_m2(100.0, 450.0, false);
        assert_eq!(per_m2 * 450.0, 4500.0);
        // Paper scale: preset is the density itself.
        assert_eq!(density_preset_to_per_m2(60.0, 1500.0, true), 60.0);
    }
}
