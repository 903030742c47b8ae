//! Scene description: axis-aligned reflecting rectangles, a transmitter, and
//! the region users are sampled from.
//!
//! Surfaces are finite rectangles on axis-aligned planes. `plane_axis` names
//! the normal axis; the in-plane (u, v) axes are the remaining two in
//! ascending order: X -> (y, z), Y -> (x, z), Z -> (x, y).

use crate::error::{Error, Result};
use crate::geometry::{Box3, Vec3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Relative permittivity used for building walls in the bundled scenes
/// (typical concrete at low GHz).
pub const CONCRETE_PERMITTIVITY: f64 = 5.31;
/// Relative permittivity of the bundled ground plane (medium dry ground).
pub const GROUND_PERMITTIVITY: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// The two in-plane axes, in ascending order.
    pub fn uv(self) -> (usize, usize) {
        match self {
            Axis::X => (1, 2),
            Axis::Y => (0, 2),
            Axis::Z => (0, 1),
        }
    }
}

/// Finite rectangle on an axis-aligned plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub plane_axis: Axis,
    pub plane_coord: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub min_v: f64,
    pub max_v: f64,
    /// Relative permittivity of the material behind the surface.
    pub permittivity: f64,
}

impl Surface {
    /// Whether `p` (assumed on the plane) lies strictly inside the rectangle.
    pub fn contains_interior(&self, p: Vec3) -> bool {
        let (ua, va) = self.plane_axis.uv();
        let (u, v) = (p.axis(ua), p.axis(va));
        u > self.min_u && u < self.max_u && v > self.min_v && v < self.max_v
    }

    /// Signed distance from `p` to the surface plane.
    pub fn plane_distance(&self, p: Vec3) -> f64 {
        p.axis(self.plane_axis.index()) - self.plane_coord
    }

    fn validate(&self, idx: usize) -> Result<()> {
        let fin = self.plane_coord.is_finite()
            && self.min_u.is_finite()
            && self.max_u.is_finite()
            && self.min_v.is_finite()
            && self.max_v.is_finite()
            && self.permittivity.is_finite();
        if !fin {
            return Err(Error::Validation(format!("surface {idx}: non-finite field")));
        }
        if self.min_u >= self.max_u || self.min_v >= self.max_v {
            return Err(Error::Validation(format!(
                "surface {idx}: degenerate rectangle (min_u {} max_u {} min_v {} max_v {})",
                self.min_u, self.max_u, self.min_v, self.max_v
            )));
        }
        if self.permittivity < 1.0 {
            return Err(Error::Validation(format!(
                "surface {idx}: relative permittivity {} < 1",
                self.permittivity
            )));
        }
        Ok(())
    }
}

/// Which Fresnel coefficient applies at every bounce. The field wiring of a
/// specular chain is not tracked; one linear polarization is assumed
/// throughout a scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    #[default]
    Perpendicular,
    Parallel,
}

/// Rectangular antenna array parallel to the x-y plane. Element (i, j) sits
/// at `origin + (i*spacing, j*spacing, 0)`; the flat index is `i*ny + j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub nx: usize,
    pub ny: usize,
    pub origin: Vec3,
    pub spacing_m: f64,
}

impl ArraySpec {
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn element(&self, flat: usize) -> Vec3 {
        let i = flat / self.ny;
        let j = flat % self.ny;
        self.origin + Vec3::new(i as f64 * self.spacing_m, j as f64 * self.spacing_m, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub frequency_hz: f64,
    pub bs_position: Vec3,
    pub surfaces: Vec<Surface>,
    #[serde(default = "default_order")]
    pub max_reflection_order: usize,
    #[serde(default)]
    pub occlusion_check: bool,
    #[serde(default)]
    pub polarization: Polarization,
    pub ue_region: Box3,
    /// Sub-boxes of `ue_region` that user positions must avoid.
    #[serde(default)]
    pub ue_exclusions: Vec<Box3>,
    /// Receive array for multi-antenna datasets; absent for single-antenna.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bs_array: Option<ArraySpec>,
}

fn default_order() -> usize {
    2
}

impl Scene {
    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency_hz
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency_hz.is_finite() && self.frequency_hz > 0.0) {
            return Err(Error::Validation(format!(
                "frequency_hz must be positive, got {}",
                self.frequency_hz
            )));
        }
        if !self.bs_position.is_finite() {
            return Err(Error::Validation("bs_position is not finite".into()));
        }
        for (i, s) in self.surfaces.iter().enumerate() {
            s.validate(i)?;
            // A transmitter sitting on a reflector would make its own mirror
            // image degenerate.
            if s.plane_distance(self.bs_position).abs() < 1e-9
                && self.contains_with_margin(s, self.bs_position)
            {
                return Err(Error::Validation(format!(
                    "bs_position lies on surface {i}"
                )));
            }
        }
        if !(self.ue_region.min.is_finite() && self.ue_region.max.is_finite()) {
            return Err(Error::Validation("ue_region is not finite".into()));
        }
        if !self.ue_region.is_ordered() || self.ue_region.footprint_area() <= 0.0 {
            return Err(Error::DegenerateRegion);
        }
        for (i, b) in self.ue_exclusions.iter().enumerate() {
            if !b.is_ordered() {
                return Err(Error::Validation(format!("ue_exclusions[{i}] has min > max")));
            }
        }
        Ok(())
    }

    fn contains_with_margin(&self, s: &Surface, p: Vec3) -> bool {
        let (ua, va) = s.plane_axis.uv();
        let (u, v) = (p.axis(ua), p.axis(va));
        u >= s.min_u - 1e-9 && u <= s.max_u + 1e-9 && v >= s.min_v - 1e-9 && v <= s.max_v + 1e-9
    }

    /// Hex SHA-256 of the canonical TOML serialization. Identifies the scene
    /// in dataset files.
    pub fn digest(&self) -> String {
        let text = toml::to_string(self).expect("scene serializes");
        let hash = Sha256::digest(text.as_bytes());
        let mut out = String::with_capacity(64);
        for b in hash {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let scene: Scene = toml::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }
}

/// Five faces of an axis-aligned building: four walls plus the roof. The
/// floor is omitted (it is coplanar with the ground and unreachable).
pub fn building_surfaces(min: Vec3, max: Vec3, permittivity: f64) -> Vec<Surface> {
    vec![
        Surface {
            plane_axis: Axis::X,
            plane_coord: min.x,
            min_u: min.y,
            max_u: max.y,
            min_v: min.z,
            max_v: max.z,
            permittivity,
        },
        Surface {
            plane_axis: Axis::X,
            plane_coord: max.x,
            min_u: min.y,
            max_u: max.y,
            min_v: min.z,
            max_v: max.z,
            permittivity,
        },
        Surface {
            plane_axis: Axis::Y,
            plane_coord: min.y,
            min_u: min.x,
            max_u: max.x,
            min_v: min.z,
            max_v: max.z,
            permittivity,
        },
        Surface {
            plane_axis: Axis::Y,
            plane_coord: max.y,
            min_u: min.x,
            max_u: max.x,
            min_v: min.z,
            max_v: max.z,
            permittivity,
        },
        Surface {
            plane_axis: Axis::Z,
            plane_coord: max.z,
            min_u: min.x,
            max_u: max.x,
            min_v: min.y,
            max_v: max.y,
            permittivity,
        },
    ]
}

/// Urban canyon: two building rows along x with a 30 m street between them,
/// a ground plane, and a mast-mounted transmitter above the north row.
///
/// North row (y in [45, 55], 10 m deep): buildings 1 and 2.
/// South row (y in [-1, 15], 16 m deep): buildings 4 and 3.
/// Each building is 55 m long and 18 m tall; the along-street gaps are 16 m.
/// Users live in the street at z = 1.6 m.
pub fn paper_scene() -> Scene {
    let mut surfaces = Vec::new();
    // building 1 (north-west) and 2 (north-east)
    surfaces.extend(building_surfaces(
        Vec3::new(0.0, 45.0, 0.0),
        Vec3::new(55.0, 55.0, 18.0),
        CONCRETE_PERMITTIVITY,
    ));
    surfaces.extend(building_surfaces(
        Vec3::new(71.0, 45.0, 0.0),
        Vec3::new(126.0, 55.0, 18.0),
        CONCRETE_PERMITTIVITY,
    ));
    // building 3 (south-east) and 4 (south-west)
    surfaces.extend(building_surfaces(
        Vec3::new(71.0, -1.0, 0.0),
        Vec3::new(126.0, -1.0 + 16.0, 18.0),
        CONCRETE_PERMITTIVITY,
    ));
    surfaces.extend(building_surfaces(
        Vec3::new(0.0, -1.0, 0.0),
        Vec3::new(55.0, -1.0 + 16.0, 18.0),
        CONCRETE_PERMITTIVITY,
    ));
    // street ground
    surfaces.push(Surface {
        plane_axis: Axis::Z,
        plane_coord: 0.0,
        min_u: -10.0,
        max_u: 136.0,
        min_v: 0.0,
        max_v: 45.0,
        permittivity: GROUND_PERMITTIVITY,
    });
    Scene {
        frequency_hz: 3.0e9,
        bs_position: Vec3::new(45.0, 48.0, 37.0),
        surfaces,
        max_reflection_order: 2,
        occlusion_check: false,
        polarization: Polarization::Perpendicular,
        ue_region: Box3::new(Vec3::new(20.0, 15.0, 1.6), Vec3::new(120.0, 30.0, 1.6)),
        ue_exclusions: Vec::new(),
        bs_array: None,
    }
}

/// `paper_scene` plus a fifth, taller building in the street that shadows
/// part of the user region, producing NLoS-only samples. Occlusion testing is
/// on so the shadow actually removes the direct path.
pub fn paper_scene_nlos() -> Scene {
    let mut scene = paper_scene();
    let b5_min = Vec3::new(40.0, 30.0, 0.0);
    let b5_max = Vec3::new(100.0, 35.0, 26.0);
    scene
        .surfaces
        .extend(building_surfaces(b5_min, b5_max, CONCRETE_PERMITTIVITY));
    scene.ue_region = Box3::new(Vec3::new(20.0, 15.0, 1.6), Vec3::new(120.0, 35.0, 1.6));
    scene.ue_exclusions = vec![Box3::new(
        Vec3::new(b5_min.x, b5_min.y, 0.0),
        Vec3::new(b5_max.x, b5_max.y, b5_max.z),
    )];
    scene.occlusion_check = true;
    scene
}

/// `paper_scene` with an 8x8 half-wavelength receive array whose first
/// element sits at (45, 18, 37).
pub fn paper_scene_mimo() -> Scene {
    let mut scene = paper_scene();
    let origin = Vec3::new(45.0, 18.0, 37.0);
    scene.bs_position = origin;
    scene.bs_array = Some(ArraySpec {
        nx: 8,
        ny: 8,
        origin,
        spacing_m: scene.wavelength_m() / 2.0,
    });
    scene
}

/// Street sub-box used by the desk-scale dataset presets: a 6 m x 3 m
/// footprint hugging the transmitter's side of the street, centered under
/// its along-street position.
///
/// Sizing: the desk presets draw 1,800 to 4,500 records, so this footprint
/// puts the sample spacing at 0.07 to 0.11 m. The in-plane delay gradient on
/// this strip stays below 0.52, so the field's spatial period is above
/// 0.096 m at 3 GHz: the densest preset resolves the oscillation and the
/// sparsest sits at the aliasing edge, which is the regime the density
/// sweep is meant to probe. A wider strip pushes every preset deep into
/// aliasing and no coordinate network can interpolate between samples.
/// The strip steps south past any excluded block (the NLoS blocker) that
/// overlaps it in x.
pub fn desk_region(scene: &Scene) -> Box3 {
    let min = scene.ue_region.min;
    let max = scene.ue_region.max;
    let x0 = (scene.bs_position.x - 3.0).min(max.x - 6.0).max(min.x);
    let x1 = (x0 + 6.0).min(max.x);
    let mut y1 = max.y;
    for ex in &scene.ue_exclusions {
        if x0 < ex.max.x && x1 > ex.min.x && y1 > ex.min.y {
            y1 = ex.min.y;
        }
    }
    let y0 = (y1 - 3.0).max(min.y);
    Box3::new(Vec3::new(x0, y0, min.z), Vec3::new(x1, y1, max.z))
}

/// Resolve a scene argument that is either a bundled preset name or a path to
/// a TOML file.
pub fn load_scene(arg: &str) -> Result<Scene> {
    match arg {
        "paper_scene" => Ok(paper_scene()),
        "paper_scene_nlos" => Ok(paper_scene_nlos()),
        "paper_scene_mimo" => Ok(paper_scene_mimo()),
        path => {
            let text = std::fs::read_to_string(path)?;
            Scene::from_toml(&text)
        }
    }
}

pub fn scene_preset_names() -> &'static [&'static str] {
    &["paper_scene", "paper_scene_nlos", "paper_scene_mimo"]
}
