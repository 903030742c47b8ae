//! Specular multipath tracing by the method of images.
//!
//! For a reflection chain s_1..s_k the transmitter is mirrored through each
//! plane in turn; the straight segment from the receiver to the deepest image
//! has the exact length of the folded physical path. Walking that segment
//! back through the chain recovers the reflection points, each of which must
//! fall strictly inside its finite rectangle for the chain to be real.

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scene::{Polarization, Scene, Surface, SPEED_OF_LIGHT};

/// One propagation path between transmitter and receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct PathComponent {
    /// Propagation delay in seconds: `length_m / c`.
    pub delay_s: f64,
    /// Complex amplitude of the path at the carrier frequency.
    pub gain_re: f64,
    pub gain_im: f64,
    pub length_m: f64,
    /// Surfaces hit, in bounce order from the transmitter. Empty for LOS.
    pub surface_ids: Vec<usize>,
    /// Reflection points matching `surface_ids`.
    pub reflection_points: Vec<Vec3>,
}

impl PathComponent {
    pub fn order(&self) -> usize {
        self.surface_ids.len()
    }
}

/// Mirror `p` through the (infinite) plane of `s`.
pub fn mirror_point(p: Vec3, s: &Surface) -> Vec3 {
    let ax = s.plane_axis.index();
    let mut out = p;
    out.set_axis(ax, 2.0 * s.plane_coord - p.axis(ax));
    out
}

/// Fresnel reflection coefficients (perpendicular, parallel) for a ray
/// hitting a dielectric of relative permittivity `eps`, with `theta_rad` the
/// incidence angle measured from the surface normal.
///
/// Requires `theta_rad` in [0, pi/2) and `eps >= 1`; both coefficients are
/// then real.
pub fn reflection_coefficients(theta_rad: f64, eps: f64) -> (f64, f64) {
    assert!(
        (0.0..std::f64::consts::FRAC_PI_2).contains(&theta_rad),
        "incidence angle {theta_rad} outside [0, pi/2)"
    );
    assert!(eps >= 1.0, "relative permittivity {eps} < 1");
    let c = theta_rad.cos();
    let root = (eps - theta_rad.sin().powi(2)).sqrt();
    let r_perp = (c - root) / (c + root);
    let r_par = (eps * c - root) / (eps * c + root);
    (r_perp, r_par)
}

/// Complex gain of a path: free-space amplitude `lambda / (4 pi d)` times the
/// product of per-bounce reflection coefficients, rotated by the carrier
/// phase `exp(-j 2 pi f d / c)`.
pub fn path_gain(
    length_m: f64,
    bounces: &[(f64, f64)], // (incidence angle, permittivity) per bounce
    frequency_hz: f64,
    polarization: Polarization,
) -> (f64, f64) {
    let lambda = SPEED_OF_LIGHT / frequency_hz;
    let mut amp = lambda / (4.0 * std::f64::consts::PI * length_m);
    for &(theta, eps) in bounces {
        let (r_perp, r_par) = reflection_coefficients(theta, eps);
        amp *= match polarization {
            Polarization::Perpendicular => r_perp,
            Polarization::Parallel => r_par,
        };
    }
    let phase = -2.0 * std::f64::consts::PI * frequency_hz * length_m / SPEED_OF_LIGHT;
    (amp * phase.cos(), amp * phase.sin())
}

/// All specular paths between the scene transmitter and `ue`, up to
/// `scene.max_reflection_order` bounces. LOS first, then chains in surface
/// index order.
pub fn trace_paths(scene: &Scene, ue: Vec3) -> Result<Vec<PathComponent>> {
    trace_paths_between(scene, scene.bs_position, ue)
}

/// Same as [`trace_paths`] with an explicit transmitter, used for per-element
/// array traces and reciprocity checks.
pub fn trace_paths_between(scene: &Scene, tx: Vec3, rx: Vec3) -> Result<Vec<PathComponent>> {
    if tx.dist(rx) < 1e-12 {
        return Err(Error::CoincidentEndpoints);
    }
    let mut out = Vec::new();
    if !scene.occlusion_check || segment_clear(scene, tx, rx) {
        out.push(finish_path(scene, tx, rx, &[], Vec::new()));
    }
    let mut chain = Vec::new();
    let mut images = Vec::new();
    extend_chains(scene, tx, rx, &mut chain, &mut images, &mut out);
    Ok(out)
}

fn extend_chains(
    scene: &Scene,
    tx: Vec3,
    rx: Vec3,
    chain: &mut Vec<usize>,
    images: &mut Vec<Vec3>,
    out: &mut Vec<PathComponent>,
) {
    if chain.len() >= scene.max_reflection_order {
        return;
    }
    for idx in 0..scene.surfaces.len() {
        // Mirroring twice through the same plane is the identity; skip
        // adjacent repeats.
        if chain.last() == Some(&idx) {
            continue;
        }
        let prev = images.last().copied().unwrap_or(tx);
        images.push(mirror_point(prev, &scene.surfaces[idx]));
        chain.push(idx);
        if let Some(points) = validate_chain(scene, rx, chain, images) {
            let mut ok = true;
            if scene.occlusion_check {
                ok = path_unblocked(scene, tx, rx, &points);
            }
            if ok {
                out.push(finish_path(scene, tx, rx, chain, points));
            }
        }
        extend_chains(scene, tx, rx, chain, images, out);
        chain.pop();
        images.pop();
    }
}

/// Walk the unfolded segment back through the chain. Returns the reflection
/// points (bounce order from the transmitter) if every crossing is strictly
/// between its segment endpoints and strictly inside its rectangle.
fn validate_chain(
    scene: &Scene,
    rx: Vec3,
    chain: &[usize],
    images: &[Vec3],
) -> Option<Vec<Vec3>> {
    let k = chain.len();
    let mut points = vec![Vec3::new(0.0, 0.0, 0.0); k];
    let mut seg_start = rx;
    for m in (0..k).rev() {
        let s = &scene.surfaces[chain[m]];
        let seg_end = images[m];
        let ax = s.plane_axis.index();
        let denom = seg_end.axis(ax) - seg_start.axis(ax);
        if denom == 0.0 {
            return None;
        }
        let t = (s.plane_coord - seg_start.axis(ax)) / denom;
        if !(t > 0.0 && t < 1.0) {
            return None;
        }
        let p = seg_start + (seg_end - seg_start) * t;
        if !s.contains_interior(p) {
            return None;
        }
        points[m] = p;
        seg_start = p;
    }
    Some(points)
}

fn finish_path(
    scene: &Scene,
    tx: Vec3,
    rx: Vec3,
    chain: &[usize],
    points: Vec<Vec3>,
) -> PathComponent {
    let mut length = 0.0;
    let mut prev = tx;
    let mut bounces = Vec::with_capacity(chain.len());
    for (m, &idx) in chain.iter().enumerate() {
        let p = points[m];
        let seg = p - prev;
        length += seg.norm();
        let s = &scene.surfaces[idx];
        let cos_theta = (seg.axis(s.plane_axis.index()) / seg.norm()).abs();
        bounces.push((cos_theta.clamp(-1.0, 1.0).acos(), s.permittivity));
        prev = p;
    }
    length += (rx - prev).norm();
    let (gain_re, gain_im) = path_gain(length, &bounces, scene.frequency_hz, scene.polarization);
    PathComponent {
        delay_s: length / SPEED_OF_LIGHT,
        gain_re,
        gain_im,
        length_m: length,
        surface_ids: chain.to_vec(),
        reflection_points: points,
    }
}

/// Whether the open segment a..b misses every surface. Crossings within 1e-9
/// of an endpoint are ignored so reflection points do not shadow their own
/// surfaces.
fn segment_clear(scene: &Scene, a: Vec3, b: Vec3) -> bool {
    const EPS: f64 = 1e-9;
    for s in &scene.surfaces {
        let ax = s.plane_axis.index();
        let denom = b.axis(ax) - a.axis(ax);
        if denom == 0.0 {
            continue;
        }
        let t = (s.plane_coord - a.axis(ax)) / denom;
        if t > EPS && t < 1.0 - EPS {
            let p = a + (b - a) * t;
            if s.contains_interior(p) {
                return false;
            }
        }
    }
    true
}

fn path_unblocked(scene: &Scene, tx: Vec3, rx: Vec3, points: &[Vec3]) -> bool {
    let mut prev = tx;
    for &p in points {
        if !segment_clear(scene, prev, p) {
            return false;
        }
        prev = p;
    }
    segment_clear(scene, prev, rx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Box3;
    use crate::scene::Axis;

    fn wall_y0(extent: f64, eps: f64) -> Surface {
        Surface {
            plane_axis: Axis::Y,
            plane_coord: 0.0,
            min_u: -extent,
            max_u: extent,
            min_v: -extent,
            max_v: extent,
            permittivity: eps,
        }
    }

    fn scene_with(surfaces: Vec<Surface>, bs: Vec3) -> Scene {
        Scene {
            frequency_hz: 3.0e9,
            bs_position: bs,
            surfaces,
            max_reflection_order: 2,
            occlusion_check: false,
            polarization: Polarization::Perpendicular,
            ue_region: Box3::new(Vec3::new(-1.0, 1.0, -1.0), Vec3::new(1.0, 2.0, 1.0)),
            ue_exclusions: Vec::new(),
            bs_array: None,
        }
    }

    #[test]
    fn mirror_examples() {
        let wall = Surface {
            plane_axis: Axis::Y,
            plane_coord: 30.0,
            min_u: 0.0,
            max_u: 1.0,
            min_v: 0.0,
            max_v: 1.0,
            permittivity: 4.0,
        };
        assert_eq!(
            mirror_point(Vec3::new(45.0, 48.0, 37.0), &wall),
            Vec3::new(45.0, 12.0, 37.0)
        );
        // a point on the plane is its own image
        assert_eq!(
            mirror_point(Vec3::new(7.0, 30.0, -2.0), &wall),
            Vec3::new(7.0, 30.0, -2.0)
        );
    }

    #[test]
    fn mirror_is_involutive() {
        let walls = [
            wall_y0(5.0, 4.0),
            Surface {
                plane_axis: Axis::X,
                plane_coord: -3.5,
                min_u: 0.0,
                max_u: 2.0,
                min_v: 0.0,
                max_v: 2.0,
                permittivity: 2.0,
            },
            Surface {
                plane_axis: Axis::Z,
                plane_coord: 18.0,
                min_u: 0.0,
                max_u: 2.0,
                min_v: 0.0,
                max_v: 2.0,
                permittivity: 2.0,
            },
        ];
        let p = Vec3::new(1.25, -7.5, 3.125);
        for w in &walls {
            assert_eq!(mirror_point(mirror_point(p, w), w), p);
        }
    }

    #[test]
    fn fresnel_normal_incidence() {
        // vacuum behind the wall reflects nothing
        let (rp, rl) = reflection_coefficients(0.0, 1.0);
        assert_eq!(rp, 0.0);
        assert_eq!(rl, 0.0);
        // eps = 4 at normal incidence: (1-2)/(1+2) and (4-2)/(4+2)
        let (rp, rl) = reflection_coefficients(0.0, 4.0);
        assert!((rp - (-1.0 / 3.0)).abs() < 1e-15);
        assert!((rl - (1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn fresnel_grazing_limit() {
        let theta = std::f64::consts::FRAC_PI_2 - 1e-6;
        for eps in [2.0, 5.31, 15.0] {
            let (rp, rl) = reflection_coefficients(theta, eps);
            assert!(rp.abs() > 0.999, "r_perp {rp} at grazing");
            assert!(rl.abs() > 0.999, "r_par {rl} at grazing");
        }
    }

    #[test]
    fn free_space_has_only_los() {
        let scene = scene_with(Vec::new(), Vec3::new(0.0, 0.0, 0.0));
        let paths = trace_paths(&scene, Vec3::new(3.0, 4.0, 12.0)).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].order(), 0);
        assert_eq!(paths[0].length_m, 13.0);
        assert!((paths[0].delay_s - 13.0 / SPEED_OF_LIGHT).abs() < 1e-18);
    }

    #[test]
    fn single_wall_three_four_five() {
        // TX (0,3,0), RX (3,1,0), wall y=0: image (0,-3,0), so the NLOS leg
        // lengths are 3.75 + 1.25 = 5 with the bounce at (2.25, 0, 0).
        let scene = scene_with(vec![wall_y0(1e6, 4.0)], Vec3::new(0.0, 3.0, 0.0));
        let mut paths = trace_paths(&scene, Vec3::new(3.0, 1.0, 0.0)).unwrap();
        paths.sort_by(|a, b| a.order().cmp(&b.order()));
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0].order(), 0);
        assert!((paths[0].length_m - 13.0f64.sqrt()).abs() < 1e-12);
        assert_eq!(paths[1].order(), 1);
        assert!((paths[1].length_m - 5.0).abs() < 1e-12);
        let p = paths[1].reflection_points[0];
        assert!((p - Vec3::new(2.25, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn reflection_point_outside_rectangle_invalidates_path() {
        // Same geometry but the wall ends at x = 2: the bounce at x = 2.25
        // misses it.
        let mut wall = wall_y0(1e6, 4.0);
        wall.min_u = -1.0;
        wall.max_u = 2.0;
        let scene = scene_with(vec![wall], Vec3::new(0.0, 3.0, 0.0));
        let paths = trace_paths(&scene, Vec3::new(3.0, 1.0, 0.0)).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].order(), 0);
    }

    #[test]
    fn same_side_requirement() {
        // RX behind the wall: no specular path (and with occlusion on, no LOS
        // either).
        let mut scene = scene_with(vec![wall_y0(1e6, 4.0)], Vec3::new(0.0, 3.0, 0.0));
        let paths = trace_paths(&scene, Vec3::new(0.5, -2.0, 0.0)).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].order(), 0);
        scene.occlusion_check = true;
        let paths = trace_paths(&scene, Vec3::new(0.5, -2.0, 0.0)).unwrap();
        assert!(paths.is_empty());
    }

    #[test]
    fn reciprocity_of_path_lengths() {
        let scene = crate::scene::paper_scene();
        let ue = Vec3::new(33.0, 22.0, 1.6);
        let fwd = trace_paths_between(&scene, scene.bs_position, ue).unwrap();
        let rev = trace_paths_between(&scene, ue, scene.bs_position).unwrap();
        assert_eq!(fwd.len(), rev.len());
        let mut a: Vec<f64> = fwd.iter().map(|p| p.length_m).collect();
        let mut b: Vec<f64> = rev.iter().map(|p| p.length_m).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn los_gain_magnitude_at_100m() {
        let (re, im) = path_gain(100.0, &[], 3.0e9, Polarization::Perpendicular);
        let mag = (re * re + im * im).sqrt();
        let lambda = SPEED_OF_LIGHT / 3.0e9;
        assert!((mag - lambda / (400.0 * std::f64::consts::PI)).abs() < 1e-18);
        assert!((mag - 7.953e-5).abs() < 1e-8);
    }

    #[test]
    fn normal_bounce_gain_is_third_of_los() {
        // TX (0,30,0) -> wall y=0 -> RX (0,70,0): d = 100, normal incidence.
        let scene = {
            let mut s = scene_with(vec![wall_y0(1e6, 4.0)], Vec3::new(0.0, 30.0, 0.0));
            s.polarization = Polarization::Perpendicular;
            s
        };
        let paths = trace_paths(&scene, Vec3::new(0.0, 70.0, 0.0)).unwrap();
        let nlos = paths.iter().find(|p| p.order() == 1).unwrap();
        assert!((nlos.length_m - 100.0).abs() < 1e-12);
        let mag = (nlos.gain_re.powi(2) + nlos.gain_im.powi(2)).sqrt();
        assert!((mag - 2.651e-5).abs() < 1e-8);
        // perpendicular coefficient is negative at normal incidence
        let lambda = SPEED_OF_LIGHT / 3.0e9;
        let expect = lambda / (400.0 * std::f64::consts::PI) / 3.0;
        assert!((mag - expect).abs() < 1e-18);
    }

    #[test]
    fn gain_decays_with_distance() {
        let mut last = f64::INFINITY;
        for d in [10.0, 20.0, 50.0, 100.0, 500.0] {
            let (re, im) = path_gain(d, &[], 3.0e9, Polarization::Perpendicular);
            let mag = (re * re + im * im).sqrt();
            assert!(mag < last);
            last = mag;
        }
    }

    #[test]
    fn vacuum_wall_reflects_nothing() {
        let scene = scene_with(vec![wall_y0(1e6, 1.0)], Vec3::new(0.0, 3.0, 0.0));
        let paths = trace_paths(&scene, Vec3::new(3.0, 1.0, 0.0)).unwrap();
        let nlos = paths.iter().find(|p| p.order() == 1).unwrap();
        assert_eq!(nlos.gain_re, 0.0);
        assert_eq!(nlos.gain_im, 0.0);
    }

    #[test]
    fn coincident_endpoints_error() {
        let scene = scene_with(Vec::new(), Vec3::new(1.0, 2.0, 3.0));
        assert!(matches!(
            trace_paths(&scene, Vec3::new(1.0, 2.0, 3.0)),
            Err(Error::CoincidentEndpoints)
        ));
    }

    #[test]
    fn second_order_between_parallel_walls() {
        // Walls y=0 and y=10, TX and RX between them: the order-2 chains
        // bounce off both walls. Folded length must equal the image length.
        let wall_a = wall_y0(1e6, 4.0);
        let mut wall_b = wall_y0(1e6, 4.0);
        wall_b.plane_coord = 10.0;
        let scene = scene_with(vec![wall_a, wall_b], Vec3::new(0.0, 3.0, 0.0));
        let paths = trace_paths(&scene, Vec3::new(4.0, 6.0, 0.0)).unwrap();
        let second: Vec<_> = paths.iter().filter(|p| p.order() == 2).collect();
        assert_eq!(second.len(), 2);
        for p in second {
            let mut length = 0.0;
            let mut prev = scene.bs_position;
            for &pt in &p.reflection_points {
                length += prev.dist(pt);
                prev = pt;
            }
            length += prev.dist(Vec3::new(4.0, 6.0, 0.0));
            assert!((length - p.length_m).abs() < 1e-9);
        }
    }

    #[test]
    fn paper_scene_guarantees_multipath() {
        let scene = crate::scene::paper_scene();
        for ue in [
            Vec3::new(21.0, 16.0, 1.6),
            Vec3::new(63.0, 22.0, 1.6), // above the along-street gap
            Vec3::new(119.0, 29.0, 1.6),
            Vec3::new(45.0, 29.9, 1.6),
        ] {
            let paths = trace_paths(&scene, ue).unwrap();
            assert!(paths.iter().any(|p| p.order() == 0), "LOS at {ue:?}");
            assert!(
                paths.iter().any(|p| p.order() >= 1),
                "specular path at {ue:?}"
            );
        }
    }
}
