//! Geometric primitives and the distance measures used by every other stage.
//!
//! Frame poses map camera coordinates to the global frame. Patch geometry
//! is always stored in camera coordinates; global planes are derived from the
//! current pose whenever they are needed.

mod fit;
mod transform;
mod types;

pub use fit::{farthest_point_sampling, fit_plane, procrustes_rotation, rigid_fit, PointMoments};
pub use transform::RigidTransform;
pub use types::{Frame, Grid, Intrinsics, PatchKey, PixelRect, Plane, PlanePatch};

use nalgebra::Vector3;

use crate::error::Result;

/// Signed distance from `t · v` to `phi`: `(R v + t − p) · n`.
pub fn point_to_plane_distance(t: &RigidTransform, v: &Vector3<f64>, phi: &Plane) -> f64 {
    (t.rotation * v + t.translation - phi.point).dot(&phi.normal)
}

/// Mean squared distance from the samples of `p` (posed by `tp`) to the
/// global plane of `q` (posed by `tq`).
fn directed_mean_square(
    tp: &RigidTransform,
    p: &PlanePatch,
    tq: &RigidTransform,
    q: &PlanePatch,
) -> f64 {
    let phi = q.plane.transformed(tq);
    let sum: f64 = p
        .samples
        .iter()
        .map(|v| point_to_plane_distance(tp, v, &phi).powi(2))
        .sum();
    sum / p.samples.len() as f64
}

/// Squared coplanarity distance δ² of patch `p` (frame posed by `ti`) and
/// patch `q` (frame posed by `tj`).
pub fn coplanarity_distance_sq(
    ti: &RigidTransform,
    tj: &RigidTransform,
    p: &PlanePatch,
    q: &PlanePatch,
) -> Result<f64> {
    p.ensure_samples()?;
    q.ensure_samples()?;
    Ok(directed_mean_square(ti, p, tj, q) + directed_mean_square(tj, q, ti, p))
}

/// Coplanarity distance δ: RMS point-to-plane distance over both sample sets.
pub fn coplanarity_distance(
    ti: &RigidTransform,
    tj: &RigidTransform,
    p: &PlanePatch,
    q: &PlanePatch,
) -> Result<f64> {
    coplanarity_distance_sq(ti, tj, p, q).map(f64::sqrt)
}

/// Bounding sphere used to prune nearest-neighbour scans.
#[derive(Debug, Clone, Copy)]
struct Sphere {
    center: Vector3<f64>,
    radius: f64,
}

impl Sphere {
    fn of(points: &[Vector3<f64>]) -> Sphere {
        let center = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
        let radius = points
            .iter()
            .map(|p| (p - center).norm())
            .fold(0.0, f64::max);
        Sphere { center, radius }
    }
}

fn nearest_sq(x: &Vector3<f64>, set: &[Vector3<f64>]) -> f64 {
    set.iter()
        .map(|y| (x - y).norm_squared())
        .fold(f64::INFINITY, f64::min)
}

/// Sum of squared nearest-neighbour distances from `src` to `dst`, abandoning
/// the scan once the running sum exceeds `budget`.
fn nn_sum_sq(src: impl Iterator<Item = Vector3<f64>>, dst: &[Vector3<f64>], budget: f64) -> f64 {
    let mut sum = 0.0;
    for x in src {
        sum += nearest_sq(&x, dst);
        if sum > budget {
            return sum;
        }
    }
    sum
}

/// Symmetric RMS closest-point distance between the samples of `p`, mapped
/// by `t_rel` into the frame of `q`, and the samples of `q`.
pub fn rms_closest_distance(p: &PlanePatch, q: &PlanePatch, t_rel: &RigidTransform) -> Result<f64> {
    p.ensure_samples()?;
    q.ensure_samples()?;
    let n = (p.samples.len() + q.samples.len()) as f64;
    let inv = t_rel.inverse();
    let fwd = nn_sum_sq(p.samples.iter().map(|v| t_rel.transform_point(v)), &q.samples, f64::INFINITY);
    let bwd = nn_sum_sq(q.samples.iter().map(|v| inv.transform_point(v)), &p.samples, f64::INFINITY);
    Ok(((fwd + bwd) / n).sqrt())
}

/// `rms_closest_distance(p, q, t_rel) <= threshold`, with early exits.
pub fn within_rms_closest_distance(
    p: &PlanePatch,
    q: &PlanePatch,
    t_rel: &RigidTransform,
    threshold: f64,
) -> bool {
    if p.samples.is_empty() || q.samples.is_empty() {
        return false;
    }
    let n = (p.samples.len() + q.samples.len()) as f64;
    let budget = threshold * threshold * n;
    // Lower bound from bounding spheres before the quadratic scan.
    let sq = Sphere::of(&q.samples);
    let lower: f64 = p
        .samples
        .iter()
        .map(|v| ((t_rel.transform_point(v) - sq.center).norm() - sq.radius).max(0.0).powi(2))
        .sum();
    if lower > budget {
        return false;
    }
    let fwd = nn_sum_sq(p.samples.iter().map(|v| t_rel.transform_point(v)), &q.samples, budget);
    if fwd > budget {
        return false;
    }
    let inv = t_rel.inverse();
    let bwd = nn_sum_sq(q.samples.iter().map(|v| inv.transform_point(v)), &p.samples, budget - fwd);
    fwd + bwd <= budget
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn patch_from_samples(frame_id: usize, samples: Vec<Vector3<f64>>) -> PlanePatch {
        let (plane, _) = fit_plane(&samples).unwrap();
        let centroid = plane.point;
        PlanePatch {
            id: 0,
            frame_id,
            plane,
            samples,
            pixel_count: 1,
            area: 1.0,
            centroid,
            bbox_px: PixelRect::default(),
            pixels: Vec::new(),
        }
    }

    fn grid_on_z(z: f64, offset: (f64, f64)) -> Vec<Vector3<f64>> {
        let mut v = Vec::new();
        for i in 0..5 {
            for j in 0..4 {
                v.push(Vector3::new(offset.0 + i as f64 * 0.1, offset.1 + j as f64 * 0.1, z));
            }
        }
        v
    }

    #[test]
    fn point_to_plane_examples() {
        let id = RigidTransform::identity();
        let phi = Plane::new(Vector3::zeros(), Vector3::z());
        assert_eq!(point_to_plane_distance(&id, &Vector3::new(0.0, 0.0, 1.0), &phi), 1.0);
        assert_eq!(point_to_plane_distance(&id, &Vector3::new(3.0, -1.0, 0.0), &phi), 0.0);
        let t = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 0.5));
        assert_eq!(point_to_plane_distance(&t, &Vector3::new(1.0, 2.0, 0.0), &phi), 0.5);
    }

    #[test]
    fn coplanarity_examples() {
        let id = RigidTransform::identity();
        let p = patch_from_samples(0, grid_on_z(1.0, (0.0, 0.0)));
        let q = patch_from_samples(1, grid_on_z(1.0, (0.7, -0.3)));
        assert!(coplanarity_distance(&id, &id, &p, &q).unwrap().abs() < 1e-12);

        let tj = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 0.1));
        let d = coplanarity_distance(&id, &tj, &p, &q).unwrap();
        // hand evaluation: every per-point distance is 0.1 in both directions
        assert!((d - (0.01f64 + 0.01).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn coplanarity_rejects_empty_patch() {
        let id = RigidTransform::identity();
        let p = patch_from_samples(0, grid_on_z(1.0, (0.0, 0.0)));
        let mut q = p.clone();
        q.samples.clear();
        assert!(matches!(
            coplanarity_distance(&id, &id, &p, &q),
            Err(Error::DegeneratePatch(_))
        ));
    }

    #[test]
    fn point_to_plane_matches_raw_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let mut r3 = || Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let (w, t, v, p, n) = (r3(), r3(), r3(), r3(), r3());
            let tr = RigidTransform::from_axis_angle(w, t);
            let phi = Plane::new(p, n);
            let m = tr.matrix();
            let mut brute = 0.0;
            for row in 0..3 {
                let mut x = t[row] - p[row];
                for col in 0..3 {
                    x += m[(row, col)] * v[col];
                }
                brute += x * phi.normal[row];
            }
            assert!((point_to_plane_distance(&tr, &v, &phi) - brute).abs() < 1e-12);
        }
    }

    fn arb_points() -> impl Strategy<Value = Vec<Vector3<f64>>> {
        prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 4..20)
            .prop_map(|v| v.into_iter().map(|a| Vector3::new(a[0], a[1], 0.3 * a[2] + 2.0)).collect())
    }

    fn arb_pose() -> impl Strategy<Value = RigidTransform> {
        (prop::array::uniform3(-1.0f64..1.0), prop::array::uniform3(-2.0f64..2.0))
            .prop_map(|(w, t)| RigidTransform::from_axis_angle(Vector3::from(w), Vector3::from(t)))
    }

    proptest! {
        #[test]
        fn coplanarity_symmetric_and_rigid_invariant(
            a in arb_points(), b in arb_points(), ti in arb_pose(), tj in arb_pose(), g in arb_pose()
        ) {
            let p = patch_from_samples(0, a);
            let q = patch_from_samples(1, b);
            let d = coplanarity_distance(&ti, &tj, &p, &q).unwrap();
            let swapped = coplanarity_distance(&tj, &ti, &q, &p).unwrap();
            prop_assert_eq!(d, swapped);
            let moved = coplanarity_distance(&(g * ti), &(g * tj), &p, &q).unwrap();
            prop_assert!((moved - d).abs() < 1e-10);
        }
    }

    #[test]
    fn rms_closest_examples() {
        let id = RigidTransform::identity();
        let p = patch_from_samples(0, grid_on_z(2.0, (0.0, 0.0)));
        assert_eq!(rms_closest_distance(&p, &p, &id).unwrap(), 0.0);

        // dense samples along a line with 0.02 m spacing, shifted by one step
        let line: Vec<_> = (0..50).map(|k| Vector3::new(k as f64 * 0.02, 0.0, 2.0)).collect();
        let shifted: Vec<_> = line.iter().map(|v| v + Vector3::new(0.02, 0.0, 0.0)).collect();
        let mut lp = p.clone();
        lp.samples = line.clone();
        let mut lq = p.clone();
        lq.samples = shifted.clone();
        let d = rms_closest_distance(&lp, &lq, &id).unwrap();
        let brute = {
            let mut s = 0.0;
            for x in &line {
                s += shifted.iter().map(|y| (x - y).norm_squared()).fold(f64::MAX, f64::min);
            }
            for x in &shifted {
                s += line.iter().map(|y| (x - y).norm_squared()).fold(f64::MAX, f64::min);
            }
            (s / 100.0).sqrt()
        };
        assert!((d - brute).abs() < 1e-12);
        assert!(d <= 0.02);

        let g = RigidTransform::from_axis_angle(Vector3::new(0.2, -0.1, 0.3), Vector3::new(0.5, 0.1, -0.2));
        let q = p.transformed(&g);
        assert!(rms_closest_distance(&p, &q, &g).unwrap() < 1e-9);
        assert!(within_rms_closest_distance(&p, &q, &g, 0.01));
        assert!(!within_rms_closest_distance(&p, &q, &id, 0.01));
    }
}
