use super::*;
use crate::geometry::{fit_plane, Intrinsics, RigidTransform};
use crate::synth::{generate_scene, look_rotation, CameraModel, Layout, SceneSpec, TrajectoryShape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn intrinsics() -> Intrinsics {
    CameraModel::default().intrinsics
}

/// Depth image of the plane `n·X = d` (camera coordinates).
fn plane_frame(n: Vector3<f64>, d: f64, w: usize, h: usize) -> Frame {
    let k = intrinsics();
    let mut depth = Grid::new(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let r = k.ray(x as f64, y as f64);
            let z = d / n.dot(&r);
            if z > 0.0 {
                depth.set(x, y, z);
            }
        }
    }
    Frame::new(0, depth, k)
}

fn angle_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.normalize().dot(&b.normalize()).clamp(-1.0, 1.0).acos().to_degrees()
}

#[test]
fn fronto_parallel_normals_face_camera() {
    let frame = plane_frame(Vector3::z(), 2.0, 160, 120);
    let normals = estimate_normals(&frame, &ExtractionParams::default()).unwrap();
    let valid: Vec<_> = normals.data.iter().filter(|n| n.norm() > 0.0).collect();
    assert!(valid.len() > 160 * 120 - 20);
    for n in valid {
        assert!(angle_deg(n, &-Vector3::z()) < 0.5);
    }
}

#[test]
fn tilted_plane_normals_match_analytic() {
    let a = 30f64.to_radians();
    let n = Vector3::new(0.0, a.sin(), -a.cos());
    let frame = plane_frame(n, -2.0 * a.cos(), 160, 120);
    let normals = estimate_normals(&frame, &ExtractionParams::default()).unwrap();
    let mut checked = 0;
    for v in normals.data.iter().filter(|v| v.norm() > 0.0) {
        assert!(angle_deg(v, &n) < 1.0);
        checked += 1;
    }
    assert!(checked > 10_000);
}

#[test]
fn noisy_and_invalid_depth_is_total() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut depth = Grid::new(64, 48, 0.0);
    for z in depth.data.iter_mut() {
        *z = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.5..5.0) };
    }
    let frame = Frame::new(0, depth, intrinsics());
    let normals = estimate_normals(&frame, &ExtractionParams::default()).unwrap();
    assert!(normals.data.iter().any(|n| n.norm() == 0.0));
    let _ = segment_planar_patches(&frame, &ExtractionParams::default()).unwrap();

    let empty = Frame::new(0, Grid::new(32, 24, 0.0), intrinsics());
    assert!(matches!(estimate_normals(&empty, &ExtractionParams::default()), Err(Error::NoValidDepth)));
    assert!(segment_planar_patches(&empty, &ExtractionParams::default()).unwrap().is_empty());
}

#[test]
fn small_plane_is_discarded() {
    let mut frame = plane_frame(Vector3::z(), 2.0, 160, 120);
    for y in 0..120 {
        for x in 0..160 {
            if !(60..80).contains(&x) || !(50..60).contains(&y) {
                frame.depth.set(x, y, 0.0);
            }
        }
    }
    assert_eq!(frame.depth.data.iter().filter(|z| **z > 0.0).count(), 200);
    assert!(segment_planar_patches(&frame, &ExtractionParams::default()).unwrap().is_empty());
    let lenient = ExtractionParams { min_valid_pixels: 100, ..Default::default() };
    assert_eq!(segment_planar_patches(&frame, &lenient).unwrap().len(), 1);
}

fn corner_scene(depth_sigma: f64) -> (crate::synth::SyntheticScene, Frame) {
    let pos = Vector3::new(0.4, -0.6, 1.4);
    let target = Vector3::new(3.0, 1.5, 0.0);
    let pose = RigidTransform::new(look_rotation(&(target - pos), &Vector3::z()), pos);
    let spec = SceneSpec {
        layout: Layout::Corner,
        trajectory: TrajectoryShape::Explicit(vec![pose]),
        render_images: true,
        depth_sigma,
        ..SceneSpec::default()
    };
    let scene = generate_scene(&spec).unwrap();
    let frame = scene.rendered_frames().remove(0);
    (scene, frame)
}

#[test]
fn three_orthogonal_planes_are_recovered() {
    let (scene, frame) = corner_scene(0.0);
    let params = ExtractionParams::default();
    let patches = segment_planar_patches(&frame, &params).unwrap();
    assert_eq!(patches.len(), 3, "{:?}", patches.iter().map(|p| p.pixel_count).collect::<Vec<_>>());
    let inv = scene.trajectory[0].inverse();
    let mut matched = vec![false; 3];
    for p in &patches {
        let hit = scene.planes.iter().enumerate().find(|(_, sp)| {
            let mut truth = sp.plane().transformed(&inv);
            if truth.normal.dot(&truth.point) > 0.0 {
                truth.normal = -truth.normal;
            }
            angle_deg(&p.plane.normal, &truth.normal) < 1.0 && (p.plane.offset() - truth.offset()).abs() < 0.005
        });
        let (k, _) = hit.expect("patch matches a scene plane");
        assert!(!matched[k]);
        matched[k] = true;
    }
}

#[test]
fn patch_invariants_hold_under_noise() {
    let (_, frame) = corner_scene(0.003);
    let params = ExtractionParams::default();
    let patches = segment_planar_patches(&frame, &params).unwrap();
    assert!(!patches.is_empty());
    let mut seen = std::collections::HashSet::new();
    for (k, p) in patches.iter().enumerate() {
        assert_eq!(p.id as usize, k);
        assert!(p.pixel_count >= params.min_valid_pixels);
        assert_eq!(p.pixel_count, p.pixels.len());
        assert_eq!(p.samples.len(), params.samples_per_patch);
        let pts: Vec<_> = p.pixels.iter().map(|[x, y]| frame.point(*x as usize, *y as usize).unwrap()).collect();
        for px in &p.pixels {
            assert!(seen.insert(*px), "pixel {px:?} in two patches");
        }
        let (refit, rms) = fit_plane(&pts).unwrap();
        assert!(rms <= params.merge_plane_rms_m);
        assert!(angle_deg(&refit.normal, &p.plane.normal) < 1e-6);
        let (from_samples, _) = fit_plane(&p.samples).unwrap();
        assert!(angle_deg(&from_samples.normal, &p.plane.normal) < 1e-6);
        assert!((from_samples.offset() - p.plane.offset()).abs() < 1e-6);
    }
}

#[test]
fn patch_area_matches_visible_rectangle() {
    let frame = plane_frame(Vector3::z(), 2.0, 160, 120);
    let patches = segment_planar_patches(&frame, &ExtractionParams::default()).unwrap();
    assert_eq!(patches.len(), 1);
    // the image spans 160×120 pixels of 2 cm at 2 m
    assert!((patches[0].area - 160.0 * 120.0 * 0.02 * 0.02).abs() < 1e-6);
}

fn rect_patch(frame: &Frame, x0: u32, y0: u32, w: u32, h: u32) -> PlanePatch {
    let pixels: Vec<[u32; 2]> = (y0..y0 + h).flat_map(|y| (x0..x0 + w).map(move |x| [x, y])).collect();
    build_patch(frame, 0, pixels, 64).unwrap()
}

#[test]
fn crop_windows_scale_the_bbox() {
    let bbox = PixelRect { x0: 140, y0: 110, x1: 179, y1: 129 };
    let local = CropWindow::around(&bbox, LOCAL_SCALE, 320, 240);
    assert_eq!((local.width(), local.height()), (60.0, 30.0));
    let global = CropWindow::around(&bbox, GLOBAL_SCALE, 320, 240);
    assert_eq!((global.width(), global.height()), (200.0, 100.0));
    let clamped = CropWindow::around(&bbox, GLOBAL_SCALE, 200, 240);
    assert_eq!(clamped.x1, 200.0);
}

#[test]
fn inputs_have_expected_masks() {
    let mut frame = plane_frame(Vector3::z(), 2.0, 320, 240);
    frame.color = Some(Grid::new(320, 240, [200, 10, 10]));
    frame.normals = Some(estimate_normals(&frame, &ExtractionParams::default()).unwrap());
    let patch = rect_patch(&frame, 140, 110, 40, 20);
    let b = build_patch_inputs(&frame, &patch).unwrap();
    for s in [&b.local, &b.global] {
        assert_eq!(s.rgb.dimensions(), (224, 224));
        assert_eq!(s.depth.dimensions(), (224, 224));
        assert_eq!(s.normals.dimensions(), (224, 224));
        assert_eq!(s.mask.dimensions(), (224, 224));
    }
    assert!(b.local.mask.pixels().all(|m| m[0] == 0.0 || m[0] == 1.0));
    assert!(b.global.mask.pixels().all(|m| (0.0..=1.0).contains(&m[0])));
    // 60×30 window padded to 60×60: top rows are padding
    assert_eq!(b.local.rgb.get_pixel(112, 0).0, [128, 128, 128]);
    assert_eq!(b.local.depth.get_pixel(112, 0)[0], 0.0);
    assert_eq!(b.local.rgb.get_pixel(112, 112).0, [200, 10, 10]);
    assert!((b.local.depth.get_pixel(112, 112)[0] - 2.0).abs() < 1e-6);
    assert_eq!(b.local.mask.get_pixel(112, 112)[0], 1.0);
    assert_eq!(b.local.mask.get_pixel(112, 60)[0], 0.0);
    // global: 1 on the patch, 0 at the first row of the crop (a crop corner)
    assert_eq!(b.global.mask.get_pixel(112, 112)[0], 1.0);
    let first_row = (0..224).find(|&j| b.global.rgb.get_pixel(0, j).0 != [128, 128, 128]).unwrap();
    assert_eq!(b.global.mask.get_pixel(0, first_row)[0], 0.0);
    let mid = b.global.mask.get_pixel(60, 112)[0];
    assert!(mid > 0.0 && mid < 1.0);
}

#[test]
fn whole_image_patch_fills_local_crop() {
    let mut frame = plane_frame(Vector3::z(), 2.0, 160, 120);
    frame.color = Some(Grid::new(160, 120, [10, 200, 10]));
    let patch = rect_patch(&frame, 0, 0, 160, 120);
    let b = build_patch_inputs(&frame, &patch).unwrap();
    // 160×120 padded to 160×160: rows map to 120 image rows in the middle
    for j in 0..224 {
        let y = j as f64 * 159.0 / 223.0 - 20.0;
        let inside = (0.0..=119.0).contains(&y);
        assert_eq!(b.local.mask.get_pixel(100, j)[0], if inside { 1.0 } else { 0.0 }, "row {j}");
        let rgb = b.local.rgb.get_pixel(100, j).0;
        assert_eq!(rgb, if inside { [10, 200, 10] } else { [128, 128, 128] });
    }
    let empty = PlanePatch { pixels: Vec::new(), ..patch };
    assert!(matches!(build_patch_inputs(&frame, &empty), Err(Error::EmptyBoundingBox)));
}

#[test]
fn bundle_export_writes_eight_channels() {
    let frame = plane_frame(Vector3::z(), 2.0, 160, 120);
    let patch = rect_patch(&frame, 50, 40, 30, 30);
    let b = build_patch_inputs(&frame, &patch).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_patch_bundle(dir.path(), &patch, &b, 5000.0).unwrap();
    let pngs = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    assert_eq!(pngs, 8);
    let depth = image::open(dir.path().join("local_depth.png")).unwrap().into_luma16();
    assert_eq!(depth.get_pixel(112, 112)[0], 10_000);
    let meta = std::fs::read_to_string(dir.path().join("meta.txt")).unwrap();
    assert!(meta.contains("bbox 50 40 79 69"));
}
