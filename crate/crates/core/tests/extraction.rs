use planereg::extraction::{segment_planar_patches, ExtractionParams};
use planereg::synth::{generate_scene, SceneSpec};

#[test]
fn rendered_corridor_planes_are_recovered() {
    let spec = SceneSpec {
        render_images: true,
        ..SceneSpec::default()
    };
    let scene = generate_scene(&spec).unwrap();
    let params = ExtractionParams::default();
    let mut checked = 0;
    for (frame, sf) in scene.rendered_frames().iter().zip(&scene.frames) {
        let cam_from_world = sf.pose.inverse();
        for patch in segment_planar_patches(frame, &params).unwrap() {
            assert!(patch.pixel_count >= params.min_valid_pixels);
            let best = scene
                .planes
                .iter()
                .map(|sp| {
                    let plane = sp.plane().transformed(&cam_from_world);
                    let angle = patch.plane.normal.dot(&plane.normal).abs().clamp(0.0, 1.0).acos();
                    let offset = patch
                        .samples
                        .iter()
                        .map(|v| plane.signed_distance(v).abs())
                        .fold(0.0, f64::max);
                    (angle, offset)
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!(best.0.to_degrees() < 1.0, "frame {} patch {}: {:.3} deg", sf.index, patch.id, best.0.to_degrees());
            assert!(best.1 < 0.005, "frame {} patch {}: {:.4} m", sf.index, patch.id, best.1);
            checked += 1;
        }
    }
    assert!(checked >= 20, "only {checked} patches");
}
