use super::*;
use crate::eval::ate_rmse;
use crate::synth::{generate_scene, planted_proposals, SceneSpec, TrajectoryShape};
use nalgebra::Vector3;
use proptest::prelude::*;

fn params() -> PipelineParams {
    PipelineParams::default()
}

fn ranges(f: &[Fragment]) -> Vec<(usize, usize)> {
    f.iter().map(|f| (f.start, f.end)).collect()
}

#[test]
fn partition_examples() {
    assert_eq!(ranges(&partition(37, &params()).unwrap()), vec![(0, 20), (16, 36)]);
    assert_eq!(ranges(&partition(21, &params()).unwrap()), vec![(0, 20)]);
    assert_eq!(ranges(&partition(10, &params()).unwrap()), vec![(0, 9)]);
    assert_eq!(ranges(&partition(38, &params()).unwrap()), vec![(0, 20), (16, 36), (32, 37)]);
    let bad = PipelineParams { overlap: 21, ..params() };
    assert!(partition(30, &bad).is_err());
    assert!(partition(0, &params()).is_err());
}

proptest! {
    #[test]
    fn partition_covers_with_fixed_overlap(n in 1usize..200, size in 2usize..30, overlap_frac in 0.0f64..1.0) {
        let overlap = 1 + ((size - 2) as f64 * overlap_frac) as usize;
        let p = PipelineParams { fragment_size: size, overlap, ..params() };
        let f = partition(n, &p).unwrap();
        prop_assert_eq!(f[0].start, 0);
        prop_assert_eq!(f.last().unwrap().end, n - 1);
        for w in f.windows(2) {
            prop_assert_eq!(w[0].len(), size);
            prop_assert_eq!(w[1].start, w[0].start + size - overlap);
            prop_assert!(w[1].start <= w[0].end);
            if w[1].end == w[0].start + 2 * size - overlap - 1 {
                prop_assert_eq!(w[0].end + 1 - w[1].start, overlap);
            }
        }
        for k in 0..n {
            prop_assert!(owner(&f, k).is_some());
        }
    }
}

fn scene(frames: usize, step: f64) -> crate::synth::SyntheticScene {
    let spec = SceneSpec {
        trajectory: TrajectoryShape::Line {
            frames,
            start: Vector3::new(0.0, 0.0, 1.3),
            step,
            yaw_amplitude_deg: 8.0,
            pitch_deg: 10.0,
            sway: 0.05,
        },
        ..SceneSpec::default()
    };
    generate_scene(&spec).unwrap()
}

fn relative(poses: &[RigidTransform]) -> Vec<RigidTransform> {
    let a = poses[0].inverse();
    poses.iter().map(|t| a * *t).collect()
}

#[test]
fn intra_without_constraints_is_identity() {
    let s = scene(5, 0.1);
    let frag = &partition(5, &params()).unwrap()[0];
    let r = register_intra(frag, &s.patches_by_frame(), &[], &[], None, &params()).unwrap();
    assert!(r.local_poses.iter().all(|t| *t == RigidTransform::identity()));
}

#[test]
fn intra_rejects_pairs_outside_fragment() {
    let s = scene(30, 0.1);
    let frags = partition(30, &params()).unwrap();
    let (pairs, _) = planted_proposals(&s, 50, 0.0, 2.5, 1).unwrap();
    let outside: Vec<_> = pairs.into_iter().filter(|p| p.q.frame > 20).collect();
    assert!(register_intra(&frags[0], &s.patches_by_frame(), &outside, &[], None, &params()).is_err());
}

#[test]
fn intra_with_exact_pairs_recovers_local_poses() {
    let s = scene(10, 0.1);
    let frag = &partition(10, &params()).unwrap()[0];
    let (pairs, _) = planted_proposals(&s, 150, 0.0, 2.5, 2).unwrap();
    let r = register_intra(frag, &s.patches_by_frame(), &pairs, &[], None, &params()).unwrap();
    let ate = ate_rmse(&r.local_poses, &relative(&s.trajectory), false).unwrap();
    assert!(ate < 1e-4, "local ATE {ate}");
    assert_eq!(r.surviving_pairs().count(), pairs.len());
}

#[test]
fn intra_survivors_exclude_planted_outliers() {
    let s = scene(10, 0.1);
    let frag = &partition(10, &params()).unwrap()[0];
    let (pairs, labels) = planted_proposals(&s, 200, 0.5, 2.5, 3).unwrap();
    let r = register_intra(frag, &s.patches_by_frame(), &pairs, &[], None, &params()).unwrap();
    let outliers = labels.iter().filter(|l| !**l).count();
    let kept = r
        .pairs
        .iter()
        .zip(&labels)
        .filter(|(p, l)| !**l && p.selection > 0.5)
        .count();
    assert!(kept as f64 <= 0.05 * outliers as f64, "{kept} of {outliers} outliers survived");
}

/// Three "fragments" made of single scene frames, with poses as the
/// planted fragment transforms.
#[test]
fn inter_recovers_planted_fragment_poses() {
    let s = scene(10, 0.1);
    let nodes = [0usize, 4, 9];
    let patches: Vec<Vec<PlanePatch>> = nodes.iter().map(|&k| s.frames[k].patches.clone()).collect();
    let mut pairs = Vec::new();
    for a in 0..3 {
        for b in a + 1..3 {
            for (i, _) in patches[a].iter().enumerate() {
                for (j, _) in patches[b].iter().enumerate() {
                    if s.is_coplanar(PatchKey::new(nodes[a], i), PatchKey::new(nodes[b], j)) {
                        pairs.push(CoplanarPair::new(PatchKey::new(a, i), PatchKey::new(b, j), 0.0, 1.0));
                    }
                }
            }
        }
    }
    let init = vec![RigidTransform::identity(); 3];
    let r = register_inter(&init, patches, pairs, Vec::new(), &params()).unwrap();
    let truth = relative(&nodes.iter().map(|&k| s.trajectory[k]).collect::<Vec<_>>());
    for (est, gt) in r.poses.iter().zip(&truth) {
        let (dr, dt) = est.distance_to(gt);
        assert!(dt < 1e-4 && dr.to_degrees() < 0.01, "{dt} m {} deg", dr.to_degrees());
    }
}

#[test]
fn inter_without_pairs_is_identity() {
    let s = scene(4, 0.1);
    let patches: Vec<Vec<PlanePatch>> = s.frames.iter().map(|f| f.patches.clone()).collect();
    let init = vec![RigidTransform::identity(); 4];
    let r = register_inter(&init, patches, Vec::new(), Vec::new(), &params()).unwrap();
    assert!(r.poses.iter().all(|t| *t == RigidTransform::identity()));
}

fn pose(x: f64, yaw: f64) -> RigidTransform {
    RigidTransform::from_axis_angle(Vector3::new(0.0, 0.0, yaw), Vector3::new(x, 0.0, 0.0))
}

#[test]
fn compose_uses_earlier_fragment_on_overlap() {
    let mut f = partition(37, &params()).unwrap();
    for fr in &mut f {
        fr.local_poses = (0..fr.len()).map(|k| pose(k as f64 * 0.1, 0.0)).collect();
    }
    let single = compose_trajectory(&f[..1]).unwrap();
    assert_eq!(single, f[0].local_poses);
    let g = pose(1.0, 0.3);
    f[1].pose = g;
    let t = compose_trajectory(&f).unwrap();
    assert_eq!(t.len(), 37);
    assert_eq!(t[18], f[0].local_poses[18]);
    assert_eq!(t[30], g * f[1].local_poses[14]);
    let (dt, _) = overlap_discrepancy(&f);
    assert!(dt > 0.1);
    let (_, dr) = overlap_discrepancy(&f);
    assert!(dr > 0.2);
    assert!(dt > 0.1);
    let gap = vec![f[1].clone()];
    assert!(matches!(compose_trajectory(&gap), Err(Error::UncoveredFrame(0))));
}

#[test]
fn chained_poses_agree_on_first_overlap_frame() {
    let mut f = partition(37, &params()).unwrap();
    f[0].local_poses = (0..21).map(|k| pose(k as f64 * 0.1, 0.01 * k as f64)).collect();
    f[1].local_poses = (0..21).map(|k| pose(k as f64 * 0.05, -0.02 * k as f64)).collect();
    let chain = chain_fragment_poses(&f);
    f[1].pose = chain[1];
    let (a, b) = (f[0].global_pose(16), f[1].global_pose(16));
    let (dt, dr) = a.distance_to(&b);
    assert!(dt < 1e-12 && dr < 1e-12);
}

#[test]
fn representatives_merge_coplanar_views() {
    let s = scene(10, 0.1);
    let mut frag = partition(10, &params()).unwrap().remove(0);
    frag.local_poses = relative(&s.trajectory);
    let patches = s.patches_by_frame();
    let reps = representative_patches(&frag, 0..10, &patches, &params());
    let total: usize = patches.iter().map(Vec::len).sum();
    assert!(reps.patches.len() < total);
    assert_eq!(reps.sources.iter().map(Vec::len).sum::<usize>(), total);
    for (rep, srcs) in reps.patches.iter().zip(&reps.sources) {
        let group = s.group_of(srcs[0]);
        assert!(srcs.iter().all(|k| s.group_of(*k) == group));
        assert!(rep.samples.len() <= params().solver.samples_per_patch);
    }
}

#[test]
fn tum_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.txt");
    let poses: Vec<_> = (0..4).map(|k| pose(k as f64, 0.2 * k as f64)).collect();
    let ts: Vec<f64> = (0..4).map(|k| 1.5 + k as f64 * 0.033).collect();
    write_tum_trajectory(&path, &ts, &poses).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap().split_whitespace().count(), 8);
    let (ts2, poses2) = read_tum_trajectory(&path).unwrap();
    assert_eq!(ts2.len(), 4);
    for (a, b) in poses.iter().zip(&poses2) {
        let (dt, dr) = a.distance_to(b);
        assert!(dt < 1e-8 && dr < 1e-8);
    }
    std::fs::write(&path, "0 1 2 3\n").unwrap();
    assert!(matches!(read_tum_trajectory(&path), Err(Error::Parse { line: 1, .. })));
}

#[test]
fn pipeline_on_two_fragments_tracks_ground_truth() {
    let s = scene(37, 0.03);
    let (pairs, _) = planted_proposals(&s, 1500, 0.0, 2.5, 5).unwrap();
    let patches = s.patches_by_frame();
    let input = PipelineInput {
        patches_by_frame: &patches,
        pairs: &pairs,
        keypoints: &[],
        initial_poses: None,
        long_range: None,
    };
    let out = run_pipeline(&input, &params()).unwrap();
    assert_eq!(out.fragments.len(), 2);
    assert_eq!(out.pair_selections.len(), pairs.len());
    for (f, r) in out.fragments.iter().zip(&out.intra) {
        let gt = relative(&s.trajectory[f.start..=f.end]);
        assert!(ate_rmse(&r.local_poses, &gt, false).unwrap() < 1e-4);
    }
    let ate = ate_rmse(&out.trajectory, &s.trajectory, true).unwrap();
    assert!(ate < 1e-3, "ATE {ate}");
    assert!(out.overlap_discrepancy.0 < 1e-3);
}
