use std::path::Path;
use std::process::{Command, Output};

use planereg::geometry::Intrinsics;
use planereg::io::{read_associations, read_depth_png, DEFAULT_DEPTH_SCALE};
use planereg::pipeline::read_tum_trajectory;

fn planereg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_planereg"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = planereg(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn with_config<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend(["--config", "dataset.cfg"]);
    v
}

/// Synthetic dataset with extracted patches and proposed pairs.
fn prepared() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--out", ".", "--seed", "7"]);
    ok(dir.path(), &with_config(&["extract"]));
    ok(dir.path(), &with_config(&["propose"]));
    dir
}

fn ate(stdout: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix("ATE "))
        .expect("no ATE line")
        .trim()
        .parse()
        .unwrap()
}

#[test]
fn synthetic_chain_registers_accurately() {
    let dir = prepared();
    let p = dir.path();
    let summary = ok(p, &with_config(&["register"]));
    assert!(summary.starts_with("registered 10 frames"), "{summary}");
    for f in ["trajectory.txt", "trace.csv", "selected_pairs.csv"] {
        assert!(p.join(f).is_file(), "{f} missing");
    }
    let e = ate(&ok(p, &with_config(&["evaluate", "--trajectory", "trajectory.txt"])));
    assert!(e < 0.01, "ATE {e}");
}

#[test]
fn ground_truth_against_itself_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--out", "."]);
    let out = ok(dir.path(), &with_config(&["evaluate", "--trajectory", "groundtruth.txt"]));
    assert!(out.contains("ATE 0.000000"), "{out}");
}

#[test]
fn cop_evaluation_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["synth", "--out", "."]);
    let out = ok(
        p,
        &with_config(&["evaluate", "--cop-set", "cop.csv", "--embeddings", "cop_embeddings.txt"]),
    );
    for bin in ["S1", "S2", "S3", "D1", "D2", "D3"] {
        assert!(p.join(format!("pr_{bin}.csv")).is_file());
        assert!(out.contains(&format!("AUC {bin} ")), "{out}");
    }
    let auc = std::fs::read_to_string(p.join("auc.csv")).unwrap();
    assert_eq!(auc.lines().next(), Some("subset,pairs,auc"));
    assert_eq!(auc.lines().count(), 7);
}

#[test]
fn missing_depth_directory_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = planereg(
        dir.path(),
        &["extract", "--set", "dataset.depth_dir=/nonexistent/depth"],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/nonexistent/depth"), "{err}");
}

#[test]
fn unknown_config_key_exits_with_config_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = planereg(dir.path(), &["synth", "--set", "solver.no_such_key=1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
    let out = planereg(dir.path(), &["register", "--config", "absent.cfg"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn mode_flags_are_exclusive() {
    let dir = tempfile::tempdir().unwrap();
    let out = planereg(dir.path(), &["register", "--coplanarity-only", "--keypoints-only"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn coplanarity_only_mode_registers() {
    let dir = prepared();
    let p = dir.path();
    ok(p, &with_config(&["register", "--coplanarity-only", "--out", "cop_only"]));
    let trace = std::fs::read_to_string(p.join("cop_only/trace.csv")).unwrap();
    assert!(trace.lines().count() > 1);
    let e = ate(&ok(
        p,
        &with_config(&["evaluate", "--trajectory", "cop_only/trajectory.txt"]),
    ));
    assert!(e < 0.01, "ATE {e}");
}

/// Pixel matches between consecutive frames, generated from rendered depth
/// and ground-truth poses.
fn write_keypoints(dir: &Path, intrinsics: &Intrinsics) {
    let assoc = read_associations(&dir.join("associations.txt")).unwrap();
    let (_, gt) = read_tum_trajectory(&dir.join("groundtruth.txt")).unwrap();
    let depths: Vec<_> = assoc
        .iter()
        .map(|a| read_depth_png(&dir.join(&a.depth), DEFAULT_DEPTH_SCALE).unwrap())
        .collect();
    let mut rows = String::new();
    for i in 0..depths.len() - 1 {
        let rel = gt[i + 1].inverse().compose(&gt[i]);
        for (x, y) in [(30, 25), (130, 25), (80, 60), (30, 95), (130, 95), (55, 40), (105, 80)] {
            let z = *depths[i].get(x, y);
            if z <= 0.0 {
                continue;
            }
            let v = rel.transform_point(&intrinsics.back_project(x as f64, y as f64, z));
            if let Some((u, w)) = intrinsics.project(&v) {
                rows.push_str(&format!("{i} {x} {y} {} {u:.3} {w:.3}\n", i + 1));
            }
        }
    }
    std::fs::write(dir.join("keypoints.txt"), rows).unwrap();
}

#[test]
fn keypoints_only_mode_uses_keypoints() {
    let dir = prepared();
    let p = dir.path();
    let summary = ok(p, &with_config(&["register", "--keypoints-only", "--out", "no_kp"]));
    assert!(summary.contains(" 0 of "), "{summary}");

    write_keypoints(p, &Intrinsics { fx: 100.0, fy: 100.0, cx: 79.5, cy: 59.5 });
    ok(
        p,
        &with_config(&[
            "register",
            "--keypoints-only",
            "--out",
            "kp",
            "--set",
            "dataset.keypoints=keypoints.txt",
        ]),
    );
    let e = ate(&ok(p, &with_config(&["evaluate", "--trajectory", "kp/trajectory.txt"])));
    assert!(e < 0.02, "ATE {e}");
}
