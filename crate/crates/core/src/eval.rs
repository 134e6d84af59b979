//! Trajectory and coplanarity metrics: ATE RMSE, precision-recall curves,
//! size/distance-binned benchmark sets and outlier robustness sweeps.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{PatchKey, RigidTransform};
use crate::pipeline::{run_pipeline, PipelineInput, PipelineParams};
use crate::synth::{planted_proposals, SyntheticScene};

/// Least-squares rigid alignment (no scale) of `src` onto `dst`. Works for
/// degenerate (collinear or coincident) point sets, where any minimizer is
/// returned.
pub fn align_points(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> RigidTransform {
    let n = src.len().max(1) as f64;
    let cs = src.iter().sum::<Vector3<f64>>() / n;
    let cd = dst.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (a, b) in src.iter().zip(dst) {
        h += (b - cd) * (a - cs).transpose();
    }
    let svd = h.svd(true, true);
    let rotation = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => {
            let d = (u * v_t).determinant().signum();
            let r = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t;
            nalgebra::Rotation3::from_matrix_unchecked(r)
        }
        _ => nalgebra::Rotation3::identity(),
    };
    RigidTransform::new(rotation, cd - rotation * cs)
}

/// RMSE of camera positions, optionally after rigid alignment of the
/// estimate onto the ground truth.
pub fn ate_rmse(estimated: &[RigidTransform], ground_truth: &[RigidTransform], align: bool) -> Result<f64> {
    if estimated.len() != ground_truth.len() {
        return Err(Error::LengthMismatch(estimated.len(), ground_truth.len()));
    }
    if estimated.is_empty() {
        return Ok(0.0);
    }
    let est: Vec<Vector3<f64>> = estimated.iter().map(|t| t.translation).collect();
    let gt: Vec<Vector3<f64>> = ground_truth.iter().map(|t| t.translation).collect();
    let g = if align { align_points(&est, &gt) } else { RigidTransform::identity() };
    let sum: f64 = est
        .iter()
        .zip(&gt)
        .map(|(e, t)| (g.transform_point(e) - t).norm_squared())
        .sum();
    Ok((sum / est.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    /// `(precision, recall)` per distinct threshold, loosening.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Precision-recall sweep for distance-like scores (smaller means "more
/// likely coplanar"). The area starts at recall 0 with the precision of the
/// tightest threshold.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<PrCurve> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(Error::DegenerateLabels(format!(
            "{n_pos} positives among {} pairs",
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidParameter("scores must not be NaN".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let t = scores[order[k]];
        while k < order.len() && scores[order[k]] == t {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push((tp as f64 / (tp + fp) as f64, tp as f64 / n_pos as f64));
    }
    let mut auc = 0.0;
    let (mut prev_p, mut prev_r) = (points[0].0, 0.0);
    for &(p, r) in &points {
        auc += (r - prev_r) * (p + prev_p) / 2.0;
        prev_p = p;
        prev_r = r;
    }
    Ok(PrCurve { points, auc })
}

pub fn write_pr_csv(path: &Path, curve: &PrCurve) -> Result<()> {
    let mut out = String::from("precision,recall\n");
    for (p, r) in &curve.points {
        let _ = writeln!(out, "{p:?},{r:?}");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SizeBin {
    S1,
    S2,
    S3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DistanceBin {
    D1,
    D2,
    D3,
}

/// Size bin of a pair from the smaller of its two patch areas (m²).
pub fn size_bin(area: f64) -> Option<SizeBin> {
    match area {
        a if (0.25..=10.0).contains(&a) => Some(SizeBin::S1),
        a if (0.05..0.25).contains(&a) => Some(SizeBin::S2),
        a if (0.0..0.05).contains(&a) => Some(SizeBin::S3),
        _ => None,
    }
}

/// Distance bin from the centroid distance (m).
pub fn distance_bin(distance: f64) -> Option<DistanceBin> {
    match distance {
        d if (0.0..0.3).contains(&d) => Some(DistanceBin::D1),
        d if (0.3..1.0).contains(&d) => Some(DistanceBin::D2),
        d if (1.0..=5.0).contains(&d) => Some(DistanceBin::D3),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CopSubset {
    Size(SizeBin),
    Distance(DistanceBin),
}

impl CopSubset {
    pub const ALL: [CopSubset; 6] = [
        CopSubset::Size(SizeBin::S1),
        CopSubset::Size(SizeBin::S2),
        CopSubset::Size(SizeBin::S3),
        CopSubset::Distance(DistanceBin::D1),
        CopSubset::Distance(DistanceBin::D2),
        CopSubset::Distance(DistanceBin::D3),
    ];

    pub fn name(&self) -> String {
        match self {
            CopSubset::Size(s) => format!("{s:?}"),
            CopSubset::Distance(d) => format!("{d:?}"),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CopPair {
    pub subset: CopSubset,
    /// Index of the source scene.
    pub scene: usize,
    pub a: PatchKey,
    pub b: PatchKey,
    pub label: bool,
    pub min_area: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CopBenchmarkSet {
    pub pairs: Vec<CopPair>,
}

impl CopBenchmarkSet {
    pub fn subset(&self, s: CopSubset) -> impl Iterator<Item = &CopPair> {
        self.pairs.iter().filter(move |p| p.subset == s)
    }
}

/// Builds a balanced benchmark with `per_subset` pairs (half coplanar) in
/// each of the six size/distance subsets.
pub fn build_cop_set(scenes: &[SyntheticScene], per_subset: usize, seed: u64) -> Result<CopBenchmarkSet> {
    if per_subset % 2 != 0 {
        return Err(Error::InvalidParameter("pairs per subset must be even".into()));
    }
    let mut pools: Vec<[Vec<CopPair>; 2]> = (0..CopSubset::ALL.len()).map(|_| [Vec::new(), Vec::new()]).collect();
    for (si, scene) in scenes.iter().enumerate() {
        let (pos, neg) = scene.cross_frame_pairs();
        for (a, b, label) in pos.iter().map(|(a, b)| (a, b, true)).chain(neg.iter().map(|(a, b)| (a, b, false))) {
            let (pa, pb) = (scene.patch(*a), scene.patch(*b));
            let ca = scene.trajectory[a.frame].transform_point(&pa.centroid);
            let cb = scene.trajectory[b.frame].transform_point(&pb.centroid);
            let min_area = pa.area.min(pb.area);
            let distance = (ca - cb).norm();
            let bins = [size_bin(min_area).map(CopSubset::Size), distance_bin(distance).map(CopSubset::Distance)];
            for subset in bins.into_iter().flatten() {
                let slot = CopSubset::ALL.iter().position(|s| *s == subset).unwrap_or(0);
                pools[slot][usize::from(!label)].push(CopPair {
                    subset,
                    scene: si,
                    a: *a,
                    b: *b,
                    label,
                    min_area,
                    distance,
                });
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = per_subset / 2;
    let mut pairs = Vec::with_capacity(per_subset * CopSubset::ALL.len());
    for (subset, [pos, neg]) in CopSubset::ALL.iter().zip(pools.iter_mut()) {
        for (pool, kind) in [(pos, "coplanar pairs"), (neg, "non-coplanar pairs")] {
            if pool.len() < half {
                return Err(Error::BinUnderfilled {
                    bin: subset.name(),
                    kind,
                    needed: half,
                    found: pool.len(),
                });
            }
            pool.shuffle(&mut rng);
            let mut chosen: Vec<CopPair> = pool.drain(..half).collect();
            chosen.sort_by(|x, y| (x.scene, x.a, x.b).cmp(&(y.scene, y.a, y.b)));
            pairs.extend(chosen);
        }
    }
    Ok(CopBenchmarkSet { pairs })
}

pub fn write_cop_csv(path: &Path, set: &CopBenchmarkSet) -> Result<()> {
    let mut out = String::from("subset,scene,frame_a,patch_a,frame_b,patch_b,label,min_area,distance\n");
    for p in &set.pairs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{:?},{:?}",
            p.subset.name(),
            p.scene,
            p.a.frame,
            p.a.patch,
            p.b.frame,
            p.b.patch,
            u8::from(p.label),
            p.min_area,
            p.distance
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_cop_csv(path: &Path) -> Result<CopBenchmarkSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 9 {
            return Err(Error::parse(path, lineno, format!("expected 9 fields, found {}", f.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|e| Error::parse(path, lineno, format!("`{s}`: {e}")));
        let real = |s: &str| s.parse::<f64>().map_err(|e| Error::parse(path, lineno, format!("`{s}`: {e}")));
        let subset = CopSubset::parse(f[0]).ok_or_else(|| Error::parse(path, lineno, format!("unknown subset `{}`", f[0])))?;
        pairs.push(CopPair {
            subset,
            scene: int(f[1])?,
            a: PatchKey::new(int(f[2])?, int(f[3])?),
            b: PatchKey::new(int(f[4])?, int(f[5])?),
            label: int(f[6])? != 0,
            min_area: real(f[7])?,
            distance: real(f[8])?,
        });
    }
    Ok(CopBenchmarkSet { pairs })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepParams {
    pub n_pairs: usize,
    pub d_f_threshold: f64,
    pub seed: u64,
    pub pipeline: PipelineParams,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            n_pairs: 200,
            d_f_threshold: 2.5,
            seed: 0,
            pipeline: PipelineParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub ratio: f64,
    pub ate: f64,
    /// Fraction of planted outliers that end with `s < 0.5`.
    pub outliers_rejected: f64,
}

/// ATE of the pipeline on `scene` for each planted incorrect-pair ratio.
/// Solves start from identity poses.
pub fn robustness_sweep(scene: &SyntheticScene, ratios: &[f64], params: &SweepParams) -> Result<Vec<SweepRow>> {
    let patches = scene.patches_by_frame();
    ratios
        .iter()
        .map(|&ratio| {
            let (pairs, labels) = planted_proposals(scene, params.n_pairs, ratio, params.d_f_threshold, params.seed)?;
            let input = PipelineInput {
                patches_by_frame: &patches,
                pairs: &pairs,
                keypoints: &[],
                initial_poses: None,
                long_range: None,
            };
            let out = run_pipeline(&input, &params.pipeline)?;
            let ate = ate_rmse(&out.trajectory, &scene.trajectory, true)?;
            let selections = &out.pair_selections;
            let outliers: Vec<f64> = labels
                .iter()
                .zip(selections)
                .filter(|(l, _)| !**l)
                .map(|(_, s)| *s)
                .collect();
            let outliers_rejected = if outliers.is_empty() {
                1.0
            } else {
                outliers.iter().filter(|s| **s < 0.5).count() as f64 / outliers.len() as f64
            };
            Ok(SweepRow {
                ratio,
                ate,
                outliers_rejected,
            })
        })
        .collect()
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut out = String::from("ratio,ate_rmse,outliers_rejected\n");
    for r in rows {
        let _ = writeln!(out, "{:?},{:?},{:?}", r.ratio, r.ate, r.outliers_rejected);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn traj() -> Vec<RigidTransform> {
        (0..8)
            .map(|k| {
                let s = k as f64;
                RigidTransform::from_axis_angle(Vector3::new(0.0, 0.1 * s, 0.0), Vector3::new(s * 0.3, (s * 0.7).sin(), 0.1 * s * s))
            })
            .collect()
    }

    #[test]
    fn ate_examples() {
        let gt = traj();
        assert_eq!(ate_rmse(&gt, &gt, false).unwrap(), 0.0);
        let shifted: Vec<_> = gt
            .iter()
            .map(|t| RigidTransform::new(t.rotation, t.translation + Vector3::new(3.0, 4.0, 0.0)))
            .collect();
        assert!((ate_rmse(&shifted, &gt, false).unwrap() - 5.0).abs() < 1e-12);
        assert!(ate_rmse(&shifted, &gt, true).unwrap() < 1e-9);
        let g = RigidTransform::from_axis_angle(Vector3::new(0.4, -1.0, 2.0), Vector3::new(-3.0, 1.0, 7.0));
        let moved: Vec<_> = gt.iter().map(|t| g * *t).collect();
        assert!(ate_rmse(&moved, &gt, true).unwrap() < 1e-9);
        assert!(matches!(ate_rmse(&gt[..3], &gt, true), Err(Error::LengthMismatch(3, 8))));
        // collinear trajectories still align
        let line: Vec<_> = (0..5).map(|k| RigidTransform::from_translation(Vector3::new(k as f64, 0.0, 0.0))).collect();
        let moved: Vec<_> = line.iter().map(|t| g * *t).collect();
        assert!(ate_rmse(&moved, &line, true).unwrap() < 1e-9);
    }

    #[test]
    fn pr_hand_case() {
        let c = pr_curve(&[1.0, 2.0, 3.0, 4.0], &[true, true, false, false]).unwrap();
        assert_eq!(c.points, vec![(1.0, 0.5), (1.0, 1.0), (2.0 / 3.0, 1.0), (0.5, 1.0)]);
        assert_eq!(c.auc, 1.0);
        let c = pr_curve(&[1.0, 2.0, 3.0, 4.0], &[false, true, false, true]).unwrap();
        assert_eq!(c.points, vec![(0.0, 0.0), (0.5, 0.5), (1.0 / 3.0, 0.5), (0.5, 1.0)]);
        assert!((c.auc - (0.5 * 0.25 + 0.5 * (1.0 / 3.0 + 0.5) / 2.0)).abs() < 1e-12);
        assert!(matches!(pr_curve(&[1.0, 2.0], &[true, true]), Err(Error::DegenerateLabels(_))));
    }

    #[test]
    fn pr_random_scores_are_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let labels: Vec<bool> = (0..10_000).map(|k| k % 2 == 0).collect();
        let scores: Vec<f64> = labels.iter().map(|_| rng.gen()).collect();
        let c = pr_curve(&scores, &labels).unwrap();
        assert!((c.auc - 0.5).abs() < 0.05);
        for (p, r) in &c.points {
            assert!((0.0..=1.0).contains(p) && (0.0..=1.0).contains(r));
            if *r > 0.05 {
                assert!((p - 0.5).abs() < 0.05, "{p} at {r}");
            }
        }
        for w in c.points.windows(2) {
            assert!(w[1].1 >= w[0].1);
        }
    }

    #[test]
    fn bins_follow_ranges() {
        assert_eq!(size_bin(0.1), Some(SizeBin::S2));
        assert_eq!(size_bin(0.25), Some(SizeBin::S1));
        assert_eq!(size_bin(0.01), Some(SizeBin::S3));
        assert_eq!(size_bin(11.0), None);
        assert_eq!(distance_bin(2.0), Some(DistanceBin::D3));
        assert_eq!(distance_bin(0.3), Some(DistanceBin::D2));
        assert_eq!(distance_bin(0.1), Some(DistanceBin::D1));
        assert_eq!(distance_bin(6.0), None);
    }
}
