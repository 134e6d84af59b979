//! Patch descriptors, the pair confidence weight, the triplet focal loss and
//! self-supervised triplet sampling.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{coplanarity_distance, Frame, Grid, PatchKey, Plane, PlanePatch, RigidTransform};
use crate::synth::SyntheticScene;

/// Default coplanarity label threshold (m).
pub const DEFAULT_LABEL_TAU: f64 = 0.01;
/// Default width of the confidence kernel relative to `d_fm`.
pub const DEFAULT_SIGMA: f64 = 0.6;

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorVector {
    pub values: DVector<f64>,
}

impl DescriptorVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("descriptor entries must be finite".into()));
        }
        Ok(Self {
            values: DVector::from_vec(values),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Source of patch descriptors. Implementations are read-only after
/// construction and may be queried from several threads.
pub trait DescriptorProvider: Sync {
    fn dimension(&self) -> usize;
    fn describe(&self, patch: &PlanePatch) -> Result<DescriptorVector>;
}

/// Euclidean distance `d_f` between two descriptors.
pub fn feature_distance(a: &DescriptorVector, b: &DescriptorVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok((&a.values - &b.values).norm())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalLossParams {
    pub alpha: f64,
    pub lambda: f64,
}

impl Default for FocalLossParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            lambda: 3.0,
        }
    }
}

impl FocalLossParams {
    pub fn new(alpha: f64, lambda: f64) -> Result<Self> {
        if !(alpha > 0.0) || !(lambda >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "focal loss needs alpha > 0 and lambda >= 1, got alpha={alpha}, lambda={lambda}"
            )));
        }
        Ok(Self { alpha, lambda })
    }
}

/// `max(0, (α − (d_neg − d_pos)) / α)^λ`.
pub fn triplet_focal_loss(d_pos: f64, d_neg: f64, params: &FocalLossParams) -> f64 {
    let gap = d_neg - d_pos;
    ((params.alpha - gap) / params.alpha).max(0.0).powf(params.lambda)
}

/// Confidence weight `exp(−d_f² / (σ² d_fm²))`.
pub fn pair_confidence(d_f: f64, d_fm: f64, sigma: f64) -> Result<f64> {
    if !(d_fm > 0.0) {
        return Err(Error::InvalidParameter(format!("d_fm must be positive, got {d_fm}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    if !(d_f >= 0.0) {
        return Err(Error::InvalidParameter(format!("d_f must be nonnegative, got {d_f}")));
    }
    Ok((-(d_f * d_f) / (sigma * sigma * d_fm * d_fm)).exp())
}

/// Ground-truth coplanarity label: δ under the ground-truth poses is below `tau`.
pub fn label_coplanar(
    p: &PlanePatch,
    q: &PlanePatch,
    gt_ti: &RigidTransform,
    gt_tj: &RigidTransform,
    tau: f64,
) -> Result<bool> {
    Ok(coplanarity_distance(gt_ti, gt_tj, p, q)? < tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: PatchKey,
    pub positive: PatchKey,
    pub negative: PatchKey,
}

/// Draws `count` triplets from a posed sequence.
///
/// Anchors are visited round-robin in a seeded random order, so every
/// eligible anchor contributes the same number of triplets (±1), each with one
/// positive and one negative.
pub fn sample_triplets(
    patches_by_frame: &[Vec<PlanePatch>],
    gt_poses: &[RigidTransform],
    count: usize,
    tau: f64,
    rng_seed: u64,
) -> Result<Vec<Triplet>> {
    if gt_poses.len() != patches_by_frame.len() {
        return Err(Error::LengthMismatch(patches_by_frame.len(), gt_poses.len()));
    }
    let keys: Vec<PatchKey> = patches_by_frame
        .iter()
        .enumerate()
        .flat_map(|(f, ps)| (0..ps.len()).map(move |p| PatchKey::new(f, p)))
        .collect();
    let patch = |k: &PatchKey| &patches_by_frame[k.frame][k.patch];
    let mut positives: Vec<Vec<usize>> = vec![Vec::new(); keys.len()];
    let mut negatives: Vec<Vec<usize>> = vec![Vec::new(); keys.len()];
    for a in 0..keys.len() {
        for b in a + 1..keys.len() {
            let (ka, kb) = (&keys[a], &keys[b]);
            let same = label_coplanar(patch(ka), patch(kb), &gt_poses[ka.frame], &gt_poses[kb.frame], tau)?;
            let list = if same { &mut positives } else { &mut negatives };
            list[a].push(b);
            list[b].push(a);
        }
    }
    let mut anchors: Vec<usize> = (0..keys.len())
        .filter(|&a| !positives[a].is_empty() && !negatives[a].is_empty())
        .collect();
    if anchors.is_empty() {
        return Err(Error::InsufficientPositives(format!(
            "no anchor with both a coplanar and a non-coplanar partner among {} patches",
            keys.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    anchors.shuffle(&mut rng);
    Ok((0..count)
        .map(|k| {
            let a = anchors[k % anchors.len()];
            let pos = positives[a][rng.gen_range(0..positives[a].len())];
            let neg = negatives[a][rng.gen_range(0..negatives[a].len())];
            Triplet {
                anchor: keys[a],
                positive: keys[pos],
                negative: keys[neg],
            }
        })
        .collect())
}

pub fn write_triplets_csv(path: &Path, triplets: &[Triplet]) -> Result<()> {
    let mut out = String::from("anchor_frame,anchor_patch,pos_frame,pos_patch,neg_frame,neg_patch\n");
    for t in triplets {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            t.anchor.frame, t.anchor.patch, t.positive.frame, t.positive.patch, t.negative.frame, t.negative.patch
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Quantized RGB histogram over the patch pixels, L1-normalized.
#[derive(Debug, Clone)]
pub struct ColorHistogramProvider {
    bins_per_channel: usize,
    colors: HashMap<usize, Grid<[u8; 3]>>,
}

impl ColorHistogramProvider {
    pub fn new(frames: &[Frame], bins_per_channel: usize) -> Result<Self> {
        if bins_per_channel == 0 || bins_per_channel > 256 {
            return Err(Error::InvalidParameter("histogram bins must lie in 1..=256".into()));
        }
        let colors = frames
            .iter()
            .filter_map(|f| f.color.clone().map(|c| (f.index, c)))
            .collect();
        Ok(Self {
            bins_per_channel,
            colors,
        })
    }
}

impl DescriptorProvider for ColorHistogramProvider {
    fn dimension(&self) -> usize {
        self.bins_per_channel.pow(3)
    }

    fn describe(&self, patch: &PlanePatch) -> Result<DescriptorVector> {
        let color = self.colors.get(&patch.frame_id).ok_or_else(|| {
            Error::DegeneratePatch(format!("frame {} has no colour image", patch.frame_id))
        })?;
        if patch.pixels.is_empty() {
            return Err(Error::DegeneratePatch(format!(
                "patch {} of frame {} has no pixels",
                patch.id, patch.frame_id
            )));
        }
        let b = self.bins_per_channel;
        let mut hist = vec![0.0; self.dimension()];
        for px in &patch.pixels {
            let c = color.get(px[0] as usize, px[1] as usize);
            let q = |v: u8| v as usize * b / 256;
            hist[(q(c[0]) * b + q(c[1])) * b + q(c[2])] += 1.0;
        }
        let n = patch.pixels.len() as f64;
        hist.iter_mut().for_each(|h| *h /= n);
        DescriptorVector::new(hist)
    }
}

/// Ground-truth global plane `(n, n·p)` plus seeded Gaussian noise.
///
/// Noise for a patch depends only on the seed and the patch key, so results
/// do not depend on query order.
#[derive(Debug, Clone)]
pub struct OracleProvider {
    poses: Vec<RigidTransform>,
    canonical: HashMap<PatchKey, Plane>,
    sigma: f64,
    seed: u64,
}

impl OracleProvider {
    /// Global planes from the patch planes and ground-truth frame poses.
    pub fn from_poses(poses: Vec<RigidTransform>, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(Error::InvalidParameter("oracle noise must be nonnegative".into()));
        }
        Ok(Self {
            poses,
            canonical: HashMap::new(),
            sigma,
            seed,
        })
    }

    /// Global planes taken from the scene geometry, so patches on one
    /// infinite plane get bit-identical noise-free descriptors.
    pub fn from_scene(scene: &SyntheticScene, sigma: f64, seed: u64) -> Result<Self> {
        let mut provider = Self::from_poses(scene.trajectory.clone(), sigma, seed)?;
        let reps: HashMap<usize, Plane> = scene
            .plane_groups
            .iter()
            .enumerate()
            .rev()
            .map(|(k, g)| (*g, scene.planes[k].plane()))
            .collect();
        for f in &scene.frames {
            for (p, plane_idx) in f.patch_planes.iter().enumerate() {
                let rep = reps[&scene.plane_groups[*plane_idx]];
                provider.canonical.insert(PatchKey::new(f.index, p), rep);
            }
        }
        Ok(provider)
    }

    fn global_plane(&self, patch: &PlanePatch) -> Result<Plane> {
        let key = PatchKey::new(patch.frame_id, patch.id as usize);
        if let Some(p) = self.canonical.get(&key) {
            return Ok(*p);
        }
        let pose = self.poses.get(patch.frame_id).ok_or_else(|| {
            Error::InvalidParameter(format!("no ground-truth pose for frame {}", patch.frame_id))
        })?;
        Ok(patch.plane.transformed(pose))
    }
}

impl DescriptorProvider for OracleProvider {
    fn dimension(&self) -> usize {
        4
    }

    fn describe(&self, patch: &PlanePatch) -> Result<DescriptorVector> {
        let plane = self.global_plane(patch)?;
        let mut v = vec![plane.normal.x, plane.normal.y, plane.normal.z, plane.offset()];
        if self.sigma > 0.0 {
            let mix = (patch.frame_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (patch.id as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ mix);
            let noise = Normal::new(0.0, self.sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            v.iter_mut().for_each(|x| *x += noise.sample(&mut rng));
        }
        DescriptorVector::new(v)
    }
}

/// Externally computed embeddings keyed by `(frame, patch id)`.
#[derive(Debug, Clone, Default)]
pub struct FileProvider {
    dim: usize,
    table: HashMap<PatchKey, DescriptorVector>,
}

impl FileProvider {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text)
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "missing `D N` header"))?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(path, 1, format!("bad header: {e}")))?;
        let [dim, n] = head[..] else {
            return Err(Error::parse(path, 1, "header must be `D N`"));
        };
        let mut table = HashMap::with_capacity(n);
        for (idx, line) in lines {
            let lineno = idx + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != dim + 2 {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("expected {} fields, found {}", dim + 2, fields.len()),
                ));
            }
            let frame = fields[0]
                .parse()
                .map_err(|e| Error::parse(path, lineno, format!("bad frame id: {e}")))?;
            let patch = fields[1]
                .parse()
                .map_err(|e| Error::parse(path, lineno, format!("bad patch id: {e}")))?;
            let values = fields[2..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(path, lineno, format!("bad value: {e}")))?;
            let v = DescriptorVector::new(values).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
            table.insert(PatchKey::new(frame, patch), v);
        }
        if table.len() != n {
            return Err(Error::parse(
                path,
                1,
                format!("header announces {n} rows, found {}", table.len()),
            ));
        }
        Ok(Self { dim, table })
    }

    pub fn get(&self, key: PatchKey) -> Option<&DescriptorVector> {
        self.table.get(&key)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl DescriptorProvider for FileProvider {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn describe(&self, patch: &PlanePatch) -> Result<DescriptorVector> {
        self.table
            .get(&PatchKey::new(patch.frame_id, patch.id as usize))
            .cloned()
            .ok_or_else(|| {
                Error::DegeneratePatch(format!(
                    "no embedding for patch {} of frame {}",
                    patch.id, patch.frame_id
                ))
            })
    }
}

/// Writes embeddings in the `D N` / `frame patch v1..vD` format.
pub fn write_embeddings(path: &Path, rows: &[(PatchKey, DescriptorVector)]) -> Result<()> {
    let dim = rows.first().map_or(0, |(_, v)| v.dim());
    let mut out = format!("{dim} {}\n", rows.len());
    for (k, v) in rows {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                left: v.dim(),
                right: dim,
            });
        }
        let _ = write!(out, "{} {}", k.frame, k.patch);
        for x in v.values.iter() {
            let _ = write!(out, " {x:?}");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, Layout, SceneSpec, TrajectoryShape};
    use nalgebra::Vector3;
    use proptest::prelude::{prop_assert, proptest};

    fn dv(v: &[f64]) -> DescriptorVector {
        DescriptorVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn feature_distance_examples() {
        assert_eq!(feature_distance(&dv(&[1.0, 2.0]), &dv(&[1.0, 2.0])).unwrap(), 0.0);
        assert_eq!(feature_distance(&dv(&[0.0, 0.0]), &dv(&[3.0, 4.0])).unwrap(), 5.0);
        assert!(matches!(
            feature_distance(&dv(&[0.0]), &dv(&[0.0, 1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let brute = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            assert!((feature_distance(&dv(&a), &dv(&b)).unwrap() - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn focal_loss_examples() {
        let p = FocalLossParams::default();
        assert_eq!(triplet_focal_loss(0.0, 1.0, &p), 0.0);
        assert_eq!(triplet_focal_loss(0.3, 0.3, &p), 1.0);
        assert!((triplet_focal_loss(0.0, 0.5, &p) - 0.125).abs() < 1e-15);
        let p1 = FocalLossParams::new(1.0, 1.0).unwrap();
        assert!((triplet_focal_loss(0.5, 0.0, &p1) - 1.5).abs() < 1e-15);
        assert!(FocalLossParams::new(0.0, 3.0).is_err());
        assert!(FocalLossParams::new(1.0, 0.5).is_err());
    }

    #[test]
    fn focal_loss_grid_properties() {
        let p3 = FocalLossParams::default();
        let p1 = FocalLossParams::new(1.0, 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for k in -200..=300 {
            let gap = k as f64 * 0.01;
            let l3 = triplet_focal_loss(0.0, gap, &p3);
            let l1 = triplet_focal_loss(0.0, gap, &p1);
            assert!(l3 <= prev);
            prev = l3;
            assert_eq!(l1, (1.0 - gap).max(0.0));
            if gap >= 1.0 {
                assert_eq!(l3, 0.0);
            }
            if (0.0..=1.0).contains(&gap) {
                assert!(l3 <= l1);
            }
        }
    }

    #[test]
    fn pair_confidence_examples() {
        assert_eq!(pair_confidence(0.0, 2.0, 0.6).unwrap(), 1.0);
        assert!((pair_confidence(1.2, 2.0, 0.6).unwrap() - (-1.0f64).exp()).abs() < 1e-12);
        assert!((pair_confidence(2.0, 2.0, 0.6).unwrap() - 0.062177).abs() < 1e-6);
        assert!(pair_confidence(0.1, 0.0, 0.6).is_err());
        assert!(pair_confidence(0.1, -1.0, 0.6).is_err());
    }

    proptest! {
        #[test]
        fn pair_confidence_decreasing(a in 0.0f64..=1.0, b in 0.0f64..=1.0, dfm in 0.1f64..5.0) {
            // d_fm is the batch maximum, so d_f never exceeds it
            let (lo, hi) = if a < b { (a * dfm, b * dfm) } else { (b * dfm, a * dfm) };
            let wl = pair_confidence(lo, dfm, 0.6).unwrap();
            let wh = pair_confidence(hi, dfm, 0.6).unwrap();
            prop_assert!(wl > 0.0 && wl <= 1.0 && wh > 0.0 && wh <= 1.0);
            if hi - lo > 1e-9 {
                prop_assert!(wh < wl);
            }
        }
    }

    fn square_patch(frame_id: usize, z: f64) -> PlanePatch {
        let samples: Vec<_> = (0..16)
            .map(|k| Vector3::new((k % 4) as f64 * 0.1, (k / 4) as f64 * 0.1, z))
            .collect();
        let (plane, _) = crate::geometry::fit_plane(&samples).unwrap();
        PlanePatch {
            id: 0,
            frame_id,
            plane,
            centroid: plane.point,
            samples,
            pixel_count: 16,
            area: 0.09,
            bbox_px: Default::default(),
            pixels: Vec::new(),
        }
    }

    #[test]
    fn label_examples() {
        let id = RigidTransform::identity();
        let p = square_patch(0, 1.0);
        let q = square_patch(1, 1.0);
        assert!(label_coplanar(&p, &q, &id, &id, 0.01).unwrap());
        let far = square_patch(1, 1.2);
        // every sample is 0.2 m off in both directions: δ = sqrt(0.04 + 0.04)
        let d = coplanarity_distance(&id, &id, &p, &far).unwrap();
        assert!((d - 0.08f64.sqrt()).abs() < 1e-12);
        assert!(!label_coplanar(&p, &far, &id, &id, 0.02).unwrap());
        let g = RigidTransform::from_axis_angle(Vector3::new(0.4, 0.1, -0.3), Vector3::new(1.0, 2.0, 3.0));
        assert!(label_coplanar(&p, &q, &(id * g), &(id * g), 0.01).unwrap());
    }

    fn two_plane_scene() -> crate::synth::SyntheticScene {
        let planes = Layout::Corner.planes()[..2].to_vec();
        generate_scene(&SceneSpec {
            layout: Layout::Custom(planes),
            trajectory: TrajectoryShape::Line {
                frames: 4,
                start: Vector3::new(0.5, -0.5, 1.2),
                step: 0.1,
                yaw_amplitude_deg: 5.0,
                pitch_deg: 30.0,
                sway: 0.05,
            },
            ..SceneSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn triplets_are_valid_and_deterministic() {
        let scene = two_plane_scene();
        let pbf = scene.patches_by_frame();
        let t1 = sample_triplets(&pbf, &scene.trajectory, 100, DEFAULT_LABEL_TAU, 9).unwrap();
        let t2 = sample_triplets(&pbf, &scene.trajectory, 100, DEFAULT_LABEL_TAU, 9).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(t1.len(), 100);
        let delta = |a: PatchKey, b: PatchKey| {
            coplanarity_distance(
                &scene.trajectory[a.frame],
                &scene.trajectory[b.frame],
                &pbf[a.frame][a.patch],
                &pbf[b.frame][b.patch],
            )
            .unwrap()
        };
        let mut per_anchor: HashMap<PatchKey, usize> = HashMap::new();
        for t in &t1 {
            assert!(delta(t.anchor, t.positive) < DEFAULT_LABEL_TAU);
            assert!(delta(t.anchor, t.negative) >= DEFAULT_LABEL_TAU);
            *per_anchor.entry(t.anchor).or_default() += 1;
        }
        let (lo, hi) = (per_anchor.values().min().unwrap(), per_anchor.values().max().unwrap());
        assert!(hi - lo <= 1);
    }

    #[test]
    fn single_patch_has_no_triplets() {
        let p = vec![vec![square_patch(0, 1.0)]];
        assert!(matches!(
            sample_triplets(&p, &[RigidTransform::identity()], 10, 0.01, 0),
            Err(Error::InsufficientPositives(_))
        ));
    }

    #[test]
    fn oracle_zero_noise_separates_perfectly() {
        let scene = two_plane_scene();
        let oracle = OracleProvider::from_scene(&scene, 0.0, 0).unwrap();
        let (pos, neg) = scene.cross_frame_pairs();
        for (a, b) in &pos {
            let d = feature_distance(
                &oracle.describe(scene.patch(*a)).unwrap(),
                &oracle.describe(scene.patch(*b)).unwrap(),
            )
            .unwrap();
            assert_eq!(d, 0.0);
        }
        for (a, b) in &neg {
            let d = feature_distance(
                &oracle.describe(scene.patch(*a)).unwrap(),
                &oracle.describe(scene.patch(*b)).unwrap(),
            )
            .unwrap();
            assert!(d > 0.1);
        }
        let noisy = OracleProvider::from_scene(&scene, 0.05, 3).unwrap();
        let p = scene.patch(pos[0].0);
        assert_eq!(noisy.describe(p).unwrap(), noisy.describe(p).unwrap());
    }

    #[test]
    fn embedding_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        let rows = vec![
            (PatchKey::new(0, 0), dv(&[0.1, -2.5, 1e-17])),
            (PatchKey::new(3, 7), dv(&[1.0, 2.0, 3.0])),
        ];
        write_embeddings(&path, &rows).unwrap();
        let fp = FileProvider::load(&path).unwrap();
        assert_eq!(fp.dimension(), 3);
        let mut patch = square_patch(3, 1.0);
        patch.id = 7;
        assert_eq!(fp.describe(&patch).unwrap(), rows[1].1);
        let bad = FileProvider::parse(Path::new("x"), "2 1\n0 0 1.0\n");
        assert!(matches!(bad, Err(Error::Parse { line: 2, .. })));
    }
}
