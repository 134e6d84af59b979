//! Coplanar pair proposals, keypoint matches and the RANSAC vote that prunes
//! them per fragment pair.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::descriptor::{feature_distance, pair_confidence, DescriptorProvider, DescriptorVector, DEFAULT_SIGMA};
use crate::error::{Error, Result};
use crate::geometry::{procrustes_rotation, within_rms_closest_distance, Frame, PatchKey, PlanePatch, RigidTransform};

/// Putative coplanar pair `π = (p, q)`, stored with `p.frame < q.frame`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoplanarPair {
    pub p: PatchKey,
    pub q: PatchKey,
    pub d_f: f64,
    pub weight: f64,
    pub selection: f64,
}

impl CoplanarPair {
    pub fn new(a: PatchKey, b: PatchKey, d_f: f64, weight: f64) -> Self {
        let (p, q) = if a <= b { (a, b) } else { (b, a) };
        Self {
            p,
            q,
            d_f,
            weight,
            selection: 1.0,
        }
    }
}

/// Keypoint match `θ = (u, v)`: `u` in camera space of `frame_i`, `v` of `frame_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointMatch {
    pub frame_i: usize,
    pub frame_j: usize,
    pub u: Vector3<f64>,
    pub v: Vector3<f64>,
    pub selection: f64,
}

impl KeypointMatch {
    pub fn new(frame_i: usize, u: Vector3<f64>, frame_j: usize, v: Vector3<f64>) -> Self {
        Self {
            frame_i,
            frame_j,
            u,
            v,
            selection: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub iterations: usize,
    pub inlier_threshold_m: f64,
    pub consensus_fraction: f64,
    pub rng_seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 1024,
            inlier_threshold_m: 0.01,
            consensus_fraction: 0.25,
            rng_seed: 0,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.consensus_fraction > 0.0 && self.consensus_fraction <= 1.0) {
            return Err(Error::InvalidParameter("consensus fraction must lie in (0, 1]".into()));
        }
        if !(self.inlier_threshold_m > 0.0) {
            return Err(Error::InvalidParameter("inlier threshold must be positive".into()));
        }
        Ok(())
    }
}

/// Proposes every cross-frame pair whose descriptor distance is below
/// `d_f_threshold`. Weights use the batch maximum distance `d_fm`; when all
/// proposed distances are zero every weight is 1.
pub fn propose_pairs(
    patches_by_frame: &[Vec<PlanePatch>],
    provider: &dyn DescriptorProvider,
    d_f_threshold: f64,
) -> Result<Vec<CoplanarPair>> {
    let keys: Vec<PatchKey> = patches_by_frame
        .iter()
        .enumerate()
        .flat_map(|(f, ps)| (0..ps.len()).map(move |p| PatchKey::new(f, p)))
        .collect();
    let descriptors: Vec<DescriptorVector> = keys
        .par_iter()
        .map(|k| provider.describe(&patches_by_frame[k.frame][k.patch]))
        .collect::<Result<_>>()?;
    let candidates: Vec<Vec<(usize, usize, f64)>> = (0..keys.len())
        .into_par_iter()
        .map(|a| {
            let mut out = Vec::new();
            for b in a + 1..keys.len() {
                if keys[a].frame == keys[b].frame {
                    continue;
                }
                let d = feature_distance(&descriptors[a], &descriptors[b])?;
                if d < d_f_threshold {
                    out.push((a, b, d));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let candidates: Vec<_> = candidates.into_iter().flatten().collect();
    let d_fm = candidates.iter().map(|c| c.2).fold(0.0, f64::max);
    candidates
        .into_iter()
        .map(|(a, b, d)| {
            let w = if d_fm > 0.0 { pair_confidence(d, d_fm, DEFAULT_SIGMA)? } else { 1.0 };
            Ok(CoplanarPair::new(keys[a], keys[b], d, w))
        })
        .collect()
}

/// One correspondence between a source and a destination coordinate frame.
/// RANSAC estimates `G` with `dst ≈ G · src`.
#[derive(Debug, Clone, Copy)]
pub enum FeatureMatch<'a> {
    Planes { src: &'a PlanePatch, dst: &'a PlanePatch },
    Points { src: Vector3<f64>, dst: Vector3<f64> },
}

impl FeatureMatch<'_> {
    fn supports(&self, g: &RigidTransform, threshold: f64) -> bool {
        match self {
            FeatureMatch::Planes { src, dst } => within_rms_closest_distance(src, dst, g, threshold),
            FeatureMatch::Points { src, dst } => (g.transform_point(src) - dst).norm() <= threshold,
        }
    }
}

/// Rigid transform from three correspondences, or `None` when they do not
/// pin down all six degrees of freedom.
///
/// Rotation comes from orthogonal Procrustes on the plane normals plus the
/// centered keypoint vectors; translation from least squares on the plane
/// offsets and the keypoint positions.
pub fn estimate_transform_from_triplet(features: &[FeatureMatch<'_>]) -> Option<RigidTransform> {
    let points: Vec<(Vector3<f64>, Vector3<f64>)> = features
        .iter()
        .filter_map(|f| match f {
            FeatureMatch::Points { src, dst } => Some((*src, *dst)),
            _ => None,
        })
        .collect();
    let mut dirs: Vec<(Vector3<f64>, Vector3<f64>, f64)> = Vec::new();
    for f in features {
        if let FeatureMatch::Planes { src, dst } = f {
            dirs.push((src.plane.normal.into_inner(), dst.plane.normal.into_inner(), 1.0));
        }
    }
    if points.len() >= 2 {
        let n = points.len() as f64;
        let cs = points.iter().map(|p| p.0).sum::<Vector3<f64>>() / n;
        let cd = points.iter().map(|p| p.1).sum::<Vector3<f64>>() / n;
        dirs.extend(points.iter().map(|(s, d)| (s - cs, d - cd, 1.0)));
    }
    let rotation = procrustes_rotation(&dirs)?;
    // normal equations for t
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for f in features {
        match f {
            FeatureMatch::Planes { src, dst } => {
                let n = dst.plane.normal.into_inner();
                let rhs = n.dot(&(dst.plane.point - rotation * src.plane.point));
                ata += n * n.transpose();
                atb += n * rhs;
            }
            FeatureMatch::Points { src, dst } => {
                ata += Matrix3::identity();
                atb += dst - rotation * src;
            }
        }
    }
    let eig = SymmetricEigen::new(ata);
    let max = eig.eigenvalues.max();
    if !(eig.eigenvalues.min() > 1e-6 * max.max(1.0)) {
        return None;
    }
    let translation = ata.cholesky()?.solve(&atb);
    let g = RigidTransform::new(rotation, translation);
    // reject a rotation that does not actually align the plane normals
    let aligned = features.iter().all(|f| match f {
        FeatureMatch::Planes { src, dst } => (g.transform_vector(&src.plane.normal) - dst.plane.normal.into_inner()).norm() < 0.1,
        FeatureMatch::Points { .. } => true,
    });
    aligned.then_some(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacOutcome {
    pub transform: RigidTransform,
    /// Indices of the supporting correspondences, ascending.
    pub inliers: Vec<usize>,
}

/// Fixed-iteration RANSAC over mixed correspondences. Returns `None`
/// ("rejected") unless the best hypothesis is supported by strictly more
/// than `consensus_fraction` of the input.
pub fn ransac_verify(matches: &[FeatureMatch<'_>], params: &RansacParams) -> Result<Option<RansacOutcome>> {
    params.validate()?;
    let n = matches.len();
    if n < 3 {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut best: Option<(usize, RigidTransform)> = None;
    for _ in 0..params.iterations {
        let a = rng.gen_range(0..n);
        let mut b = rng.gen_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let mut c = rng.gen_range(0..n - 2);
        for lo in [a.min(b), a.max(b)] {
            if c >= lo {
                c += 1;
            }
        }
        let Some(g) = estimate_transform_from_triplet(&[matches[a], matches[b], matches[c]]) else {
            continue;
        };
        let count = matches
            .iter()
            .filter(|m| m.supports(&g, params.inlier_threshold_m))
            .count();
        if best.as_ref().is_none_or(|(bc, _)| count > *bc) {
            best = Some((count, g));
            if count == n {
                break;
            }
        }
    }
    let Some((count, transform)) = best else {
        return Ok(None);
    };
    if count as f64 / n as f64 <= params.consensus_fraction {
        return Ok(None);
    }
    let inliers = (0..n)
        .filter(|&k| matches[k].supports(&transform, params.inlier_threshold_m))
        .collect();
    Ok(Some(RansacOutcome { transform, inliers }))
}

/// Loads keypoint matches from `frame_i u_px u_py frame_j v_px v_py` rows and
/// back-projects both endpoints through the frames' depth. Endpoints that
/// fall outside the image or on invalid depth drop the row.
pub fn load_keypoint_matches(path: &Path, frames: &[Frame]) -> Result<Vec<KeypointMatch>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_keypoint_matches(path, &text, frames)
}

pub fn parse_keypoint_matches(path: &Path, text: &str, frames: &[Frame]) -> Result<Vec<KeypointMatch>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::parse(path, lineno, format!("expected 6 fields, found {}", fields.len())));
        }
        let frame_id = |s: &str| -> Result<usize> {
            let id: usize = s
                .parse()
                .map_err(|e| Error::parse(path, lineno, format!("bad frame id `{s}`: {e}")))?;
            if frames.iter().all(|f| f.index != id) {
                return Err(Error::parse(path, lineno, format!("unknown frame {id}")));
            }
            Ok(id)
        };
        let coord = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path, lineno, format!("bad pixel coordinate `{s}`")))
        };
        let fi = frame_id(fields[0])?;
        let (ux, uy) = (coord(fields[1])?, coord(fields[2])?);
        let fj = frame_id(fields[3])?;
        let (vx, vy) = (coord(fields[4])?, coord(fields[5])?);
        if fi == fj {
            return Err(Error::parse(path, lineno, "match endpoints lie in the same frame"));
        }
        let lift = |f: usize, x: f64, y: f64| -> Option<Vector3<f64>> {
            let frame = frames.iter().find(|fr| fr.index == f)?;
            let (px, py) = (x.round(), y.round());
            if px < 0.0 || py < 0.0 || px >= frame.width() as f64 || py >= frame.height() as f64 {
                return None;
            }
            let z = *frame.depth.get(px as usize, py as usize);
            (z > 0.0 && z.is_finite()).then(|| frame.intrinsics.back_project(x, y, z))
        };
        if let (Some(u), Some(v)) = (lift(fi, ux, uy), lift(fj, vx, vy)) {
            out.push(KeypointMatch::new(fi, u, fj, v));
        }
    }
    Ok(out)
}

/// Writes pairs as CSV `frame_i,patch_i,frame_j,patch_j,d_f,weight,selection`.
pub fn write_pairs_csv(path: &Path, pairs: &[CoplanarPair]) -> Result<()> {
    let mut out = String::from("frame_i,patch_i,frame_j,patch_j,d_f,weight,selection\n");
    for p in pairs {
        let _ = writeln!(
            out,
            "{},{},{},{},{:?},{:?},{:?}",
            p.p.frame, p.p.patch, p.q.frame, p.q.patch, p.d_f, p.weight, p.selection
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_pairs_csv(path: &Path) -> Result<Vec<CoplanarPair>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(Error::parse(path, lineno, format!("expected 7 fields, found {}", f.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|e| Error::parse(path, lineno, format!("`{s}`: {e}")));
        let real = |s: &str| s.parse::<f64>().map_err(|e| Error::parse(path, lineno, format!("`{s}`: {e}")));
        let mut pair = CoplanarPair::new(
            PatchKey::new(int(f[0])?, int(f[1])?),
            PatchKey::new(int(f[2])?, int(f[3])?),
            real(f[4])?,
            real(f[5])?,
        );
        if pair.p.frame == pair.q.frame {
            return Err(Error::parse(path, lineno, "pair endpoints lie in the same frame"));
        }
        pair.selection = real(f[6])?;
        out.push(pair);
    }
    Ok(out)
}
