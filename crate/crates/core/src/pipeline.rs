//! Hierarchical registration: overlapping fragments are registered
//! internally, then as rigid bodies against each other.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::correspondence::{propose_pairs, ransac_verify, CoplanarPair, FeatureMatch, KeypointMatch, RansacParams};
use crate::descriptor::DescriptorProvider;
use crate::error::{Error, Result};
use crate::geometry::{farthest_point_sampling, fit_plane, PatchKey, PlanePatch, RigidTransform};
use crate::optimizer::{RegistrationProblem, SolveResult, SolverOptions, TraceRow};

#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub id: usize,
    /// First frame, inclusive.
    pub start: usize,
    /// Last frame, inclusive.
    pub end: usize,
    /// Frame poses in fragment coordinates, indexed from `start`.
    pub local_poses: Vec<RigidTransform>,
    /// Fragment-to-global pose.
    pub pose: RigidTransform,
}

impl Fragment {
    pub fn contains(&self, frame: usize) -> bool {
        (self.start..=self.end).contains(&frame)
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn local_pose(&self, frame: usize) -> &RigidTransform {
        &self.local_poses[frame - self.start]
    }

    pub fn global_pose(&self, frame: usize) -> RigidTransform {
        self.pose * *self.local_pose(frame)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveMode {
    #[default]
    Mixed,
    CoplanarityOnly,
    KeypointsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineParams {
    pub fragment_size: usize,
    pub overlap: usize,
    pub solver: SolverOptions,
    pub ransac: RansacParams,
    pub mode: SolveMode,
    /// Representative patches merge below this normal angle (degrees)...
    pub dedup_angle_deg: f64,
    /// ...and this plane offset (meters).
    pub dedup_distance_m: f64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            fragment_size: 21,
            overlap: 5,
            solver: SolverOptions::default(),
            ransac: RansacParams::default(),
            mode: SolveMode::Mixed,
            dedup_angle_deg: 1.0,
            dedup_distance_m: 0.005,
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        if self.overlap == 0 || self.overlap >= self.fragment_size {
            return Err(Error::InvalidParameter(format!(
                "need 0 < overlap < fragment_size, got overlap {} and size {}",
                self.overlap, self.fragment_size
            )));
        }
        if !(self.dedup_angle_deg >= 0.0 && self.dedup_distance_m >= 0.0) {
            return Err(Error::InvalidParameter("dedup tolerances must be non-negative".into()));
        }
        self.solver.validate()?;
        self.ransac.validate()
    }
}

/// Splits `n_frames` into overlapping fragments starting at multiples of
/// `fragment_size − overlap`, the last one clipped to the sequence end.
pub fn partition(n_frames: usize, params: &PipelineParams) -> Result<Vec<Fragment>> {
    params.validate()?;
    if n_frames == 0 {
        return Err(Error::InvalidParameter("cannot partition an empty sequence".into()));
    }
    let stride = params.fragment_size - params.overlap;
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + params.fragment_size - 1).min(n_frames - 1);
        out.push(Fragment {
            id: out.len(),
            start,
            end,
            local_poses: vec![RigidTransform::identity(); end + 1 - start],
            pose: RigidTransform::identity(),
        });
        if end == n_frames - 1 {
            return Ok(out);
        }
        start += stride;
    }
}

/// Fragment that owns `frame`: the earliest one containing it.
pub fn owner(fragments: &[Fragment], frame: usize) -> Option<usize> {
    fragments.iter().position(|f| f.contains(frame))
}

fn filter_mode(
    mode: SolveMode,
    pairs: Vec<CoplanarPair>,
    keypoints: Vec<KeypointMatch>,
) -> (Vec<CoplanarPair>, Vec<KeypointMatch>) {
    match mode {
        SolveMode::Mixed => (pairs, keypoints),
        SolveMode::CoplanarityOnly => (pairs, Vec::new()),
        SolveMode::KeypointsOnly => (Vec::new(), keypoints),
    }
}

fn run_solver(problem: &mut RegistrationProblem, mode: SolveMode) -> Result<SolveResult> {
    match mode {
        SolveMode::CoplanarityOnly => problem.solve_coplanarity_only(),
        _ => problem.solve(),
    }
}

#[derive(Debug, Clone)]
pub struct IntraResult {
    pub local_poses: Vec<RigidTransform>,
    /// Input pairs (global frame indices) with their final selection.
    pub pairs: Vec<CoplanarPair>,
    pub keypoints: Vec<KeypointMatch>,
    pub solve: SolveResult,
}

impl IntraResult {
    /// Pairs selected by the solve (`s > 0.5`).
    pub fn surviving_pairs(&self) -> impl Iterator<Item = &CoplanarPair> {
        self.pairs.iter().filter(|p| p.selection > 0.5)
    }
}

/// Registers the frames of one fragment. Pairs and keypoints use global
/// frame indices and must lie inside the fragment. `initial` holds global
/// initial poses for the whole sequence, identity when absent.
pub fn register_intra(
    fragment: &Fragment,
    patches_by_frame: &[Vec<PlanePatch>],
    pairs: &[CoplanarPair],
    keypoints: &[KeypointMatch],
    initial: Option<&[RigidTransform]>,
    params: &PipelineParams,
) -> Result<IntraResult> {
    if fragment.end >= patches_by_frame.len() {
        return Err(Error::LengthMismatch(fragment.end + 1, patches_by_frame.len()));
    }
    let inside = |f: usize| fragment.contains(f);
    if let Some(p) = pairs.iter().find(|p| !inside(p.p.frame) || !inside(p.q.frame)) {
        return Err(Error::InvalidParameter(format!(
            "pair {:?}-{:?} lies outside fragment {}",
            p.p, p.q, fragment.id
        )));
    }
    if let Some(k) = keypoints.iter().find(|k| !inside(k.frame_i) || !inside(k.frame_j)) {
        return Err(Error::InvalidParameter(format!(
            "keypoint match {}-{} lies outside fragment {}",
            k.frame_i, k.frame_j, fragment.id
        )));
    }
    let s = fragment.start;
    let local = |k: PatchKey| PatchKey::new(k.frame - s, k.patch);
    let local_pairs: Vec<CoplanarPair> = pairs
        .iter()
        .map(|p| CoplanarPair { p: local(p.p), q: local(p.q), ..*p })
        .collect();
    let local_kps: Vec<KeypointMatch> = keypoints
        .iter()
        .map(|k| KeypointMatch {
            frame_i: k.frame_i - s,
            frame_j: k.frame_j - s,
            ..*k
        })
        .collect();
    let (local_pairs, local_kps) = filter_mode(params.mode, local_pairs, local_kps);
    let init = match initial {
        Some(poses) => {
            if poses.len() < patches_by_frame.len() {
                return Err(Error::LengthMismatch(poses.len(), patches_by_frame.len()));
            }
            poses[fragment.start..=fragment.end].to_vec()
        }
        None => vec![RigidTransform::identity(); fragment.len()],
    };
    let patches = patches_by_frame[fragment.start..=fragment.end].to_vec();
    let mut problem = RegistrationProblem::new(init, patches, local_pairs, local_kps, params.solver)?;
    let solve = run_solver(&mut problem, params.mode)?;
    let global = |k: PatchKey| PatchKey::new(k.frame + s, k.patch);
    let out_pairs = problem
        .pairs
        .iter()
        .map(|p| CoplanarPair { p: global(p.p), q: global(p.q), ..*p })
        .collect();
    let out_kps = problem
        .keypoints
        .iter()
        .map(|k| KeypointMatch {
            frame_i: k.frame_i + s,
            frame_j: k.frame_j + s,
            ..*k
        })
        .collect();
    Ok(IntraResult {
        local_poses: solve.poses.clone(),
        pairs: out_pairs,
        keypoints: out_kps,
        solve,
    })
}

/// Registers fragments as rigid nodes. `patches[f]` are fragment `f`'s
/// patches in fragment coordinates; pair keys and keypoint frames refer to
/// fragments. Fragment 0 is pinned.
pub fn register_inter(
    initial: &[RigidTransform],
    patches: Vec<Vec<PlanePatch>>,
    cross_pairs: Vec<CoplanarPair>,
    cross_keypoints: Vec<KeypointMatch>,
    params: &PipelineParams,
) -> Result<SolveResult> {
    let (pairs, kps) = filter_mode(params.mode, cross_pairs, cross_keypoints);
    let mut problem = RegistrationProblem::new(initial.to_vec(), patches, pairs, kps, params.solver)?;
    run_solver(&mut problem, params.mode)
}

/// Initial fragment poses chained through the first frame of each
/// fragment, which the previous fragment also contains.
pub fn chain_fragment_poses(fragments: &[Fragment]) -> Vec<RigidTransform> {
    let mut out: Vec<RigidTransform> = Vec::with_capacity(fragments.len());
    for (f, frag) in fragments.iter().enumerate() {
        let pose = match f.checked_sub(1).map(|p| &fragments[p]) {
            Some(prev) if prev.contains(frag.start) => {
                out[f - 1] * *prev.local_pose(frag.start) * frag.local_pose(frag.start).inverse()
            }
            Some(_) => out[f - 1],
            None => RigidTransform::identity(),
        };
        out.push(pose);
    }
    out
}

/// Global frame poses; overlap frames take the earlier fragment.
pub fn compose_trajectory(fragments: &[Fragment]) -> Result<Vec<RigidTransform>> {
    let n = fragments.iter().map(|f| f.end + 1).max().unwrap_or(0);
    (0..n)
        .map(|k| {
            let f = owner(fragments, k).ok_or(Error::UncoveredFrame(k))?;
            Ok(fragments[f].global_pose(k))
        })
        .collect()
}

/// Largest (translation m, rotation rad) disagreement between fragments on
/// shared frames.
pub fn overlap_discrepancy(fragments: &[Fragment]) -> (f64, f64) {
    let mut worst = (0.0f64, 0.0f64);
    for (a, fa) in fragments.iter().enumerate() {
        for fb in &fragments[a + 1..] {
            for k in fb.start.max(fa.start)..=fa.end.min(fb.end) {
                let (dr, dt) = fa.global_pose(k).distance_to(&fb.global_pose(k));
                worst = (worst.0.max(dt), worst.1.max(dr));
            }
        }
    }
    worst
}

/// Deduplicated patches of the frames owned by a fragment, in fragment
/// coordinates, with the source keys merged into each one.
#[derive(Debug, Clone, Default)]
pub struct Representatives {
    pub patches: Vec<PlanePatch>,
    pub sources: Vec<Vec<PatchKey>>,
}

pub fn representative_patches(
    fragment: &Fragment,
    owned: impl IntoIterator<Item = usize>,
    patches_by_frame: &[Vec<PlanePatch>],
    params: &PipelineParams,
) -> Representatives {
    let cos_tol = params.dedup_angle_deg.to_radians().cos();
    let mut reps = Representatives::default();
    let mut merged: Vec<Vec<nalgebra::Vector3<f64>>> = Vec::new();
    for frame in owned {
        let pose = fragment.local_pose(frame);
        for (k, patch) in patches_by_frame[frame].iter().enumerate() {
            let q = patch.transformed(pose);
            let hit = reps.patches.iter().position(|r| {
                r.plane.normal.dot(&q.plane.normal) >= cos_tol
                    && r.plane.signed_distance(&q.plane.point).abs() <= params.dedup_distance_m
                    && q.plane.signed_distance(&r.plane.point).abs() <= params.dedup_distance_m
            });
            match hit {
                Some(r) => {
                    merged[r].extend_from_slice(&q.samples);
                    reps.sources[r].push(PatchKey::new(frame, k));
                    let rep = &mut reps.patches[r];
                    rep.area += q.area;
                    rep.pixel_count += q.pixel_count;
                }
                None => {
                    merged.push(q.samples.clone());
                    reps.sources.push(vec![PatchKey::new(frame, k)]);
                    reps.patches.push(PlanePatch {
                        id: reps.patches.len() as u32,
                        frame_id: fragment.id,
                        pixels: Vec::new(),
                        ..q
                    });
                }
            }
        }
    }
    let spp = params.solver.samples_per_patch;
    for (rep, samples) in reps.patches.iter_mut().zip(merged) {
        if rep.samples.len() == samples.len() {
            continue;
        }
        if let Some((plane, _)) = fit_plane(&samples) {
            let oriented = if plane.normal.dot(&rep.plane.normal) < 0.0 {
                crate::geometry::Plane::new(plane.point, -plane.normal.into_inner())
            } else {
                plane
            };
            rep.plane = oriented;
            rep.centroid = oriented.point;
        }
        rep.samples = farthest_point_sampling(&samples, spp).into_iter().map(|k| samples[k]).collect();
    }
    reps
}

/// Data for a pipeline run. Pairs and keypoints use global frame indices.
pub struct PipelineInput<'a> {
    pub patches_by_frame: &'a [Vec<PlanePatch>],
    pub pairs: &'a [CoplanarPair],
    pub keypoints: &'a [KeypointMatch],
    pub initial_poses: Option<&'a [RigidTransform]>,
    /// Provider and threshold for proposing pairs between the
    /// representative patches of different fragments.
    pub long_range: Option<(&'a dyn DescriptorProvider, f64)>,
}

/// Outcome of RANSAC for one fragment pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentLink {
    pub fragments: (usize, usize),
    pub candidates: usize,
    pub accepted: bool,
    pub inliers: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub fragments: Vec<Fragment>,
    pub trajectory: Vec<RigidTransform>,
    pub intra: Vec<IntraResult>,
    pub links: Vec<FragmentLink>,
    /// Verified cross pairs between representatives, final selection.
    pub cross_pairs: Vec<CoplanarPair>,
    pub inter: Option<SolveResult>,
    /// Final selection of every input pair: the best intra selection over
    /// fragments containing both frames, else the inter selection of its
    /// verified cross pair, else 0.
    pub pair_selections: Vec<f64>,
    pub overlap_discrepancy: (f64, f64),
}

impl PipelineOutput {
    /// Every solver trace row labelled by stage (`intra<k>` or `inter`).
    pub fn traces(&self) -> Vec<(String, &TraceRow)> {
        let mut out: Vec<(String, &TraceRow)> = Vec::new();
        for (k, r) in self.intra.iter().enumerate() {
            out.extend(r.solve.trace.iter().map(|t| (format!("intra{k}"), t)));
        }
        if let Some(inter) = &self.inter {
            out.extend(inter.trace.iter().map(|t| ("inter".to_string(), t)));
        }
        out
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Partition, intra solves, RANSAC-verified cross pairs, inter solve and
/// composition.
pub fn run_pipeline(input: &PipelineInput<'_>, params: &PipelineParams) -> Result<PipelineOutput> {
    params.validate()?;
    let patches = input.patches_by_frame;
    let n = patches.len();
    let mut fragments = partition(n, params)?;
    for p in input.pairs {
        for k in [p.p, p.q] {
            if patches.get(k.frame).and_then(|ps| ps.get(k.patch)).is_none() {
                return Err(Error::InvalidParameter(format!("pair references missing patch {k:?}")));
            }
        }
    }
    if let Some(k) = input.keypoints.iter().find(|k| k.frame_i >= n || k.frame_j >= n) {
        return Err(Error::InvalidParameter(format!(
            "keypoint match between frames {} and {} of {n}",
            k.frame_i, k.frame_j
        )));
    }

    let intra: Vec<IntraResult> = fragments
        .par_iter()
        .map(|frag| {
            let pairs: Vec<CoplanarPair> = input
                .pairs
                .iter()
                .filter(|p| frag.contains(p.p.frame) && frag.contains(p.q.frame))
                .copied()
                .collect();
            let kps: Vec<KeypointMatch> = input
                .keypoints
                .iter()
                .filter(|k| frag.contains(k.frame_i) && frag.contains(k.frame_j))
                .copied()
                .collect();
            register_intra(frag, patches, &pairs, &kps, input.initial_poses, params)
        })
        .collect::<Result<_>>()?;
    for (frag, r) in fragments.iter_mut().zip(&intra) {
        frag.local_poses = r.local_poses.clone();
    }

    // Best intra selection per input pair / keypoint, if any fragment held it.
    let mut intra_sel: HashMap<(PatchKey, PatchKey), f64> = HashMap::new();
    for r in &intra {
        for p in &r.pairs {
            let e = intra_sel.entry((p.p, p.q)).or_insert(0.0);
            *e = e.max(p.selection);
        }
    }
    let shares_fragment = |a: usize, b: usize| fragments.iter().any(|f| f.contains(a) && f.contains(b));

    let owners: Vec<usize> = (0..n).map(|k| owner(&fragments, k).unwrap_or(0)).collect();
    let mut owned: Vec<Vec<usize>> = vec![Vec::new(); fragments.len()];
    for (k, o) in owners.iter().enumerate() {
        owned[*o].push(k);
    }
    let reps: Vec<Representatives> = fragments
        .iter()
        .zip(&owned)
        .map(|(f, o)| representative_patches(f, o.iter().copied(), patches, params))
        .collect();
    let mut rep_of: HashMap<PatchKey, PatchKey> = HashMap::new();
    for (f, r) in reps.iter().enumerate() {
        for (i, srcs) in r.sources.iter().enumerate() {
            for s in srcs {
                rep_of.insert(*s, PatchKey::new(f, i));
            }
        }
    }

    // Cross-fragment candidates keyed by representative pair.
    let mut candidates: BTreeMap<(PatchKey, PatchKey), CoplanarPair> = BTreeMap::new();
    let mut origin: Vec<Option<(PatchKey, PatchKey)>> = vec![None; input.pairs.len()];
    if params.mode != SolveMode::KeypointsOnly {
        for (idx, p) in input.pairs.iter().enumerate() {
            let (fa, fb) = (owners[p.p.frame], owners[p.q.frame]);
            if fa == fb {
                continue;
            }
            if shares_fragment(p.p.frame, p.q.frame) && intra_sel.get(&(p.p, p.q)).copied().unwrap_or(0.0) <= 0.5 {
                continue;
            }
            let c = CoplanarPair::new(rep_of[&p.p], rep_of[&p.q], p.d_f, p.weight);
            origin[idx] = Some((c.p, c.q));
            candidates.entry((c.p, c.q)).or_insert(c);
        }
        if let Some((provider, threshold)) = input.long_range {
            let proxies: Vec<Vec<PlanePatch>> = reps
                .iter()
                .map(|r| r.sources.iter().map(|s| patches[s[0].frame][s[0].patch].clone()).collect())
                .collect();
            for c in propose_pairs(&proxies, provider, threshold)? {
                candidates.entry((c.p, c.q)).or_insert(c);
            }
        }
    }
    let mut cross_kps: Vec<KeypointMatch> = Vec::new();
    if params.mode != SolveMode::CoplanarityOnly {
        for k in input.keypoints {
            let (fa, fb) = (owners[k.frame_i], owners[k.frame_j]);
            if fa == fb {
                continue;
            }
            let u = fragments[fa].local_pose(k.frame_i).transform_point(&k.u);
            let v = fragments[fb].local_pose(k.frame_j).transform_point(&k.v);
            cross_kps.push(if fa < fb {
                KeypointMatch::new(fa, u, fb, v)
            } else {
                KeypointMatch::new(fb, v, fa, u)
            });
        }
    }

    // RANSAC per fragment pair.
    let mut groups: BTreeMap<(usize, usize), (Vec<CoplanarPair>, Vec<KeypointMatch>)> = BTreeMap::new();
    for c in candidates.values() {
        groups.entry((c.p.frame, c.q.frame)).or_default().0.push(*c);
    }
    for k in &cross_kps {
        groups.entry((k.frame_i, k.frame_j)).or_default().1.push(*k);
    }
    let n_frag = fragments.len() as u64;
    let verified: Vec<(FragmentLink, Vec<CoplanarPair>, Vec<KeypointMatch>)> = groups
        .into_par_iter()
        .map(|((fa, fb), (pairs, kps))| {
            let mut matches: Vec<FeatureMatch<'_>> = pairs
                .iter()
                .map(|c| FeatureMatch::Planes {
                    src: &reps[fa].patches[c.p.patch],
                    dst: &reps[fb].patches[c.q.patch],
                })
                .collect();
            matches.extend(kps.iter().map(|k| FeatureMatch::Points { src: k.u, dst: k.v }));
            let ransac = RansacParams {
                rng_seed: mix(params.ransac.rng_seed ^ mix(fa as u64 * n_frag + fb as u64)),
                ..params.ransac
            };
            let outcome = ransac_verify(&matches, &ransac)?;
            let mut link = FragmentLink {
                fragments: (fa, fb),
                candidates: matches.len(),
                accepted: outcome.is_some(),
                inliers: 0,
            };
            let (mut vp, mut vk) = (Vec::new(), Vec::new());
            if let Some(o) = outcome {
                link.inliers = o.inliers.len();
                for i in o.inliers {
                    if i < pairs.len() {
                        vp.push(pairs[i]);
                    } else {
                        vk.push(kps[i - pairs.len()]);
                    }
                }
            }
            Ok((link, vp, vk))
        })
        .collect::<Result<_>>()?;
    let mut links = Vec::new();
    let (mut inter_pairs, mut inter_kps) = (Vec::new(), Vec::new());
    for (l, p, k) in verified {
        links.push(l);
        inter_pairs.extend(p);
        inter_kps.extend(k);
    }

    let initial = chain_fragment_poses(&fragments);
    let mut inter = None;
    let mut cross_pairs = Vec::new();
    if fragments.len() > 1 {
        let rep_patches = reps.iter().map(|r| r.patches.clone()).collect();
        let r = register_inter(&initial, rep_patches, inter_pairs.clone(), inter_kps, params)?;
        if r.pair_selections.len() == inter_pairs.len() {
            for (p, s) in inter_pairs.iter_mut().zip(&r.pair_selections) {
                p.selection = *s;
            }
            cross_pairs = inter_pairs;
        }
        for (f, pose) in fragments.iter_mut().zip(&r.poses) {
            f.pose = *pose;
        }
        inter = Some(r);
    }
    let cross_sel: HashMap<(PatchKey, PatchKey), f64> = cross_pairs.iter().map(|p| ((p.p, p.q), p.selection)).collect();
    let pair_selections = input
        .pairs
        .iter()
        .zip(&origin)
        .map(|(p, o)| {
            intra_sel
                .get(&(p.p, p.q))
                .copied()
                .or_else(|| o.and_then(|k| cross_sel.get(&k).copied()))
                .unwrap_or(0.0)
        })
        .collect();
    let trajectory = compose_trajectory(&fragments)?;
    let overlap_discrepancy = overlap_discrepancy(&fragments);
    Ok(PipelineOutput {
        fragments,
        trajectory,
        intra,
        links,
        cross_pairs,
        inter,
        pair_selections,
        overlap_discrepancy,
    })
}

/// Writes the stage-labelled solver trace.
pub fn write_pipeline_trace_csv(path: &Path, output: &PipelineOutput) -> Result<()> {
    let mut out = String::from("stage,outer,inner,mu,E_total,E_data_cop,E_reg_cop,E_data_kp,E_reg_kp,E_reg_frame,selected_cop,selected_kp\n");
    for (stage, r) in output.traces() {
        let e = &r.energy;
        let _ = writeln!(
            out,
            "{stage},{},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{},{}",
            r.outer,
            r.inner,
            r.mu,
            e.total(),
            e.data_cop,
            e.reg_cop,
            e.data_kp,
            e.reg_kp,
            e.reg_frame,
            r.selected_cop,
            r.selected_kp
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes poses as `timestamp tx ty tz qx qy qz qw` lines.
pub fn write_tum_trajectory(path: &Path, timestamps: &[f64], poses: &[RigidTransform]) -> Result<()> {
    if timestamps.len() != poses.len() {
        return Err(Error::LengthMismatch(timestamps.len(), poses.len()));
    }
    let mut out = String::new();
    for (ts, t) in timestamps.iter().zip(poses) {
        let q = t.quaternion();
        let p = t.translation;
        let _ = writeln!(
            out,
            "{ts:.6} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
            p.x, p.y, p.z, q.i, q.j, q.k, q.w
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a TUM trajectory; `#` comments and blank lines are skipped.
pub fn read_tum_trajectory(path: &Path) -> Result<(Vec<f64>, Vec<RigidTransform>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ts = Vec::new();
    let mut poses = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        if v.len() != 8 {
            return Err(Error::parse(path, idx + 1, format!("expected 8 values, found {}", v.len())));
        }
        let q = nalgebra::Quaternion::new(v[7], v[4], v[5], v[6]);
        if !(q.norm() > 0.0) {
            return Err(Error::parse(path, idx + 1, "zero quaternion"));
        }
        ts.push(v[0]);
        poses.push(RigidTransform::from_quaternion(
            nalgebra::UnitQuaternion::from_quaternion(q),
            nalgebra::Vector3::new(v[1], v[2], v[3]),
        ));
    }
    Ok((ts, poses))
}

#[cfg(test)]
mod tests;
