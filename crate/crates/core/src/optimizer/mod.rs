//! Robust registration: alternating pose and selection updates under a
//! shrinking pruning scale μ.
//!
//! The energy is
//! `Σ w s δ² + Σ μ w Ψ(s) + Σ s r_θ + Σ μ Ψ(s_θ)` with `Ψ(s) = (√s − 1)²`;
//! the coplanarity-only variant drops the keypoint terms, adds a frame
//! regularizer and uses per-frame, per-axis μ.

mod residuals;
mod stability;

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SMatrix, SVector, Vector3};
use rayon::prelude::*;

pub use residuals::{coplanar_residual, moment_factor, point_residual, PatchTerm};
pub use stability::{stability_matrix, translational_gammas};

use crate::correspondence::{CoplanarPair, KeypointMatch};
use crate::error::{Error, Result};
use crate::geometry::{farthest_point_sampling, PlanePatch, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub mu_init: f64,
    pub mu_floor: f64,
    pub mu_decay: f64,
    pub rel_tol: f64,
    pub max_outer: usize,
    /// Cap on pose/selection alternations per μ level.
    pub max_inner: usize,
    pub samples_per_patch: usize,
    pub kp_squared: bool,
    pub frame_reg_lambda: f64,
    pub gamma_t: f64,
    /// Initial per-axis μ in coplanarity-only mode.
    pub mu_axis_init: f64,
    /// Levenberg-Marquardt iterations per pose update.
    pub lm_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            mu_init: 1.0,
            mu_floor: 0.01,
            mu_decay: 0.5,
            rel_tol: 1e-6,
            max_outer: 50,
            max_inner: 100,
            samples_per_patch: 64,
            kp_squared: true,
            frame_reg_lambda: 0.001,
            gamma_t: 0.5,
            mu_axis_init: 0.1,
            lm_iterations: 10,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.mu_init > 0.0 && self.mu_floor > 0.0 && self.mu_axis_init > 0.0) {
            return bad("mu_init, mu_floor and mu_axis_init must be positive");
        }
        if !(self.mu_decay > 0.0 && self.mu_decay < 1.0) {
            return bad("mu_decay must lie in (0, 1)");
        }
        if !(self.rel_tol > 0.0) {
            return bad("rel_tol must be positive");
        }
        if self.samples_per_patch == 0 || self.max_inner == 0 || self.lm_iterations == 0 {
            return bad("samples_per_patch, max_inner and lm_iterations must be positive");
        }
        if !(self.frame_reg_lambda >= 0.0) || !(self.gamma_t >= 0.0) {
            return bad("frame_reg_lambda and gamma_t must be nonnegative");
        }
        Ok(())
    }
}

/// Penalty `Ψ(s) = (√s − 1)²`, extended by 1 for `s < 0` and clamped above 1.
pub fn psi(s: f64) -> f64 {
    if s < 0.0 {
        1.0
    } else {
        (s.min(1.0).sqrt() - 1.0).powi(2)
    }
}

/// Minimizer of `s ρ + μ Ψ(s)` over `s ∈ [0, 1]`.
pub fn closed_form_selection(mu: f64, rho: f64) -> f64 {
    (mu / (mu + rho.max(0.0))).powi(2).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveBreakdown {
    pub data_cop: f64,
    pub reg_cop: f64,
    pub data_kp: f64,
    pub reg_kp: f64,
    /// Frame regularizer (coplanarity-only mode).
    pub reg_frame: f64,
}

impl ObjectiveBreakdown {
    pub fn total(&self) -> f64 {
        self.data_cop + self.reg_cop + self.data_kp + self.reg_kp + self.reg_frame
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub outer: usize,
    pub inner: usize,
    pub mu: f64,
    pub energy: ObjectiveBreakdown,
    pub selected_cop: usize,
    pub selected_kp: usize,
}

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut out = String::from("outer,inner,mu,E_total,E_data_cop,E_reg_cop,E_data_kp,E_reg_kp,selected_cop,selected_kp\n");
    for r in rows {
        let e = &r.energy;
        let _ = writeln!(
            out,
            "{},{},{:?},{:?},{:?},{:?},{:?},{:?},{},{}",
            r.outer,
            r.inner,
            r.mu,
            e.total(),
            e.data_cop,
            e.reg_cop,
            e.data_kp,
            e.reg_kp,
            r.selected_cop,
            r.selected_kp
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// `γ_i^d` per frame and axis.
    pub gamma: Vec<[f64; 3]>,
    /// `μ_i^d` per frame and axis in effect when the report was made.
    pub mu: Vec<[f64; 3]>,
}

impl StabilityReport {
    pub fn max_gamma(&self) -> f64 {
        self.gamma.iter().flatten().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub poses: Vec<RigidTransform>,
    pub pair_selections: Vec<f64>,
    pub keypoint_selections: Vec<f64>,
    pub trace: Vec<TraceRow>,
    /// Pair selections at the end of each outer level.
    pub level_selections: Vec<Vec<f64>>,
    /// Final stability analysis (coplanarity-only mode).
    pub stability: Option<StabilityReport>,
}

#[derive(Debug, Clone, PartialEq)]
enum Mode {
    Mixed,
    CoplanarityOnly {
        mu_axis: Vec<[f64; 3]>,
        /// Per-pair μ, refreshed at the start of each outer level.
        pair_mu: Vec<f64>,
    },
}

/// Registration problem over a set of nodes (frames or fragments).
///
/// Node `k` has pose `poses[k]` and patches `patches[k]` in its own
/// coordinates. Pairs and keypoints refer to nodes by index. Node 0 is the
/// gauge: its pose is the identity and never changes.
#[derive(Debug, Clone)]
pub struct RegistrationProblem {
    poses: Vec<RigidTransform>,
    patches: Vec<Vec<PlanePatch>>,
    pub pairs: Vec<CoplanarPair>,
    pub keypoints: Vec<KeypointMatch>,
    pub mu: f64,
    pub options: SolverOptions,
    mode: Mode,
    terms: Vec<Vec<PatchTerm>>,
    reg_points: Vec<Vec<Vector3<f64>>>,
}

/// Evaluated residual block with weight, ready for accumulation.
struct Block<const M: usize> {
    i: usize,
    j: usize,
    weight: f64,
    r: SVector<f64, M>,
    ji: SMatrix<f64, M, 6>,
    jj: SMatrix<f64, M, 6>,
}

impl RegistrationProblem {
    /// Builds a problem. Initial poses are re-expressed relative to node 0,
    /// and patch samples are thinned to `samples_per_patch`.
    pub fn new(
        initial_poses: Vec<RigidTransform>,
        patches: Vec<Vec<PlanePatch>>,
        pairs: Vec<CoplanarPair>,
        keypoints: Vec<KeypointMatch>,
        options: SolverOptions,
    ) -> Result<Self> {
        options.validate()?;
        if initial_poses.len() != patches.len() {
            return Err(Error::LengthMismatch(initial_poses.len(), patches.len()));
        }
        if initial_poses.is_empty() {
            return Err(Error::InvalidParameter("problem needs at least one frame".into()));
        }
        let n = initial_poses.len();
        for pair in &pairs {
            for key in [pair.p, pair.q] {
                let patch = patches
                    .get(key.frame)
                    .and_then(|ps| ps.get(key.patch))
                    .ok_or_else(|| Error::InvalidParameter(format!("pair references missing patch {key:?}")))?;
                patch.ensure_samples()?;
            }
            if pair.p.frame == pair.q.frame {
                return Err(Error::InvalidParameter(format!("pair within frame {}", pair.p.frame)));
            }
            if !(pair.weight > 0.0 && pair.weight <= 1.0) || !(0.0..=1.0).contains(&pair.selection) {
                return Err(Error::InvalidParameter("pair weight must lie in (0, 1] and selection in [0, 1]".into()));
            }
        }
        for kp in &keypoints {
            if kp.frame_i >= n || kp.frame_j >= n || kp.frame_i == kp.frame_j {
                return Err(Error::InvalidParameter(format!(
                    "keypoint match between frames {} and {}",
                    kp.frame_i, kp.frame_j
                )));
            }
            if !(kp.u.iter().chain(kp.v.iter()).all(|x| x.is_finite())) {
                return Err(Error::InvalidParameter("keypoint coordinates must be finite".into()));
            }
        }
        let anchor = initial_poses[0].inverse();
        let mut poses: Vec<RigidTransform> = initial_poses.iter().map(|t| anchor * *t).collect();
        poses[0] = RigidTransform::identity();
        let spp = options.samples_per_patch;
        let patches: Vec<Vec<PlanePatch>> = patches
            .into_iter()
            .map(|ps| {
                ps.into_iter()
                    .map(|mut p| {
                        if p.samples.len() > spp {
                            let idx = farthest_point_sampling(&p.samples, spp);
                            p.samples = idx.into_iter().map(|k| p.samples[k]).collect();
                        }
                        p
                    })
                    .collect()
            })
            .collect();
        let terms = patches
            .iter()
            .map(|ps| ps.iter().map(PatchTerm::new).collect())
            .collect();
        let reg_points = patches
            .iter()
            .map(|ps| {
                let all: Vec<Vector3<f64>> = ps.iter().flat_map(|p| p.samples.iter().copied()).collect();
                farthest_point_sampling(&all, spp).into_iter().map(|k| all[k]).collect()
            })
            .collect();
        Ok(Self {
            poses,
            patches,
            pairs,
            keypoints,
            mu: options.mu_init,
            options,
            mode: Mode::Mixed,
            terms,
            reg_points,
        })
    }

    pub fn poses(&self) -> &[RigidTransform] {
        &self.poses
    }

    pub fn patches(&self) -> &[Vec<PlanePatch>] {
        &self.patches
    }

    pub fn num_nodes(&self) -> usize {
        self.poses.len()
    }

    /// Replaces the current estimate; node 0 must stay the identity.
    pub fn set_poses(&mut self, poses: Vec<RigidTransform>) -> Result<()> {
        if poses.len() != self.poses.len() {
            return Err(Error::LengthMismatch(poses.len(), self.poses.len()));
        }
        if poses[0] != RigidTransform::identity() {
            return Err(Error::InvalidParameter("frame 0 pose must be the identity".into()));
        }
        self.poses = poses;
        Ok(())
    }

    pub fn is_coplanarity_only(&self) -> bool {
        matches!(self.mode, Mode::CoplanarityOnly { .. })
    }

    /// Switches to coplanarity-only mode: keypoints are ignored, the frame
    /// regularizer is active and every `μ_i^d` starts at `mu_axis_init`.
    pub fn enter_coplanarity_only(&mut self) {
        let mu_axis = vec![[self.options.mu_axis_init; 3]; self.poses.len()];
        self.mode = Mode::CoplanarityOnly {
            mu_axis,
            pair_mu: Vec::new(),
        };
        self.refresh_pair_mu();
    }

    pub fn mu_axis(&self) -> Option<&[[f64; 3]]> {
        match &self.mode {
            Mode::CoplanarityOnly { mu_axis, .. } => Some(mu_axis),
            Mode::Mixed => None,
        }
    }

    fn dominant_axis(&self, node: usize, normal: &Vector3<f64>) -> usize {
        let g = self.poses[node].transform_vector(normal);
        (0..3).max_by(|&a, &b| g[a].abs().total_cmp(&g[b].abs())).unwrap_or(0)
    }

    fn refresh_pair_mu(&mut self) {
        let values: Vec<f64> = match &self.mode {
            Mode::Mixed => return,
            Mode::CoplanarityOnly { mu_axis, .. } => self
                .pairs
                .iter()
                .map(|pair| {
                    let np = &self.terms[pair.p.frame][pair.p.patch].normal;
                    let nq = &self.terms[pair.q.frame][pair.q.patch].normal;
                    let dp = self.dominant_axis(pair.p.frame, np);
                    let dq = self.dominant_axis(pair.q.frame, nq);
                    mu_axis[pair.p.frame][dp].min(mu_axis[pair.q.frame][dq])
                })
                .collect(),
        };
        if let Mode::CoplanarityOnly { pair_mu, .. } = &mut self.mode {
            *pair_mu = values;
        }
    }

    /// Pruning scale used by pair `k`.
    pub fn pair_mu(&self, k: usize) -> f64 {
        match &self.mode {
            Mode::Mixed => self.mu,
            Mode::CoplanarityOnly { pair_mu, .. } => pair_mu.get(k).copied().unwrap_or(self.mu),
        }
    }

    fn uses_keypoints(&self) -> bool {
        !self.is_coplanarity_only()
    }

    fn frame_lambda(&self) -> f64 {
        if self.is_coplanarity_only() {
            self.options.frame_reg_lambda
        } else {
            0.0
        }
    }

    fn pair_delta_sq(&self, poses: &[RigidTransform], pair: &CoplanarPair) -> f64 {
        let p = &self.terms[pair.p.frame][pair.p.patch];
        let q = &self.terms[pair.q.frame][pair.q.patch];
        coplanar_residual(p, q, &poses[pair.p.frame], &poses[pair.q.frame]).0.norm_squared()
    }

    fn keypoint_rho(&self, poses: &[RigidTransform], kp: &KeypointMatch) -> f64 {
        let r = poses[kp.frame_i].transform_point(&kp.u) - poses[kp.frame_j].transform_point(&kp.v);
        if self.options.kp_squared {
            r.norm_squared()
        } else {
            r.norm()
        }
    }

    fn frame_reg_cost(&self, poses: &[RigidTransform]) -> f64 {
        let lambda = self.frame_lambda();
        if lambda == 0.0 {
            return 0.0;
        }
        let mut sum = 0.0;
        for i in 0..poses.len().saturating_sub(1) {
            for v in &self.reg_points[i] {
                sum += (poses[i].transform_point(v) - poses[i + 1].transform_point(v)).norm_squared();
            }
        }
        lambda * sum
    }

    fn breakdown_at(&self, poses: &[RigidTransform]) -> ObjectiveBreakdown {
        let deltas: Vec<f64> = self.pairs.par_iter().map(|p| self.pair_delta_sq(poses, p)).collect();
        let mut e = ObjectiveBreakdown::default();
        for (k, (pair, d2)) in self.pairs.iter().zip(&deltas).enumerate() {
            e.data_cop += pair.weight * pair.selection * d2;
            e.reg_cop += self.pair_mu(k) * pair.weight * psi(pair.selection);
        }
        if self.uses_keypoints() {
            for kp in &self.keypoints {
                e.data_kp += kp.selection * self.keypoint_rho(poses, kp);
                e.reg_kp += self.mu * psi(kp.selection);
            }
        }
        e.reg_frame = self.frame_reg_cost(poses);
        e
    }

    /// Energy and its per-term breakdown at the current poses and selections.
    pub fn objective_value(&self) -> ObjectiveBreakdown {
        self.breakdown_at(&self.poses)
    }

    /// Pose-dependent part of the energy.
    fn data_cost(&self, poses: &[RigidTransform]) -> f64 {
        let e = self.breakdown_at(poses);
        e.data_cop + e.data_kp + e.reg_frame
    }

    /// Closed-form selection step for fixed poses.
    pub fn update_selections(&mut self) {
        let deltas: Vec<f64> = self.pairs.par_iter().map(|p| self.pair_delta_sq(&self.poses, p)).collect();
        let mus: Vec<f64> = (0..self.pairs.len()).map(|k| self.pair_mu(k)).collect();
        for ((pair, d2), mu) in self.pairs.iter_mut().zip(deltas).zip(mus) {
            pair.selection = closed_form_selection(mu, d2);
        }
        if self.uses_keypoints() {
            let rhos: Vec<f64> = self.keypoints.iter().map(|kp| self.keypoint_rho(&self.poses, kp)).collect();
            for (kp, rho) in self.keypoints.iter_mut().zip(rhos) {
                kp.selection = closed_form_selection(self.mu, rho);
            }
        }
    }

    fn linearize(&self, poses: &[RigidTransform]) -> (DMatrix<f64>, DVector<f64>) {
        let dim = 6 * (poses.len() - 1);
        let mut h = DMatrix::zeros(dim, dim);
        let mut g = DVector::zeros(dim);

        let cop: Vec<Block<8>> = self
            .pairs
            .par_iter()
            .filter(|pair| pair.weight * pair.selection > 0.0)
            .map(|pair| {
                let p = &self.terms[pair.p.frame][pair.p.patch];
                let q = &self.terms[pair.q.frame][pair.q.patch];
                let (r, ji, jj) = coplanar_residual(p, q, &poses[pair.p.frame], &poses[pair.q.frame]);
                Block {
                    i: pair.p.frame,
                    j: pair.q.frame,
                    weight: pair.weight * pair.selection,
                    r,
                    ji,
                    jj,
                }
            })
            .collect();
        for b in &cop {
            accumulate(&mut h, &mut g, b);
        }
        if self.uses_keypoints() {
            for kp in self.keypoints.iter().filter(|kp| kp.selection > 0.0) {
                let (r, ji, jj) = point_residual(&kp.u, &kp.v, &poses[kp.frame_i], &poses[kp.frame_j]);
                let weight = if self.options.kp_squared {
                    kp.selection
                } else {
                    // majorizer of s‖r‖ at the current residual
                    kp.selection / (2.0 * r.norm().max(1e-9))
                };
                accumulate(&mut h, &mut g, &Block { i: kp.frame_i, j: kp.frame_j, weight, r, ji, jj });
            }
        }
        let lambda = self.frame_lambda();
        if lambda > 0.0 {
            for i in 0..poses.len() - 1 {
                for v in &self.reg_points[i] {
                    let (r, ji, jj) = point_residual(v, v, &poses[i], &poses[i + 1]);
                    accumulate(&mut h, &mut g, &Block { i, j: i + 1, weight: lambda, r, ji, jj });
                }
            }
        }
        (h, g)
    }

    /// Levenberg-Marquardt on the pose-dependent energy with selections
    /// fixed. Never increases the energy; node 0 is not touched.
    pub fn update_poses(&mut self) -> Result<()> {
        let n = self.poses.len();
        if n < 2 {
            return Ok(());
        }
        let mut cost = self.data_cost(&self.poses);
        if !cost.is_finite() {
            return Err(self.diverged("non-finite energy"));
        }
        let mut damping = 1e-4;
        for _ in 0..self.options.lm_iterations {
            let (h, g) = self.linearize(&self.poses);
            if g.iter().any(|x| !x.is_finite()) || h.iter().any(|x| !x.is_finite()) {
                return Err(self.diverged("non-finite linearization"));
            }
            if g.amax() == 0.0 {
                break;
            }
            let max_diag = h.diagonal().amax();
            let eps = 1e-9 * max_diag.max(1e-12);
            let mut accepted = false;
            while damping < 1e12 {
                let mut a = h.clone();
                for k in 0..a.nrows() {
                    a[(k, k)] += damping * (h[(k, k)] + eps);
                }
                let Some(chol) = a.cholesky() else {
                    damping *= 10.0;
                    continue;
                };
                let step = chol.solve(&(-&g));
                let trial = self.retracted(&step);
                let trial_cost = self.data_cost(&trial);
                if trial_cost.is_finite() && trial_cost < cost && trial.iter().all(pose_is_finite) {
                    let reduction = cost - trial_cost;
                    self.poses = trial;
                    cost = trial_cost;
                    damping = (damping / 10.0).max(1e-12);
                    accepted = true;
                    if reduction <= 1e-15 * cost.max(1e-300) || step.amax() < 1e-14 {
                        return Ok(());
                    }
                    break;
                }
                damping *= 10.0;
            }
            if !accepted {
                break;
            }
        }
        Ok(())
    }

    fn retracted(&self, step: &DVector<f64>) -> Vec<RigidTransform> {
        let mut out = self.poses.clone();
        for (k, pose) in out.iter_mut().enumerate().skip(1) {
            let o = 6 * (k - 1);
            let omega = Vector3::new(step[o], step[o + 1], step[o + 2]);
            let tau = Vector3::new(step[o + 3], step[o + 4], step[o + 5]);
            *pose = pose.retract(&omega, &tau);
        }
        out
    }

    fn diverged(&self, reason: &str) -> Error {
        Error::SolverDiverged {
            reason: reason.into(),
            last_poses: self.poses.clone(),
        }
    }

    fn unknowns(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(12 * self.poses.len() + self.pairs.len() + self.keypoints.len());
        for p in &self.poses[1..] {
            x.extend(p.matrix().iter());
            x.extend(p.translation.iter());
        }
        x.extend(self.pairs.iter().map(|p| p.selection));
        if self.uses_keypoints() {
            x.extend(self.keypoints.iter().map(|k| k.selection));
        }
        x
    }

    fn counts(&self) -> (usize, usize) {
        let cop = self.pairs.iter().filter(|p| p.selection > 0.5).count();
        let kp = if self.uses_keypoints() {
            self.keypoints.iter().filter(|k| k.selection > 0.5).count()
        } else {
            0
        };
        (cop, kp)
    }

    /// Alternates selection and pose updates at the current μ until no
    /// unknown changes by more than `rel_tol` relative to its magnitude.
    fn solve_level(&mut self, outer: usize, trace: &mut Vec<TraceRow>) -> Result<()> {
        let tol = self.options.rel_tol;
        for inner in 0..self.options.max_inner {
            let before = self.unknowns();
            let e_before = self.objective_value().total();
            self.update_selections();
            let e_after = self.objective_value().total();
            debug_assert!(
                e_after <= e_before + 1e-9 * e_before.abs().max(1.0),
                "selection step increased the energy: {e_before} -> {e_after}"
            );
            self.update_poses()?;
            let energy = self.objective_value();
            let (selected_cop, selected_kp) = self.counts();
            trace.push(TraceRow {
                outer,
                inner,
                mu: self.mu,
                energy,
                selected_cop,
                selected_kp,
            });
            let after = self.unknowns();
            if before
                .iter()
                .zip(&after)
                .all(|(a, b)| (b - a).abs() <= tol * a.abs().max(1.0))
            {
                break;
            }
        }
        Ok(())
    }

    fn result(&self, trace: Vec<TraceRow>, level_selections: Vec<Vec<f64>>, stability: Option<StabilityReport>) -> SolveResult {
        SolveResult {
            poses: self.poses.clone(),
            pair_selections: self.pairs.iter().map(|p| p.selection).collect(),
            keypoint_selections: self.keypoints.iter().map(|k| k.selection).collect(),
            trace,
            level_selections,
            stability,
        }
    }

    /// Full continuation solve: μ starts at `mu_init` and is multiplied by
    /// `mu_decay` after each level until it drops below `mu_floor`.
    pub fn solve(&mut self) -> Result<SolveResult> {
        self.mode = Mode::Mixed;
        self.mu = self.options.mu_init;
        let mut trace = Vec::new();
        let mut levels = Vec::new();
        let mut outer = 0;
        while self.mu >= self.options.mu_floor && outer < self.options.max_outer {
            self.solve_level(outer, &mut trace)?;
            levels.push(self.pairs.iter().map(|p| p.selection).collect());
            self.mu *= self.options.mu_decay;
            outer += 1;
        }
        Ok(self.result(trace, levels, None))
    }

    /// Translational stability of every node from the selected pairs.
    pub fn estimate_stability(&self) -> StabilityReport {
        let n = self.poses.len();
        let mut rows: Vec<Vec<(Vector3<f64>, Vector3<f64>)>> = vec![Vec::new(); n];
        for pair in self.pairs.iter().filter(|p| p.selection > 0.5) {
            for (own, other) in [(pair.p, pair.q), (pair.q, pair.p)] {
                let pose = &self.poses[own.frame];
                let normal = self.poses[other.frame].transform_vector(&self.terms[other.frame][other.patch].normal);
                for v in &self.patches[own.frame][own.patch].samples {
                    rows[own.frame].push((pose.transform_vector(v), normal));
                }
            }
        }
        let gamma = rows
            .iter()
            .map(|r| translational_gammas(&stability_matrix(r.iter().map(|(v, n)| (v, n)))))
            .collect();
        let mu = match &self.mode {
            Mode::CoplanarityOnly { mu_axis, .. } => mu_axis.clone(),
            Mode::Mixed => vec![[self.mu; 3]; n],
        };
        StabilityReport { gamma, mu }
    }

    /// Coplanarity-only solve with frame regularization and per-axis μ.
    ///
    /// After each level, `μ_i^d` is halved where `γ_i^d > γ_t`, never below
    /// `mu_floor`. Stops when every γ is below `γ_t`, when no μ can change
    /// any more, or after `max_outer` levels.
    pub fn solve_coplanarity_only(&mut self) -> Result<SolveResult> {
        self.enter_coplanarity_only();
        let mut trace = Vec::new();
        let mut levels = Vec::new();
        let mut report = None;
        for outer in 0..self.options.max_outer {
            self.refresh_pair_mu();
            self.mu = (0..self.pairs.len()).map(|k| self.pair_mu(k)).fold(f64::NAN, f64::max);
            if self.mu.is_nan() {
                self.mu = self.options.mu_axis_init;
            }
            self.solve_level(outer, &mut trace)?;
            levels.push(self.pairs.iter().map(|p| p.selection).collect());
            let r = self.estimate_stability();
            let stop = r.max_gamma() < self.options.gamma_t;
            report = Some(r);
            if stop {
                break;
            }
            let (gamma_t, decay, floor) = (self.options.gamma_t, self.options.mu_decay, self.options.mu_floor);
            let gammas = &report.as_ref().map(|r| r.gamma.clone()).unwrap_or_default();
            let mut changed = false;
            if let Mode::CoplanarityOnly { mu_axis, .. } = &mut self.mode {
                for (mu_i, gamma_i) in mu_axis.iter_mut().zip(gammas) {
                    for d in 0..3 {
                        if gamma_i[d] > gamma_t && mu_i[d] * decay >= floor {
                            mu_i[d] *= decay;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if let (Some(r), Some(mu_axis)) = (report.as_mut(), self.mu_axis()) {
            r.mu = mu_axis.to_vec();
        }
        Ok(self.result(trace, levels, report))
    }
}

fn pose_is_finite(t: &RigidTransform) -> bool {
    t.matrix().iter().chain(t.translation.iter()).all(|x| x.is_finite())
}

fn accumulate<const M: usize>(h: &mut DMatrix<f64>, g: &mut DVector<f64>, b: &Block<M>) {
    let slot = |node: usize| (node > 0).then(|| 6 * (node - 1));
    let w = b.weight;
    let (oi, oj) = (slot(b.i), slot(b.j));
    if let Some(oi) = oi {
        let mut hv = h.view_mut((oi, oi), (6, 6));
        hv += b.ji.transpose() * b.ji * w;
        let mut gv = g.rows_mut(oi, 6);
        gv += b.ji.transpose() * b.r * w;
    }
    if let Some(oj) = oj {
        let mut hv = h.view_mut((oj, oj), (6, 6));
        hv += b.jj.transpose() * b.jj * w;
        let mut gv = g.rows_mut(oj, 6);
        gv += b.jj.transpose() * b.r * w;
    }
    if let (Some(oi), Some(oj)) = (oi, oj) {
        let cross = b.ji.transpose() * b.jj * w;
        let mut hv = h.view_mut((oi, oj), (6, 6));
        hv += cross;
        let mut hv = h.view_mut((oj, oi), (6, 6));
        hv += cross.transpose();
    }
}
