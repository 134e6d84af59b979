//! Residuals and exact Jacobians for the pose step.
//!
//! Twists are left increments `(ω, τ)`: `R ← Exp(ω) R`, `t ← Exp(ω) t + τ`.

use nalgebra::{Matrix3, Matrix4, SMatrix, SVector, SymmetricEigen, Vector3, Vector4};

use crate::geometry::{PlanePatch, RigidTransform};

pub type Vec8 = SVector<f64, 8>;
pub type Mat8x6 = SMatrix<f64, 8, 6>;
pub type Mat3x6 = SMatrix<f64, 3, 6>;
type Mat4x6 = SMatrix<f64, 4, 6>;

pub(crate) fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Square-root factor `F` of the sample moments `S = (1/n) Σ [v;1][v;1]ᵀ`, so
/// that the mean of `(a·v + b)²` over the samples equals `‖F [a; b]‖²`.
///
/// `S` is singular for planar samples, hence the eigendecomposition.
pub fn moment_factor(samples: &[Vector3<f64>]) -> Matrix4<f64> {
    let mut s = Matrix4::zeros();
    for v in samples {
        let h = Vector4::new(v.x, v.y, v.z, 1.0);
        s += h * h.transpose();
    }
    s /= samples.len().max(1) as f64;
    let eig = SymmetricEigen::new(s);
    let mut f = eig.eigenvectors.transpose();
    for (k, lambda) in eig.eigenvalues.iter().enumerate() {
        let scale = lambda.max(0.0).sqrt();
        f.row_mut(k).scale_mut(scale);
    }
    f
}

/// Patch data needed by the coplanar residual.
#[derive(Debug, Clone)]
pub struct PatchTerm {
    pub factor: Matrix4<f64>,
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
}

impl PatchTerm {
    pub fn new(patch: &PlanePatch) -> Self {
        Self {
            factor: moment_factor(&patch.samples),
            point: patch.plane.point,
            normal: patch.plane.normal.into_inner(),
        }
    }
}

/// Samples of `p` (posed by `ti`) against the plane of `q` (posed by `tj`):
/// residual `F_p [a; b]` with `a = R_iᵀ N`, `b = (t_i − P)·N`.
fn directed(p: &PatchTerm, q: &PatchTerm, ti: &RigidTransform, tj: &RigidTransform) -> (Vector4<f64>, Mat4x6, Mat4x6) {
    let ri_t = ti.rotation.matrix().transpose();
    let n = tj.rotation * q.normal;
    let point = tj.transform_point(&q.point);
    let a = ri_t * n;
    let b = (ti.translation - point).dot(&n);
    let r = p.factor * Vector4::new(a.x, a.y, a.z, b);

    let da = ri_t * skew(&n);
    let mut gi = Mat4x6::zeros();
    gi.fixed_view_mut::<3, 3>(0, 0).copy_from(&da);
    gi.fixed_view_mut::<1, 3>(3, 0).copy_from(&ti.translation.cross(&n).transpose());
    gi.fixed_view_mut::<1, 3>(3, 3).copy_from(&n.transpose());
    let mut gj = Mat4x6::zeros();
    gj.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-da));
    gj.fixed_view_mut::<1, 3>(3, 0).copy_from(&n.cross(&ti.translation).transpose());
    gj.fixed_view_mut::<1, 3>(3, 3).copy_from(&(-n.transpose()));
    (r, p.factor * gi, p.factor * gj)
}

/// Coplanar residual of a pair with `‖r‖² = δ²`, and its Jacobians with
/// respect to the twists of frame `i` (owning `p`) and frame `j` (owning `q`).
pub fn coplanar_residual(
    p: &PatchTerm,
    q: &PatchTerm,
    ti: &RigidTransform,
    tj: &RigidTransform,
) -> (Vec8, Mat8x6, Mat8x6) {
    let (r1, a_i, a_j) = directed(p, q, ti, tj);
    let (r2, b_j, b_i) = directed(q, p, tj, ti);
    let mut r = Vec8::zeros();
    r.fixed_rows_mut::<4>(0).copy_from(&r1);
    r.fixed_rows_mut::<4>(4).copy_from(&r2);
    let mut ji = Mat8x6::zeros();
    ji.fixed_rows_mut::<4>(0).copy_from(&a_i);
    ji.fixed_rows_mut::<4>(4).copy_from(&b_i);
    let mut jj = Mat8x6::zeros();
    jj.fixed_rows_mut::<4>(0).copy_from(&a_j);
    jj.fixed_rows_mut::<4>(4).copy_from(&b_j);
    (r, ji, jj)
}

/// Point residual `T_i u − T_j v` and its Jacobians.
pub fn point_residual(
    u: &Vector3<f64>,
    v: &Vector3<f64>,
    ti: &RigidTransform,
    tj: &RigidTransform,
) -> (Vector3<f64>, Mat3x6, Mat3x6) {
    let gu = ti.transform_point(u);
    let gv = tj.transform_point(v);
    let mut ji = Mat3x6::zeros();
    ji.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew(&gu)));
    ji.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    let mut jj = Mat3x6::zeros();
    jj.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&gv));
    jj.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-Matrix3::identity()));
    (gu - gv, ji, jj)
}
