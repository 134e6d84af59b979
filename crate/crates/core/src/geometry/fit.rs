use nalgebra::{Matrix3, Rotation3, SymmetricEigen, Vector3};

use super::{Plane, RigidTransform};

/// First and second moments of a point set; enough to refit a plane after
/// merging two sets without revisiting the points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMoments {
    pub count: usize,
    pub sum: Vector3<f64>,
    pub sum_outer: Matrix3<f64>,
}

impl Default for PointMoments {
    fn default() -> Self {
        Self {
            count: 0,
            sum: Vector3::zeros(),
            sum_outer: Matrix3::zeros(),
        }
    }
}

impl PointMoments {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vector3<f64>>) -> Self {
        let mut m = Self::default();
        for p in points {
            m.push(p);
        }
        m
    }

    pub fn push(&mut self, p: &Vector3<f64>) {
        self.count += 1;
        self.sum += p;
        self.sum_outer += p * p.transpose();
    }

    pub fn merged(&self, other: &Self) -> Self {
        Self {
            count: self.count + other.count,
            sum: self.sum + other.sum,
            sum_outer: self.sum_outer + other.sum_outer,
        }
    }

    pub fn mean(&self) -> Vector3<f64> {
        self.sum / self.count as f64
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        let n = self.count as f64;
        let mean = self.mean();
        self.sum_outer / n - mean * mean.transpose()
    }

    /// Least-squares plane and its RMS point-to-plane residual.
    pub fn fit_plane(&self) -> Option<(Plane, f64)> {
        if self.count < 3 {
            return None;
        }
        let eig = SymmetricEigen::new(self.covariance());
        let (k, &lambda) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))?;
        let normal = eig.eigenvectors.column(k).into_owned();
        if !normal.iter().all(|v| v.is_finite()) {
            return None;
        }
        Some((Plane::new(self.mean(), normal), lambda.max(0.0).sqrt()))
    }
}

/// Plane fit with the normal oriented toward the origin (the camera center).
pub fn fit_plane(points: &[Vector3<f64>]) -> Option<(Plane, f64)> {
    let (mut plane, rms) = PointMoments::from_points(points).fit_plane()?;
    if plane.normal.dot(&plane.point) > 0.0 {
        plane.normal = -plane.normal;
    }
    Some((plane, rms))
}

/// Greedy farthest-point subsampling starting from the first point.
/// Returns indices into `points`; deterministic for a given input order.
pub fn farthest_point_sampling(points: &[Vector3<f64>], k: usize) -> Vec<usize> {
    if points.is_empty() || k == 0 {
        return Vec::new();
    }
    if k >= points.len() {
        return (0..points.len()).collect();
    }
    let mut chosen = Vec::with_capacity(k);
    let mut dist = vec![f64::INFINITY; points.len()];
    let mut current = 0;
    for _ in 0..k {
        chosen.push(current);
        let c = points[current];
        let mut best = (0, -1.0);
        for (i, p) in points.iter().enumerate() {
            let d = (p - c).norm_squared();
            if d < dist[i] {
                dist[i] = d;
            }
            if dist[i] > best.1 {
                best = (i, dist[i]);
            }
        }
        current = best.0;
    }
    chosen
}

/// Rotation `R` minimizing `Σ w‖R a − b‖²` over vector pairs `(a, b)`.
/// `None` when the pairs span fewer than two independent directions.
pub fn procrustes_rotation(pairs: &[(Vector3<f64>, Vector3<f64>, f64)]) -> Option<Rotation3<f64>> {
    let mut h = Matrix3::zeros();
    for (a, b, w) in pairs {
        h += *w * b * a.transpose();
    }
    let svd = h.svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[0] <= 0.0 || sv[1] <= 1e-9 * sv[0].max(1.0) {
        return None;
    }
    let u = svd.u?;
    let v_t = svd.v_t?;
    // nalgebra sorts singular values descending, so the flip hits the smallest
    let d = (u * v_t).determinant().signum();
    let r = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t;
    Some(Rotation3::from_matrix_unchecked(r))
}

/// Least-squares rigid transform mapping `src[k]` onto `dst[k]`.
pub fn rigid_fit(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Option<RigidTransform> {
    if src.len() != dst.len() || src.len() < 3 {
        return None;
    }
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vector3<f64>>() / n;
    let cd = dst.iter().sum::<Vector3<f64>>() / n;
    let pairs: Vec<_> = src
        .iter()
        .zip(dst)
        .map(|(a, b)| (a - cs, b - cd, 1.0))
        .collect();
    let r = procrustes_rotation(&pairs)?;
    Some(RigidTransform::new(r, cd - r * cs))
}
