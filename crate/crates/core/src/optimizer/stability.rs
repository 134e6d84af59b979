use nalgebra::{Matrix6, SymmetricEigen, Vector3, Vector6};

/// `C = Σ h hᵀ` over constraint rows `h = [(v × n)ᵀ, nᵀ]`.
pub fn stability_matrix<'a>(rows: impl IntoIterator<Item = (&'a Vector3<f64>, &'a Vector3<f64>)>) -> Matrix6<f64> {
    let mut c = Matrix6::zeros();
    for (v, n) in rows {
        let vn = v.cross(n);
        let h = Vector6::new(vn.x, vn.y, vn.z, n.x, n.y, n.z);
        c += h * h.transpose();
    }
    c
}

/// Translational stability per axis: for axis `d`, the eigenvalue whose
/// eigenvector has the largest translational component along `d`.
pub fn translational_gammas(c: &Matrix6<f64>) -> [f64; 3] {
    if c.iter().all(|x| *x == 0.0) {
        return [0.0; 3];
    }
    let eig = SymmetricEigen::new(*c);
    let mut out = [0.0; 3];
    for (d, gamma) in out.iter_mut().enumerate() {
        let k = (0..6)
            .max_by(|&a, &b| {
                eig.eigenvectors[(3 + d, a)]
                    .abs()
                    .total_cmp(&eig.eigenvectors[(3 + d, b)].abs())
            })
            .unwrap_or(0);
        *gamma = eig.eigenvalues[k].max(0.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count_small(c: &Matrix6<f64>) -> usize {
        let eig = SymmetricEigen::new(*c);
        let tr = c.trace();
        eig.eigenvalues.iter().filter(|l| **l < 1e-9 * tr).count()
    }

    #[test]
    fn single_plane_has_three_free_directions() {
        let n = Vector3::z();
        let pts: Vec<_> = (0..25)
            .map(|k| Vector3::new((k % 5) as f64 * 0.2 - 0.4, (k / 5) as f64 * 0.2 - 0.4, 0.0))
            .collect();
        let c = stability_matrix(pts.iter().map(|v| (v, &n)));
        // analytic rows (y, −x, 0, 0, 0, 1)
        let mut oracle = Matrix6::zeros();
        for v in &pts {
            let h = Vector6::new(v.y, -v.x, 0.0, 0.0, 0.0, 1.0);
            oracle += h * h.transpose();
        }
        assert!((c - oracle).abs().max() < 1e-12);
        assert_eq!(count_small(&c), 3);
        let g = translational_gammas(&c);
        assert!(g[0] < 1e-9 && g[1] < 1e-9 && g[2] > 1.0);
    }

    #[test]
    fn orthogonal_planes_are_fully_constrained() {
        let mut rows = Vec::new();
        let normals = [Vector3::x(), Vector3::y(), Vector3::z()];
        for (k, n) in normals.iter().enumerate() {
            for a in 0..4 {
                for b in 0..4 {
                    let mut v = Vector3::zeros();
                    v[k] = 1.0;
                    v[(k + 1) % 3] = a as f64 * 0.3 - 0.45;
                    v[(k + 2) % 3] = b as f64 * 0.3 - 0.45;
                    rows.push((v, *n));
                }
            }
        }
        let c = stability_matrix(rows.iter().map(|(v, n)| (v, n)));
        assert_eq!(count_small(&c), 0);
        assert!(translational_gammas(&c).iter().all(|g| *g > 1.0));
        assert_eq!(translational_gammas(&Matrix6::zeros()), [0.0; 3]);
    }
}
