//! PCA surface normals from local neighbourhoods.
//!
//! For each point the covariance of its k nearest neighbours is assembled,
//! and the eigenvector of the smallest eigenvalue is taken as the (still
//! unoriented) normal. Neighbourhoods whose two smallest eigenvalues tie
//! are rank-deficient in more than one direction (collinear or otherwise
//! degenerate) and are flagged invalid.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};

use super::kdtree::KdTree;
use super::PointCloud;

/// Relative eigenvalue tie threshold for degeneracy detection.
const EIGEN_TIE_REL: f64 = 1e-12;

/// Covariance of a neighbourhood and its eigen-decomposition, eigenvalues
/// ascending. Returns `(eigenvalues, eigenvectors)`.
pub(crate) fn neighborhood_pca(points: &[Vector3<f64>]) -> ([f64; 3], [Vector3<f64>; 3]) {
    let k = points.len() as f64;
    let mut centroid = Vector3::zeros();
    for p in points {
        centroid += p;
    }
    centroid /= k;
    let mut c = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        c += d * d.transpose();
    }
    c /= k;
    let eig = nalgebra::SymmetricEigen::new(c);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = [
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    ];
    let vecs = [
        eig.eigenvectors.column(order[0]).into_owned(),
        eig.eigenvectors.column(order[1]).into_owned(),
        eig.eigenvectors.column(order[2]).into_owned(),
    ];
    (vals, vecs)
}

/// Estimates per-point normals over the k-nearest neighbourhood of each
/// point (the point itself included). Degenerate neighbourhoods are marked
/// invalid; their normal is left as zero.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    if k < 3 {
        return Err(Error::InvalidParameter("estimate_normals: k must be >= 3".into()));
    }
    if cloud.len() < k {
        return Err(Error::InvalidParameter(format!(
            "estimate_normals: cloud has {} points, k = {k}",
            cloud.len()
        )));
    }
    let tree = KdTree::build(&cloud.points);
    let results: Vec<(Vector3<f64>, bool)> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let nn = tree.knn(cloud.points[i], k);
            let neigh: Vec<Vector3<f64>> = nn.iter().map(|&j| cloud.points[j]).collect();
            let (vals, vecs) = neighborhood_pca(&neigh);
            let scale = vals[2].max(f64::MIN_POSITIVE);
            if vals[2] <= 0.0 || (vals[1] - vals[0]) <= EIGEN_TIE_REL * scale {
                (Vector3::zeros(), false)
            } else {
                (vecs[0].normalize(), true)
            }
        })
        .collect();

    let mut out = cloud.clone();
    let mut normals = Vec::with_capacity(cloud.len());
    for (i, (n, ok)) in results.into_iter().enumerate() {
        normals.push(n);
        out.valid[i] = out.valid[i] && ok;
    }
    out.normals = Some(normals);
    Ok(out)
}

/// Orients normals radially outward with respect to a reference axis: per
/// point, the centroid of cloud points within an axial slab of +-3 mm is
/// taken, and the normal is flipped when it opposes the perpendicular
/// component of (point - centroid). Slabs with fewer than 4 points fall
/// back to the global centroid.
pub fn orient_normals(cloud: &PointCloud, reference_axis: Vector3<f64>) -> Result<PointCloud> {
    let normals = cloud
        .normals
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("orient_normals: cloud has no normals".into()))?;
    let axis = reference_axis.normalize();
    let slab_half_width = 3.0;

    let axial: Vec<f64> = cloud.points.iter().map(|p| p.dot(&axis)).collect();
    let global_centroid = cloud.points.iter().sum::<Vector3<f64>>() / cloud.len() as f64;

    let mut out = cloud.clone();
    let oriented: Vec<Vector3<f64>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let mut centroid = Vector3::zeros();
            let mut count = 0usize;
            for (j, p) in cloud.points.iter().enumerate() {
                if (axial[j] - axial[i]).abs() <= slab_half_width {
                    centroid += p;
                    count += 1;
                }
            }
            let centroid = if count >= 4 {
                centroid / count as f64
            } else {
                global_centroid
            };
            let rel = cloud.points[i] - centroid;
            let radial = rel - rel.dot(&axis) * axis;
            let n = normals[i];
            if radial.norm() > 1e-12 && n.dot(&radial) < 0.0 {
                -n
            } else {
                n
            }
        })
        .collect();
    out.normals = Some(oriented);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn plane_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vector3<f64>> = (0..n)
            .map(|_| Vector3::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), 0.0))
            .collect();
        PointCloud::from_points(pts)
    }

    pub(crate) fn cylinder_cloud(radius: f64, height: f64, n_theta: usize, n_z: usize) -> PointCloud {
        let mut pts = Vec::new();
        for iz in 0..n_z {
            let z = height * iz as f64 / (n_z - 1) as f64;
            for it in 0..n_theta {
                let t = 2.0 * std::f64::consts::PI * it as f64 / n_theta as f64;
                pts.push(Vector3::new(radius * t.cos(), radius * t.sin(), z));
            }
        }
        PointCloud::from_points(pts)
    }

    #[test]
    fn plane_normals_are_z_axis() {
        let cloud = plane_cloud(300, 1);
        let out = estimate_normals(&cloud, 12).unwrap();
        let normals = out.normals.as_ref().unwrap();
        for (i, n) in normals.iter().enumerate() {
            assert!(out.valid[i]);
            let aligned = n.dot(&Vector3::z()).abs();
            assert!(
                (1.0 - aligned) <= 2e-7,
                "normal {n:?} deviates from +-z by {}",
                (1.0 - aligned)
            );
        }
    }

    #[test]
    fn cylinder_normals_are_radial() {
        let cloud = cylinder_cloud(25.0, 40.0, 160, 40);
        let out = estimate_normals(&cloud, 20).unwrap();
        let normals = out.normals.as_ref().unwrap();
        for (p, n) in out.points.iter().zip(normals) {
            let radial = Vector3::new(p[0], p[1], 0.0).normalize();
            let angle = n.dot(&radial).abs().clamp(-1.0, 1.0).acos().to_degrees();
            assert!(angle <= 2.0, "normal off-radial by {angle} deg");
        }
    }

    #[test]
    fn collinear_neighborhood_flagged_invalid() {
        let pts: Vec<Vector3<f64>> = (0..10).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let cloud = PointCloud::from_points(pts);
        let out = estimate_normals(&cloud, 5).unwrap();
        assert!(out.valid.iter().all(|v| !v));
    }

    #[test]
    fn rotation_equivariance() {
        use nalgebra::Rotation3;
        let cloud = cylinder_cloud(10.0, 20.0, 60, 15);
        let base = estimate_normals(&cloud, 12).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..5 {
            let axis = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .normalize();
            let rot = Rotation3::from_axis_angle(
                &nalgebra::Unit::new_normalize(axis),
                rng.gen_range(0.1..3.0),
            );
            let rotated = PointCloud::from_points(cloud.points.iter().map(|p| rot * p).collect());
            let out = estimate_normals(&rotated, 12).unwrap();
            for (n0, n1) in base
                .normals
                .as_ref()
                .unwrap()
                .iter()
                .zip(out.normals.as_ref().unwrap())
            {
                let expected = rot * n0;
                let diff = (n1 - expected).norm().min((n1 + expected).norm());
                assert!(diff <= 1e-6, "rotated normal differs by {diff}");
            }
        }
    }

    #[test]
    fn orientation_points_outward_on_cylinder() {
        let cloud = cylinder_cloud(25.0, 40.0, 120, 30);
        let with_normals = estimate_normals(&cloud, 20).unwrap();
        let oriented = orient_normals(&with_normals, Vector3::z()).unwrap();
        for (p, n) in oriented.points.iter().zip(oriented.normals.as_ref().unwrap()) {
            let radial = Vector3::new(p[0], p[1], 0.0);
            assert!(n.dot(&radial) > 0.0, "normal not outward at {p:?}");
        }
        // Idempotence: orienting again changes nothing.
        let again = orient_normals(&oriented, Vector3::z()).unwrap();
        for (a, b) in oriented
            .normals
            .as_ref()
            .unwrap()
            .iter()
            .zip(again.normals.as_ref().unwrap())
        {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn orientation_outward_on_sphere() {
        let mut pts = Vec::new();
        let r = 15.0;
        for iu in 1..30 {
            let phi = std::f64::consts::PI * iu as f64 / 30.0;
            for iv in 0..40 {
                let theta = 2.0 * std::f64::consts::PI * iv as f64 / 40.0;
                pts.push(Vector3::new(
                    r * phi.sin() * theta.cos(),
                    r * phi.sin() * theta.sin(),
                    r * phi.cos(),
                ));
            }
        }
        let cloud = PointCloud::from_points(pts);
        let with_normals = estimate_normals(&cloud, 16).unwrap();
        let oriented = orient_normals(&with_normals, Vector3::z()).unwrap();
        for (p, n) in oriented.points.iter().zip(oriented.normals.as_ref().unwrap()) {
            // Away from the poles the slab centroid sits on the axis, so
            // outward means along the lateral radial direction.
            let lateral = Vector3::new(p[0], p[1], 0.0);
            if lateral.norm() > 3.0 {
                assert!(n.dot(&lateral) > 0.0, "normal not outward at {p:?}");
            }
        }
    }
}
