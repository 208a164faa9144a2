//! Orientation-constrained MSAC cylinder fitting and the per-point radius
//! of curvature field.
//!
//! Hypotheses come from two points plus their normals when normals are
//! available (the normal lines of a cylinder meet at its axis), otherwise
//! from a five-point algebraic circle fit projected onto the constraint
//! cone. Hypotheses are scored with the MSAC loss
//! `sum_i min(dist_i^2, threshold^2)` where `dist` is the distance to the
//! cylinder surface, and the best one is refined by alternating a
//! least-squares circle fit in the plane perpendicular to the axis with an
//! axis re-estimation from the inlier normals, the axis clamped to the
//! constraint cone throughout.

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::kdtree::KdTree;
use super::PointCloud;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvatureParams {
    /// Neighbourhood size for the local fits.
    pub k_neighbors: usize,
    /// MSAC inlier threshold on the surface distance, mm.
    pub inlier_threshold_mm: f64,
    /// Hypothesis budget per fit.
    pub max_iterations: usize,
    /// Cone half-angle around the reference axis, degrees.
    pub axis_cone_deg: f64,
    /// Reference orientation for the fitted cylinder axis.
    pub reference_axis: [f64; 3],
    /// Plausible radius bounds; fits outside are marked failed.
    pub r_min_mm: f64,
    pub r_max_mm: f64,
    pub rng_seed: u64,
}

impl Default for CurvatureParams {
    fn default() -> Self {
        Self {
            k_neighbors: 60,
            inlier_threshold_mm: 0.5,
            max_iterations: 500,
            axis_cone_deg: 30.0,
            reference_axis: [0.0, 0.0, 1.0],
            r_min_mm: 5.0,
            r_max_mm: 100.0,
            rng_seed: 0,
        }
    }
}

impl CurvatureParams {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors < 6 {
            return Err(Error::Config("surface.k_neighbors must be >= 6".into()));
        }
        if !(self.inlier_threshold_mm > 0.0) {
            return Err(Error::Config("surface.inlier_threshold_mm must be > 0".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("surface.max_iterations must be >= 1".into()));
        }
        if !(self.axis_cone_deg > 0.0 && self.axis_cone_deg <= 90.0) {
            return Err(Error::Config("surface.axis_cone_deg must be in (0, 90]".into()));
        }
        let axis = Vector3::from(self.reference_axis);
        if axis.norm() < 1e-12 {
            return Err(Error::Config("surface.reference_axis must be non-zero".into()));
        }
        if !(self.r_min_mm > 0.0 && self.r_max_mm > self.r_min_mm) {
            return Err(Error::Config("surface.r_min_mm/r_max_mm must satisfy 0 < r_min < r_max".into()));
        }
        Ok(())
    }

    fn axis(&self) -> Vector3<f64> {
        Vector3::from(self.reference_axis).normalize()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CylinderFit {
    pub axis_point: Vector3<f64>,
    pub axis_dir: Vector3<f64>,
    pub radius: f64,
    pub inlier_count: usize,
    pub msac_score: f64,
}

fn dist_to_surface(p: &Vector3<f64>, axis_point: &Vector3<f64>, axis_dir: &Vector3<f64>, radius: f64) -> f64 {
    let rel = p - axis_point;
    let lateral = rel - rel.dot(axis_dir) * axis_dir;
    (lateral.norm() - radius).abs()
}

fn msac_score(points: &[Vector3<f64>], c: &CylinderFit, thr: f64) -> (f64, usize) {
    let thr2 = thr * thr;
    let mut score = 0.0;
    let mut inliers = 0usize;
    for p in points {
        let d = dist_to_surface(p, &c.axis_point, &c.axis_dir, c.radius);
        let d2 = d * d;
        if d2 < thr2 {
            score += d2;
            inliers += 1;
        } else {
            score += thr2;
        }
    }
    (score, inliers)
}

/// Orthonormal basis of the plane perpendicular to a unit axis.
fn plane_basis(axis: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if axis[0].abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = helper.cross(axis).normalize();
    let e2 = axis.cross(&e1);
    (e1, e2)
}

/// Least-squares (Kasa) circle fit of 2D points; `None` for degenerate
/// configurations or non-positive squared radius.
fn circle_fit(points2d: &[Vector2<f64>]) -> Option<(Vector2<f64>, f64)> {
    let n = points2d.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut st, mut stx, mut sty) = (0.0, 0.0, 0.0);
    for p in points2d {
        let t = p.x * p.x + p.y * p.y;
        sx += p.x;
        sy += p.y;
        sxx += p.x * p.x;
        sxy += p.x * p.y;
        syy += p.y * p.y;
        st += t;
        stx += t * p.x;
        sty += t * p.y;
    }
    // Normal equations for [2a, 2b, c] with rows [x, y, 1] and target t.
    let m = Matrix3::new(sxx, sxy, sx, sxy, syy, sy, sx, sy, n);
    let rhs = Vector3::new(stx, sty, st);
    let sol = m.lu().solve(&rhs)?;
    let a = sol[0] / 2.0;
    let b = sol[1] / 2.0;
    let r2 = sol[2] + a * a + b * b;
    if !(r2 > 0.0) || !r2.is_finite() {
        return None;
    }
    Some((Vector2::new(a, b), r2.sqrt()))
}

/// Pulls a unit axis inside the cone around `reference` (both unit), after
/// flipping it into the reference hemisphere.
fn clamp_to_cone(axis: Vector3<f64>, reference: &Vector3<f64>, cos_cone: f64) -> Vector3<f64> {
    let mut a = axis;
    if a.dot(reference) < 0.0 {
        a = -a;
    }
    let dot = a.dot(reference);
    if dot >= cos_cone {
        return a;
    }
    let perp = a - dot * reference;
    let pn = perp.norm();
    if pn < 1e-12 {
        return *reference;
    }
    let sin_cone = (1.0 - cos_cone * cos_cone).sqrt();
    (cos_cone * reference + sin_cone * (perp / pn)).normalize()
}

fn sample_distinct<const N: usize>(rng: &mut impl Rng, len: usize) -> [usize; N] {
    let mut out = [0usize; N];
    let mut filled = 0usize;
    while filled < N {
        let cand = rng.gen_range(0..len);
        if out[..filled].contains(&cand) {
            continue;
        }
        out[filled] = cand;
        filled += 1;
    }
    out
}

fn two_point_hypothesis(
    points: &[Vector3<f64>],
    normals: &[Vector3<f64>],
    rng: &mut impl Rng,
    reference: &Vector3<f64>,
    cos_cone: f64,
) -> Option<CylinderFit> {
    let [i, j] = sample_distinct::<2>(rng, points.len());
    let (p1, n1) = (points[i], normals[i]);
    let (p2, n2) = (points[j], normals[j]);
    let cross = n1.cross(&n2);
    if cross.norm() < 1e-8 {
        return None;
    }
    let mut dir = cross.normalize();
    if dir.dot(reference) < 0.0 {
        dir = -dir;
    }
    if dir.dot(reference) < cos_cone {
        return None;
    }
    let (e1, e2) = plane_basis(&dir);
    let q1 = Vector2::new(p1.dot(&e1), p1.dot(&e2));
    let q2 = Vector2::new(p2.dot(&e1), p2.dot(&e2));
    let m1 = Vector2::new(n1.dot(&e1), n1.dot(&e2));
    let m2 = Vector2::new(n2.dot(&e1), n2.dot(&e2));
    // Axis center: intersection of the two projected normal lines.
    let det = m1.x * (-m2.y) - (-m2.x) * m1.y;
    if det.abs() < 1e-12 {
        return None;
    }
    let rhs = q2 - q1;
    let t = (rhs.x * (-m2.y) - (-m2.x) * rhs.y) / det;
    let center = q1 + t * m1;
    let r = 0.5 * ((center - q1).norm() + (center - q2).norm());
    if !(r.is_finite() && r > 0.0) {
        return None;
    }
    Some(CylinderFit {
        axis_point: center.x * e1 + center.y * e2,
        axis_dir: dir,
        radius: r,
        inlier_count: 0,
        msac_score: f64::INFINITY,
    })
}

fn five_point_hypothesis(
    points: &[Vector3<f64>],
    rng: &mut impl Rng,
    reference: &Vector3<f64>,
) -> Option<CylinderFit> {
    let idx = sample_distinct::<5>(rng, points.len());
    let (e1, e2) = plane_basis(reference);
    let proj: Vec<Vector2<f64>> = idx
        .iter()
        .map(|&i| Vector2::new(points[i].dot(&e1), points[i].dot(&e2)))
        .collect();
    let (center, r) = circle_fit(&proj)?;
    Some(CylinderFit {
        axis_point: center.x * e1 + center.y * e2,
        axis_dir: *reference,
        radius: r,
        inlier_count: 0,
        msac_score: f64::INFINITY,
    })
}

fn adaptive_iteration_cap(inliers: usize, total: usize, sample_size: u32, cap: usize) -> usize {
    let w = inliers as f64 / total as f64;
    let p_all = w.powi(sample_size as i32);
    if p_all >= 1.0 - 1e-12 {
        return 1;
    }
    if p_all <= 0.0 {
        return cap;
    }
    let needed = (0.01f64.ln() / (1.0 - p_all).ln()).ceil();
    (needed as usize).clamp(1, cap)
}

fn fit_cylinder_msac_rng(
    points: &[Vector3<f64>],
    normals: Option<&[Vector3<f64>]>,
    params: &CurvatureParams,
    rng: &mut impl Rng,
) -> Result<Option<CylinderFit>> {
    if points.len() < 6 {
        return Err(Error::InvalidParameter(format!(
            "fit_cylinder_msac needs at least 6 points, got {}",
            points.len()
        )));
    }
    if let Some(ns) = normals {
        if ns.len() != points.len() {
            return Err(Error::InvalidParameter(
                "fit_cylinder_msac: normals length must match points".into(),
            ));
        }
    }
    let reference = params.axis();
    let cos_cone = params.axis_cone_deg.to_radians().cos();
    let thr = params.inlier_threshold_mm;
    let sample_size: u32 = if normals.is_some() { 2 } else { 5 };

    let mut best: Option<CylinderFit> = None;
    let mut cap = params.max_iterations;
    let mut iter = 0usize;
    while iter < cap {
        iter += 1;
        let hyp = match normals {
            Some(ns) => two_point_hypothesis(points, ns, rng, &reference, cos_cone),
            None => five_point_hypothesis(points, rng, &reference),
        };
        let Some(mut cyl) = hyp else { continue };
        let (score, inliers) = msac_score(points, &cyl, thr);
        cyl.msac_score = score;
        cyl.inlier_count = inliers;
        if best.as_ref().map(|b| score < b.msac_score).unwrap_or(true) {
            best = Some(cyl);
            cap = cap.min(adaptive_iteration_cap(inliers, points.len(), sample_size, params.max_iterations));
        }
    }
    let Some(mut cyl) = best else {
        return Ok(None);
    };

    // Refine: alternate a projected circle fit with an axis re-estimate
    // from the inlier normals (the axis is perpendicular to all surface
    // normals), clamped to the constraint cone.
    for _ in 0..3 {
        let thr2 = thr * thr;
        let inliers: Vec<usize> = (0..points.len())
            .filter(|&i| {
                let d = dist_to_surface(&points[i], &cyl.axis_point, &cyl.axis_dir, cyl.radius);
                d * d < thr2
            })
            .collect();
        if inliers.len() < 6 {
            break;
        }
        let (e1, e2) = plane_basis(&cyl.axis_dir);
        let proj: Vec<Vector2<f64>> = inliers
            .iter()
            .map(|&i| Vector2::new(points[i].dot(&e1), points[i].dot(&e2)))
            .collect();
        if let Some((center, r)) = circle_fit(&proj) {
            let axial: f64 =
                inliers.iter().map(|&i| points[i].dot(&cyl.axis_dir)).sum::<f64>() / inliers.len() as f64;
            cyl.axis_point = center.x * e1 + center.y * e2 + axial * cyl.axis_dir;
            cyl.radius = r;
        } else {
            break;
        }
        if let Some(ns) = normals {
            let mut accum = Matrix3::zeros();
            for &i in &inliers {
                accum += ns[i] * ns[i].transpose();
            }
            let eig = nalgebra::SymmetricEigen::new(accum);
            let mut min_idx = 0usize;
            for c in 1..3 {
                if eig.eigenvalues[c] < eig.eigenvalues[min_idx] {
                    min_idx = c;
                }
            }
            let axis = eig.eigenvectors.column(min_idx).into_owned();
            if axis.norm() > 1e-12 {
                cyl.axis_dir = clamp_to_cone(axis.normalize(), &reference, cos_cone);
            }
        }
    }

    let (score, inliers) = msac_score(points, &cyl, thr);
    cyl.msac_score = score;
    cyl.inlier_count = inliers;
    if !(params.r_min_mm..=params.r_max_mm).contains(&cyl.radius) {
        return Ok(None);
    }
    debug_assert!(cyl.axis_dir.dot(&reference) >= cos_cone - 1e-9);
    Ok(Some(cyl))
}

/// MSAC cylinder fit seeded from `params.rng_seed`. Returns `Ok(None)` when
/// no acceptable cylinder was found (no in-cone hypothesis, or the refined
/// radius falls outside `[r_min, r_max]`).
pub fn fit_cylinder_msac(
    points: &[Vector3<f64>],
    normals: Option<&[Vector3<f64>]>,
    params: &CurvatureParams,
) -> Result<Option<CylinderFit>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    fit_cylinder_msac_rng(points, normals, params, &mut rng)
}

/// Splitmix-style hash so each point gets an independent RNG stream and the
/// result does not depend on scheduling order.
fn per_point_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Estimates the local radius of curvature at every valid point by fitting
/// an orientation-constrained cylinder to its k-nearest neighbourhood.
/// Failed fits are marked invalid and then filled once with the median
/// radius of their valid neighbours; if more than half of the attempted
/// fits fail, the geometry is deemed unsuitable and an error is returned.
pub fn radius_of_curvature_field(cloud: &PointCloud, params: &CurvatureParams) -> Result<PointCloud> {
    params.validate()?;
    let normals = cloud
        .normals
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("radius_of_curvature_field: cloud has no normals".into()))?;
    if cloud.len() < params.k_neighbors {
        return Err(Error::InvalidParameter(format!(
            "radius_of_curvature_field: cloud has {} points, k_neighbors = {}",
            cloud.len(),
            params.k_neighbors
        )));
    }
    let tree = KdTree::build(&cloud.points);

    let neighborhoods: Vec<Vec<usize>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| tree.knn(cloud.points[i], params.k_neighbors))
        .collect();

    let fits: Vec<Option<f64>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            if !cloud.valid[i] {
                return None;
            }
            let nn = &neighborhoods[i];
            let pts: Vec<Vector3<f64>> = nn.iter().map(|&j| cloud.points[j]).collect();
            let ns: Vec<Vector3<f64>> = nn.iter().map(|&j| normals[j]).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(per_point_seed(params.rng_seed, i));
            match fit_cylinder_msac_rng(&pts, Some(&ns), params, &mut rng) {
                Ok(Some(fit)) => Some(fit.radius),
                _ => None,
            }
        })
        .collect();

    let attempted = cloud.valid.iter().filter(|&&v| v).count();
    let failed = (0..cloud.len())
        .filter(|&i| cloud.valid[i] && fits[i].is_none())
        .count();
    if attempted == 0 || failed * 2 > attempted {
        return Err(Error::Degenerate(format!(
            "radius_of_curvature_field: {failed} of {attempted} fits failed; geometry or parameters unsuitable"
        )));
    }

    // One median-fill pass over the pre-fill validity.
    let mut radii = vec![0.0f64; cloud.len()];
    let mut valid = vec![false; cloud.len()];
    for i in 0..cloud.len() {
        if let Some(r) = fits[i] {
            radii[i] = r;
            valid[i] = true;
        }
    }
    for i in 0..cloud.len() {
        if cloud.valid[i] && fits[i].is_none() {
            let mut candidates: Vec<f64> = neighborhoods[i]
                .iter()
                .filter(|&&j| fits[j].is_some())
                .map(|&j| fits[j].unwrap())
                .collect();
            if candidates.is_empty() {
                continue;
            }
            candidates.sort_by(f64::total_cmp);
            let mid = candidates.len() / 2;
            let median = if candidates.len() % 2 == 1 {
                candidates[mid]
            } else {
                0.5 * (candidates[mid - 1] + candidates[mid])
            };
            radii[i] = median;
            valid[i] = true;
        }
    }

    let mut out = cloud.clone();
    out.radius = Some(radii);
    out.valid = valid;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::normals::{estimate_normals, orient_normals};
    use rand::Rng;

    fn cylinder_points(radius: f64, height: f64, n_theta: usize, n_z: usize) -> Vec<Vector3<f64>> {
        let mut pts = Vec::new();
        for iz in 0..n_z {
            let z = height * iz as f64 / (n_z - 1) as f64;
            for it in 0..n_theta {
                let t = 2.0 * std::f64::consts::PI * it as f64 / n_theta as f64;
                pts.push(Vector3::new(radius * t.cos(), radius * t.sin(), z));
            }
        }
        pts
    }

    fn radial_normals(points: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        points
            .iter()
            .map(|p| Vector3::new(p[0], p[1], 0.0).normalize())
            .collect()
    }

    #[test]
    fn noiseless_cylinder_recovers_radius() {
        let pts = cylinder_points(25.0, 30.0, 40, 5);
        let ns = radial_normals(&pts);
        let params = CurvatureParams::default();
        let fit = fit_cylinder_msac(&pts, Some(&ns), &params).unwrap().unwrap();
        assert!(
            (fit.radius - 25.0).abs() <= 0.025,
            "radius {} not within 0.1% of 25",
            fit.radius
        );
        let axis_dot = fit.axis_dir.dot(&Vector3::z()).abs();
        assert!(axis_dot >= params.axis_cone_deg.to_radians().cos());
    }

    #[test]
    fn outlier_contaminated_fit_within_one_percent() {
        let mut pts = cylinder_points(25.0, 30.0, 40, 5);
        let ns_clean = radial_normals(&pts);
        let n_clean = pts.len();
        let n_outliers = (n_clean as f64 * 0.3 / 0.7).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut ns = ns_clean;
        for _ in 0..n_outliers {
            // Uniform scatter in a 10 mm shell around the surface.
            let t = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
            let r = 25.0 + rng.gen_range(-10.0..10.0);
            let z = rng.gen_range(0.0..30.0);
            pts.push(Vector3::new(r * t.cos(), r * t.sin(), z));
            let dir = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            ns.push(if dir.norm() > 1e-6 { dir.normalize() } else { Vector3::x() });
        }
        let params = CurvatureParams {
            rng_seed: 7,
            ..Default::default()
        };
        let fit = fit_cylinder_msac(&pts, Some(&ns), &params).unwrap().unwrap();
        assert!(
            (fit.radius - 25.0).abs() <= 0.25,
            "radius {} not within 1% of 25",
            fit.radius
        );
    }

    #[test]
    fn plane_cloud_fails_cleanly() {
        let mut pts = Vec::new();
        for j in 0..12 {
            for i in 0..12 {
                pts.push(Vector3::new(i as f64, j as f64, 0.0));
            }
        }
        let ns: Vec<Vector3<f64>> = pts.iter().map(|_| Vector3::z()).collect();
        let params = CurvatureParams {
            max_iterations: 200,
            ..Default::default()
        };
        let fit = fit_cylinder_msac(&pts, Some(&ns), &params).unwrap();
        assert!(fit.is_none(), "a plane must not admit a bounded-radius cylinder");
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let mut pts = cylinder_points(20.0, 25.0, 30, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            pts.push(Vector3::new(
                rng.gen_range(-30.0..30.0),
                rng.gen_range(-30.0..30.0),
                rng.gen_range(0.0..25.0),
            ));
        }
        let ns = radial_normals(&pts);
        let params = CurvatureParams {
            rng_seed: 11,
            ..Default::default()
        };
        let a = fit_cylinder_msac(&pts, Some(&ns), &params).unwrap().unwrap();
        let b = fit_cylinder_msac(&pts, Some(&ns), &params).unwrap().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn five_point_path_without_normals() {
        let pts = cylinder_points(25.0, 30.0, 48, 6);
        let params = CurvatureParams::default();
        let fit = fit_cylinder_msac(&pts, None, &params).unwrap().unwrap();
        assert!((fit.radius - 25.0).abs() <= 0.25, "radius {}", fit.radius);
    }

    #[test]
    fn too_few_points_is_an_error() {
        let pts = vec![Vector3::zeros(); 5];
        let err = fit_cylinder_msac(&pts, None, &CurvatureParams::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }

    #[test]
    fn curvature_field_on_cylinder() {
        let cloud = PointCloud::from_points(cylinder_points(25.0, 40.0, 120, 30));
        let with_normals = estimate_normals(&cloud, 20).unwrap();
        let oriented = orient_normals(&with_normals, Vector3::z()).unwrap();
        let params = CurvatureParams {
            k_neighbors: 60,
            ..Default::default()
        };
        let out = radius_of_curvature_field(&oriented, &params).unwrap();
        let radii = out.radius.as_ref().unwrap();
        for (i, &r) in radii.iter().enumerate() {
            if out.valid[i] {
                assert!((r - 25.0).abs() <= 0.25, "radius {r} at point {i}");
            }
        }
        let valid_frac = out.valid.iter().filter(|&&v| v).count() as f64 / out.len() as f64;
        assert!(valid_frac > 0.95);
    }

    #[test]
    fn curvature_field_on_sphere_near_equator() {
        let mut pts = Vec::new();
        let r = 30.0;
        for iu in 1..60 {
            let phi = std::f64::consts::PI * iu as f64 / 60.0;
            for iv in 0..90 {
                let theta = 2.0 * std::f64::consts::PI * iv as f64 / 90.0;
                pts.push(Vector3::new(
                    r * phi.sin() * theta.cos(),
                    r * phi.sin() * theta.sin(),
                    r * phi.cos(),
                ));
            }
        }
        let cloud = PointCloud::from_points(pts);
        let with_normals = estimate_normals(&cloud, 20).unwrap();
        let oriented = orient_normals(&with_normals, Vector3::z()).unwrap();
        let params = CurvatureParams::default();
        let out = radius_of_curvature_field(&oriented, &params).unwrap();
        let radii = out.radius.as_ref().unwrap();
        // The axis-constrained cylinder matches the equatorial section.
        for i in 0..out.len() {
            if out.valid[i] && out.points[i][2].abs() < 0.1 * r {
                let rel = (radii[i] - r).abs() / r;
                assert!(rel <= 0.05, "radius {} at equator point {i}", radii[i]);
            }
        }
    }

    #[test]
    fn curvature_field_requires_enough_points() {
        let cloud = PointCloud::from_points(cylinder_points(25.0, 10.0, 5, 4));
        let with_normals = estimate_normals(&cloud, 10).unwrap();
        let params = CurvatureParams::default(); // k_neighbors = 60 > 20 points
        let err = radius_of_curvature_field(&with_normals, &params).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }
}
