//! Wall kinematics: sampling a displacement field at wall points,
//! normal/tangential decomposition, circumferential strain, the associated
//! Green-tensor diagonal, and percentile summaries.
//!
//! Strain is the ratio of the signed normal displacement to the local
//! radius of curvature (positive = outward expansion). Under a locally
//! uniform, axially fixed, incompressible cylindrical expansion the
//! corresponding Green strain diagonal in (radial, circumferential, axial)
//! coordinates is `(1/(2(1+e)^2) - 1/2, (1+e)^2/2 - 1/2, 0)`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registration::ControlGrid;
use crate::surface::PointCloud;
use crate::volume::VectorVolume3;

/// Signed normal component and tangential remainder of a displacement with
/// respect to a unit normal. The reconstruction `d = u_n * n + t` is exact
/// and `t` is orthogonal to `n`.
pub fn decompose_displacement(d: Vector3<f64>, n: Vector3<f64>) -> Result<(f64, Vector3<f64>)> {
    if (n.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "decompose_displacement: normal has norm {}, expected 1",
            n.norm()
        )));
    }
    let u_normal = d.dot(&n);
    let t = d - u_normal * n;
    Ok((u_normal, t))
}

/// Circumferential strain as normal displacement over radius of curvature.
pub fn strain_at_point(u_normal: f64, radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "strain_at_point: radius must be positive, got {radius}"
        )));
    }
    Ok(u_normal / radius)
}

/// Green strain diagonal (E_rr, E_tt, E_zz) for a uniformly expanding,
/// axially fixed, incompressible cylinder at circumferential strain `eps`.
pub fn green_tensor(eps: f64) -> Result<[f64; 3]> {
    if eps <= -1.0 {
        return Err(Error::InvalidParameter(format!(
            "green_tensor: strain {eps} collapses the cylinder (must be > -1)"
        )));
    }
    let stretch = 1.0 + eps;
    Ok([
        0.5 / (stretch * stretch) - 0.5,
        0.5 * stretch * stretch - 0.5,
        0.0,
    ])
}

/// Linear-interpolation percentile on the sorted values: rank
/// `(n-1) * p / 100`, interpolating between the neighbouring order
/// statistics.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("percentile of an empty list".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidParameter("percentile input contains NaN".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("percentile {p} outside [0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub sample_std: f64,
}

/// Min/max/mean and the n-1 sample standard deviation.
pub fn summary_stats(values: &[f64]) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("summary_stats of an empty list".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let sample_std = if values.len() >= 2 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(SummaryStats {
        min: lo,
        max: hi,
        mean,
        sample_std,
    })
}

/// Per-point kinematic channels over a wall cloud. Arrays are parallel to
/// the cloud's points; entries at invalid points are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct WallKinematics {
    pub displacement: Vec<Vector3<f64>>,
    pub u_normal: Vec<f64>,
    pub t_magnitude: Vec<f64>,
    pub radius: Vec<f64>,
    pub strain: Vec<f64>,
    pub green_diag: Vec<[f64; 3]>,
    pub valid: Vec<bool>,
}

impl WallKinematics {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Collects a channel over valid points.
    pub fn channel(&self, select: impl Fn(usize) -> f64) -> Vec<f64> {
        (0..self.valid.len())
            .filter(|&i| self.valid[i])
            .map(select)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicsSummary {
    /// 99th percentile of displacement magnitude, mm.
    pub u_o: f64,
    /// 99th percentile of (absolute, or signed when configured) normal
    /// displacement, mm.
    pub un_o: f64,
    /// 99th percentile of strain.
    pub eps_o: f64,
    pub magnitude: SummaryStats,
    pub normal: SummaryStats,
    pub tangential: SummaryStats,
    pub strain: SummaryStats,
    pub n_valid: usize,
    pub n_invalid: usize,
    /// True when the percentiles were taken over signed values instead of
    /// absolute values.
    pub signed_percentiles: bool,
}

/// Displacement source for [`compute_wall_kinematics`].
pub enum DisplacementField<'a> {
    Grid(&'a ControlGrid),
    Dense(&'a VectorVolume3),
}

impl DisplacementField<'_> {
    fn sample(&self, p: Vector3<f64>) -> Vector3<f64> {
        match self {
            DisplacementField::Grid(g) => g.interpolate_displacement(p),
            DisplacementField::Dense(f) => f.sample_trilinear(p),
        }
    }

    /// The field must cover the cloud: every valid point inside the
    /// anchored bounding box, padded by half a voxel.
    fn check_frame(&self, cloud: &PointCloud) -> Result<()> {
        let (dims, spacing, origin) = match self {
            DisplacementField::Grid(g) => (g.ref_dims(), g.ref_spacing(), g.ref_origin()),
            DisplacementField::Dense(f) => (f.dims(), f.spacing(), f.origin()),
        };
        for (i, p) in cloud.points.iter().enumerate() {
            if !cloud.valid[i] {
                continue;
            }
            for a in 0..3 {
                let lo = origin[a] - 0.5 * spacing[a];
                let hi = origin[a] + ((dims[a] - 1) as f64 + 0.5) * spacing[a];
                if p[a] < lo || p[a] > hi {
                    return Err(Error::GeometryMismatch(format!(
                        "wall point {p:?} lies outside the displacement field frame"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Builds kinematics from explicit per-point displacements (already in the
/// physical motion direction). Used both by [`compute_wall_kinematics`] and
/// by ground-truth evaluation so the two sides share one code path.
pub fn kinematics_from_displacements(
    cloud: &PointCloud,
    displacements: &[Vector3<f64>],
    signed_percentiles: bool,
) -> Result<(WallKinematics, KinematicsSummary)> {
    let normals = cloud
        .normals
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("wall kinematics requires oriented normals".into()))?;
    let radii = cloud
        .radius
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("wall kinematics requires per-point radii".into()))?;
    if displacements.len() != cloud.len() {
        return Err(Error::InvalidParameter(
            "displacement list length must match the cloud".into(),
        ));
    }

    let n = cloud.len();
    let mut kin = WallKinematics {
        displacement: vec![Vector3::zeros(); n],
        u_normal: vec![0.0; n],
        t_magnitude: vec![0.0; n],
        radius: vec![0.0; n],
        strain: vec![0.0; n],
        green_diag: vec![[0.0; 3]; n],
        valid: cloud.valid.clone(),
    };
    for i in 0..n {
        if !kin.valid[i] {
            continue;
        }
        let d = displacements[i];
        let (u_n, t) = decompose_displacement(d, normals[i])?;
        let eps = strain_at_point(u_n, radii[i])?;
        kin.displacement[i] = d;
        kin.u_normal[i] = u_n;
        kin.t_magnitude[i] = t.norm();
        kin.radius[i] = radii[i];
        kin.strain[i] = eps;
        kin.green_diag[i] = green_tensor(eps)?;
    }
    if kin.valid_count() == 0 {
        return Err(Error::Degenerate("wall kinematics: no valid points".into()));
    }

    let magnitude = kin.channel(|i| kin.displacement[i].norm());
    let normal = kin.channel(|i| kin.u_normal[i]);
    let tangential = kin.channel(|i| kin.t_magnitude[i]);
    let strain = kin.channel(|i| kin.strain[i]);
    let pct = |values: &[f64]| -> Result<f64> {
        if signed_percentiles {
            percentile(values, 99.0)
        } else {
            let abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
            percentile(&abs, 99.0)
        }
    };
    let summary = KinematicsSummary {
        u_o: pct(&magnitude)?,
        un_o: pct(&normal)?,
        eps_o: pct(&strain)?,
        magnitude: summary_stats(&magnitude)?,
        normal: summary_stats(&normal)?,
        tangential: summary_stats(&tangential)?,
        strain: summary_stats(&strain)?,
        n_valid: kin.valid_count(),
        n_invalid: n - kin.valid_count(),
        signed_percentiles,
    };
    Ok((kin, summary))
}

/// Samples the displacement field at every valid wall point, applies the
/// sign convention converting the registration's fixed-frame pullback into
/// physical motion, and derives the kinematic channels.
pub fn compute_wall_kinematics(
    cloud: &PointCloud,
    field: &DisplacementField,
    sign: f64,
    signed_percentiles: bool,
) -> Result<(WallKinematics, KinematicsSummary)> {
    if sign != 1.0 && sign != -1.0 {
        return Err(Error::InvalidParameter(format!(
            "displacement sign must be +1 or -1, got {sign}"
        )));
    }
    field.check_frame(cloud)?;
    let displacements: Vec<Vector3<f64>> = cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if cloud.valid[i] {
                sign * field.sample(*p)
            } else {
                Vector3::zeros()
            }
        })
        .collect();
    kinematics_from_displacements(cloud, &displacements, signed_percentiles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn decompose_axis_aligned() {
        let (u, t) = decompose_displacement(Vector3::new(0.0, 0.0, 1.0), Vector3::z()).unwrap();
        assert_eq!(u, 1.0);
        assert_eq!(t, Vector3::zeros());

        let (u, t) = decompose_displacement(Vector3::new(3.0, 4.0, 0.0), Vector3::x()).unwrap();
        assert_eq!(u, 3.0);
        assert_eq!(t, Vector3::new(0.0, 4.0, 0.0));
    }

    #[test]
    fn decompose_reconstructs_exactly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let d = Vector3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let n = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .normalize();
            let (u, t) = decompose_displacement(d, n).unwrap();
            assert!((d - (u * n + t)).norm() <= 1e-12);
            assert!(t.dot(&n).abs() <= 1e-12);
            // Pythagorean identity.
            assert!((d.norm_squared() - (u * u + t.norm_squared())).abs() <= 1e-9);
        }
    }

    #[test]
    fn decompose_rejects_non_unit_normal() {
        assert!(decompose_displacement(Vector3::x(), Vector3::new(0.0, 2.0, 0.0)).is_err());
    }

    #[test]
    fn strain_examples() {
        assert!((strain_at_point(1.0, 25.0).unwrap() - 0.04).abs() < 1e-15);
        assert_eq!(strain_at_point(0.0, 25.0).unwrap(), 0.0);
        assert!((strain_at_point(-0.5, 25.0).unwrap() + 0.02).abs() < 1e-15);
        assert!(strain_at_point(1.0, 0.0).is_err());
    }

    #[test]
    fn green_tensor_identity_and_sign() {
        assert_eq!(green_tensor(0.0).unwrap(), [0.0, 0.0, 0.0]);
        let [err, ett, ezz] = green_tensor(0.0554).unwrap();
        // Frozen from the deformation-gradient oracle below.
        assert!((err - (-0.051114)).abs() < 5e-6, "E_rr {err}");
        assert!((ett - 0.056935).abs() < 5e-6, "E_tt {ett}");
        assert_eq!(ezz, 0.0);
        assert!(green_tensor(-1.0).is_err());
    }

    /// Oracle: F = diag(1/(1+eps), 1+eps, 1) has det 1 and
    /// (F^T F - I)/2 must reproduce the diagonal to 1e-12.
    #[test]
    fn green_tensor_matches_deformation_gradient() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let eps: f64 = rng.gen_range(-0.5..0.5);
            let f = [1.0 / (1.0 + eps), 1.0 + eps, 1.0];
            let det: f64 = f.iter().product();
            assert!((det - 1.0).abs() <= 1e-12);
            let e_oracle = [
                0.5 * (f[0] * f[0] - 1.0),
                0.5 * (f[1] * f[1] - 1.0),
                0.5 * (f[2] * f[2] - 1.0),
            ];
            let e = green_tensor(eps).unwrap();
            for c in 0..3 {
                assert!((e[c] - e_oracle[c]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn green_e_tt_monotone_in_strain() {
        let mut prev = f64::NEG_INFINITY;
        for i in 0..100 {
            let eps = -0.9 + i as f64 * 0.02;
            let [_, ett, _] = green_tensor(eps).unwrap();
            assert!(ett > prev);
            prev = ett;
        }
    }

    #[test]
    fn percentile_basics() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0, 5.0], 50.0).unwrap(), 3.0);
        assert_eq!(percentile(&[7.5; 9], 99.0).unwrap(), 7.5);
        assert!(percentile(&[], 50.0).is_err());
        assert!(percentile(&[1.0, f64::NAN], 50.0).is_err());
    }

    #[test]
    fn percentile_matches_sort_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f64> = (0..1000).map(|_| rng.gen_range(-10.0..10.0)).collect();
        // Independent re-implementation on the sorted copy.
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let p = 99.0;
        let rank = (sorted.len() - 1) as f64 * p / 100.0;
        let lo = rank.floor() as usize;
        let frac = rank - lo as f64;
        let oracle = sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
        assert_eq!(percentile(&values, p).unwrap(), oracle);
    }

    #[test]
    fn percentile_order_properties() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let values: Vec<f64> = (0..500).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let max = values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        for delta in [1.0, 10.0, 40.0] {
            let hi = percentile(&values, 100.0 - delta).unwrap();
            let med = percentile(&values, 50.0).unwrap();
            assert!(hi <= max && hi >= med);
        }
    }

    #[test]
    fn table_style_statistics() {
        let eps_o = [5.54, 5.23, 4.46, 4.01, 3.91, 4.38, 5.50, 4.55, 2.62, 4.32];
        let s = summary_stats(&eps_o).unwrap();
        assert!((s.mean - 4.45).abs() <= 0.005, "mean {}", s.mean);
        assert!((s.sample_std - 0.87).abs() <= 0.005, "std {}", s.sample_std);

        let u_o = [1.34, 1.31, 1.00, 1.19, 1.14, 1.02, 1.42, 1.03, 0.70, 1.27];
        let s = summary_stats(&u_o).unwrap();
        assert!((s.mean - 1.14).abs() <= 0.005);
        assert!((s.sample_std - 0.21).abs() <= 0.005);

        let s = summary_stats(&[3.0, 3.0]).unwrap();
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.sample_std, 0.0);
    }

    fn ring_cloud() -> PointCloud {
        let mut pts = Vec::new();
        let mut normals = Vec::new();
        for it in 0..64 {
            let t = 2.0 * std::f64::consts::PI * it as f64 / 64.0;
            for iz in 0..8 {
                pts.push(Vector3::new(25.0 * t.cos(), 25.0 * t.sin(), iz as f64 * 4.0));
                normals.push(Vector3::new(t.cos(), t.sin(), 0.0));
            }
        }
        let n = pts.len();
        let mut cloud = PointCloud::from_points(pts);
        cloud.normals = Some(normals);
        cloud.radius = Some(vec![25.0; n]);
        cloud
    }

    #[test]
    fn zero_field_gives_zero_summary() {
        let cloud = ring_cloud();
        let zeros = vec![Vector3::zeros(); cloud.len()];
        let (kin, summary) = kinematics_from_displacements(&cloud, &zeros, false).unwrap();
        assert!(kin.strain.iter().all(|&s| s == 0.0));
        assert_eq!(summary.u_o, 0.0);
        assert_eq!(summary.eps_o, 0.0);
    }

    #[test]
    fn radial_field_strain_on_ring() {
        let cloud = ring_cloud();
        // Outward displacement of 1 mm at every point: strain = 1/25 = 0.04.
        let d: Vec<Vector3<f64>> = cloud
            .normals
            .as_ref()
            .unwrap()
            .iter()
            .map(|n| 1.0 * n)
            .collect();
        let (kin, summary) = kinematics_from_displacements(&cloud, &d, false).unwrap();
        for i in 0..cloud.len() {
            assert!((kin.strain[i] - 0.04).abs() < 1e-12);
            assert!(kin.t_magnitude[i] < 1e-12);
        }
        assert!((summary.eps_o - 0.04).abs() < 1e-12);
    }

    #[test]
    fn summary_is_permutation_invariant() {
        let cloud = ring_cloud();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let d: Vec<Vector3<f64>> = (0..cloud.len())
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let (_, s1) = kinematics_from_displacements(&cloud, &d, false).unwrap();

        let mut order: Vec<usize> = (0..cloud.len()).collect();
        // Deterministic shuffle.
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let permuted_cloud = PointCloud {
            points: order.iter().map(|&i| cloud.points[i]).collect(),
            normals: Some(order.iter().map(|&i| cloud.normals.as_ref().unwrap()[i]).collect()),
            radius: Some(order.iter().map(|&i| cloud.radius.as_ref().unwrap()[i]).collect()),
            valid: order.iter().map(|&i| cloud.valid[i]).collect(),
            attributes: Default::default(),
        };
        let permuted_d: Vec<Vector3<f64>> = order.iter().map(|&i| d[i]).collect();
        let (_, s2) = kinematics_from_displacements(&permuted_cloud, &permuted_d, false).unwrap();
        assert!((s1.u_o - s2.u_o).abs() < 1e-12);
        assert!((s1.strain.mean - s2.strain.mean).abs() < 1e-12);
    }

    #[test]
    fn sign_flips_normal_displacement_exactly() {
        let cloud = ring_cloud();
        let v = crate::volume::Volume3::zeros([40, 40, 40], [2.0; 3], [-39.0, -39.0, -4.0]).unwrap();
        let mut grid = ControlGrid::covering(&v, [8, 8, 8]).unwrap();
        for d in grid.displacements_mut() {
            *d = Vector3::new(0.3, -0.2, 0.1);
        }
        let field = DisplacementField::Grid(&grid);
        let (plus, _) = compute_wall_kinematics(&cloud, &field, 1.0, false).unwrap();
        let (minus, _) = compute_wall_kinematics(&cloud, &field, -1.0, false).unwrap();
        for i in 0..cloud.len() {
            assert_eq!(plus.u_normal[i], -minus.u_normal[i]);
        }
    }

    #[test]
    fn frame_mismatch_is_detected() {
        let cloud = ring_cloud(); // points out to |x| = 25
        let v = crate::volume::Volume3::zeros([4, 4, 4], [1.0; 3], [0.0; 3]).unwrap();
        let grid = ControlGrid::covering(&v, [2, 2, 2]).unwrap();
        let err = compute_wall_kinematics(&cloud, &DisplacementField::Grid(&grid), -1.0, false).unwrap_err();
        assert!(matches!(err, Error::GeometryMismatch(_)));
    }
}
