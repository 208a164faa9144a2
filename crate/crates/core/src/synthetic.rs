//! Synthetic ground truth: phantom vessel volumes, analytically known
//! displacement fields, and warped image pairs.
//!
//! The phantom is a cylindrical annulus (lumen / wall / background
//! intensities) along the volume's z axis, optionally blurred and
//! noise-corrupted. The truth field inflates the vessel radially with an
//! axial weighting profile that pins both ends, optionally adding an axial
//! (tangential to the wall) component. Warping uses backward mapping with
//! a fixed-point field inversion, so a feature at `p` in the input appears
//! at `p + u(p)` in the output.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surface::PointCloud;
use crate::volume::{gaussian_smooth, VectorVolume3, Volume3};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub inner_radius_mm: f64,
    pub outer_radius_mm: f64,
    /// (background, wall, lumen) intensities.
    pub intensities: [f64; 3],
    pub blur_sigma_voxels: f64,
    pub noise_sigma: f64,
    pub rng_seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            dims: [112, 112, 74],
            spacing_mm: [0.63, 0.63, 1.0],
            inner_radius_mm: 22.0,
            outer_radius_mm: 25.0,
            intensities: [-50.0, 120.0, 300.0],
            blur_sigma_voxels: 0.8,
            noise_sigma: 10.0,
            rng_seed: 42,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < 2) {
            return Err(Error::Config("phantom.dims must be >= 2 per axis".into()));
        }
        if self.spacing_mm.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config("phantom.spacing_mm must be positive".into()));
        }
        let lateral = (self.dims[0] - 1) as f64 * self.spacing_mm[0];
        let lateral = lateral.min((self.dims[1] - 1) as f64 * self.spacing_mm[1]);
        if !(self.inner_radius_mm > 0.0) {
            return Err(Error::Config("phantom.inner_radius_mm must be > 0".into()));
        }
        if self.inner_radius_mm >= self.outer_radius_mm {
            return Err(Error::Config(
                "phantom.inner_radius_mm must be < phantom.outer_radius_mm".into(),
            ));
        }
        if self.outer_radius_mm >= lateral / 2.0 {
            return Err(Error::Config(format!(
                "phantom.outer_radius_mm = {} must be < half the lateral extent ({})",
                self.outer_radius_mm,
                lateral / 2.0
            )));
        }
        if self.blur_sigma_voxels < 0.0 || self.noise_sigma < 0.0 {
            return Err(Error::Config(
                "phantom.blur_sigma_voxels and phantom.noise_sigma must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Axis of the annulus: through the lateral center, along +z, starting
    /// at the first slab.
    pub fn axis_point(&self) -> Vector3<f64> {
        Vector3::new(
            (self.dims[0] - 1) as f64 * self.spacing_mm[0] / 2.0,
            (self.dims[1] - 1) as f64 * self.spacing_mm[1] / 2.0,
            0.0,
        )
    }

    pub fn axial_length_mm(&self) -> f64 {
        (self.dims[2] - 1) as f64 * self.spacing_mm[2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxialProfile {
    /// sin^2(pi z / length): zero at both ends, 1 at mid-height.
    Sin2,
    /// 1 inside the support.
    Constant,
}

/// Analytic displacement field: radial inflation about an axis with an
/// axial weighting profile, plus an optional axial component with the same
/// profile. Displacement is zero outside the axial support and on the axis
/// itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticField {
    pub dr_max_mm: f64,
    /// Amplitude of the axial (wall-tangential) component, mm.
    #[serde(default)]
    pub axial_max_mm: f64,
    pub profile: AxialProfile,
    pub axis_point: [f64; 3],
    pub axis_dir: [f64; 3],
    pub length_mm: f64,
}

impl AnalyticField {
    pub fn radial_inflation(spec: &PhantomSpec, dr_max_mm: f64) -> Self {
        Self {
            dr_max_mm,
            axial_max_mm: 0.0,
            profile: AxialProfile::Sin2,
            axis_point: spec.axis_point().into(),
            axis_dir: [0.0, 0.0, 1.0],
            length_mm: spec.axial_length_mm(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dr_max_mm < 0.0 || self.axial_max_mm < 0.0 {
            return Err(Error::Config("field amplitudes must be >= 0".into()));
        }
        if !(self.length_mm > 0.0) {
            return Err(Error::Config("field.length_mm must be > 0".into()));
        }
        if Vector3::from(self.axis_dir).norm() < 1e-12 {
            return Err(Error::Config("field.axis_dir must be non-zero".into()));
        }
        Ok(())
    }

    fn profile_at(&self, z: f64) -> f64 {
        if z < 0.0 || z > self.length_mm {
            return 0.0;
        }
        match self.profile {
            AxialProfile::Sin2 => (std::f64::consts::PI * z / self.length_mm).sin().powi(2),
            AxialProfile::Constant => 1.0,
        }
    }
}

/// A displacement field that can be evaluated anywhere, used by the warper
/// for both analytic and gridded fields.
pub trait VectorField {
    fn eval(&self, p: Vector3<f64>) -> Vector3<f64>;
}

impl VectorField for AnalyticField {
    fn eval(&self, p: Vector3<f64>) -> Vector3<f64> {
        let axis_point = Vector3::from(self.axis_point);
        let axis = Vector3::from(self.axis_dir).normalize();
        let rel = p - axis_point;
        let z = rel.dot(&axis);
        let w = self.profile_at(z);
        if w == 0.0 {
            return Vector3::zeros();
        }
        let lateral = rel - z * axis;
        let rho = lateral.norm();
        let radial = if rho < 1e-9 {
            Vector3::zeros()
        } else {
            self.dr_max_mm * w * (lateral / rho)
        };
        radial + self.axial_max_mm * w * axis
    }
}

impl VectorField for VectorVolume3 {
    fn eval(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.sample_trilinear(p)
    }
}

/// Evaluates the analytic field at a point (forward displacement).
pub fn eval_field(f: &AnalyticField, p: Vector3<f64>) -> Vector3<f64> {
    f.eval(p)
}

/// Backward displacement at `p`: the `u_back` with
/// `p + u_back + u(p + u_back) = p`, found by fixed-point iteration.
/// Fails when the field is too strong to invert.
pub fn invert_field<F: VectorField>(f: &F, p: Vector3<f64>) -> Result<Vector3<f64>> {
    let mut back = -f.eval(p);
    for _ in 0..50 {
        let next = -f.eval(p + back);
        let update = (next - back).norm();
        back = next;
        if update < 1e-3 {
            return Ok(back);
        }
    }
    Err(Error::Numeric(format!(
        "field inversion did not converge at {p:?}; deformation too large"
    )))
}

/// Warps a volume by the forward field `f` using backward mapping, so a
/// feature at `p` in `v` lands at `p + u(p)` in the output.
pub fn warp_volume<F: VectorField + Sync>(v: &Volume3, f: &F) -> Result<Volume3> {
    let dims = v.dims();
    let plane = dims[0] * dims[1];
    let mut data = vec![0.0f32; v.voxel_count()];
    let failures: Vec<Option<String>> = data
        .par_chunks_mut(plane)
        .enumerate()
        .map(|(kz, out)| {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let x = v.voxel_center(i, j, kz);
                    match invert_field(f, x) {
                        Ok(back) => out[i + dims[0] * j] = v.sample_trilinear(x + back) as f32,
                        Err(e) => return Some(e.to_string()),
                    }
                }
            }
            None
        })
        .collect();
    if let Some(msg) = failures.into_iter().flatten().next() {
        return Err(Error::Numeric(msg));
    }
    Volume3::new(dims, v.spacing(), v.origin(), data)
}

/// Cylindrical annulus phantom plus its crisp wall mask (1 inside the wall,
/// 0 elsewhere). The intensity volume is blurred and noise-corrupted per
/// the spec; the mask is left untouched.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(Volume3, Volume3)> {
    spec.validate()?;
    let [background, wall, lumen] = spec.intensities;
    let axis_point = spec.axis_point();
    let mut volume = Volume3::zeros(spec.dims, spec.spacing_mm, [0.0; 3])?;
    let mut mask = Volume3::zeros(spec.dims, spec.spacing_mm, [0.0; 3])?;
    for k in 0..spec.dims[2] {
        for j in 0..spec.dims[1] {
            for i in 0..spec.dims[0] {
                let p = volume.voxel_center(i, j, k);
                let rho = (p - axis_point).xy().norm();
                let (value, in_wall) = if rho < spec.inner_radius_mm {
                    (lumen, false)
                } else if rho <= spec.outer_radius_mm {
                    (wall, true)
                } else {
                    (background, false)
                };
                volume.set(i, j, k, value as f32);
                mask.set(i, j, k, if in_wall { 1.0 } else { 0.0 });
            }
        }
    }
    if spec.blur_sigma_voxels > 0.0 {
        let sigma = [
            spec.blur_sigma_voxels * spec.spacing_mm[0],
            spec.blur_sigma_voxels * spec.spacing_mm[1],
            spec.blur_sigma_voxels * spec.spacing_mm[2],
        ];
        volume = gaussian_smooth(&volume, sigma)?;
    }
    if spec.noise_sigma > 0.0 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(spec.rng_seed);
        let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Numeric(e.to_string()))?;
        for v in volume.data_mut() {
            *v += normal.sample(&mut rng) as f32;
        }
    }
    Ok((volume, mask))
}

/// Forward truth displacement at each cloud point.
pub fn ground_truth_at_points(f: &AnalyticField, cloud: &PointCloud) -> Vec<Vector3<f64>> {
    cloud.points.iter().map(|&p| f.eval(p)).collect()
}
