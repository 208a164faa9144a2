//! Axis-aligned 3D scalar volumes: geometry, interpolation, smoothing,
//! gradients, cropping and pyramid downsampling.
//!
//! A [`Volume3`] stores intensities in x-fastest order with physical voxel
//! spacing and an origin placed at the center of voxel `(0, 0, 0)`. All
//! positions are in millimetres in the image frame; direction cosines are
//! assumed identity (oblique volumes must be resampled upstream).

pub mod conv;
mod io;
mod nifti;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub use io::{load_volume, save_volume};

/// Dense 3D scalar image with physical geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3 {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    data: Vec<f32>,
}

impl Volume3 {
    /// Builds a volume, enforcing the geometry invariants: every dimension
    /// at least 2 voxels, strictly positive spacing, and data length equal
    /// to the voxel count.
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3], data: Vec<f32>) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidVolume(format!(
                "dims {dims:?}: every dimension must be >= 2 voxels"
            )));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidVolume(format!(
                "spacing {spacing:?}: every component must be positive and finite"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidVolume(format!("origin {origin:?} is not finite")));
        }
        let len = dims[0] * dims[1] * dims[2];
        if data.len() != len {
            return Err(Error::InvalidVolume(format!(
                "data length {} does not match dims {:?} ({} voxels)",
                data.len(),
                dims,
                len
            )));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
            data,
        })
    }

    /// Constant-valued volume.
    pub fn filled(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3], value: f32) -> Result<Self> {
        let len = dims[0] * dims[1] * dims[2];
        Self::new(dims, spacing, origin, vec![value; len])
    }

    pub fn zeros(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        Self::filled(dims, spacing, origin, 0.0)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Total voxel count (the L of the image domain).
    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Physical volume of one voxel in mm^3.
    pub fn voxel_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.dims[0] && j < self.dims[1] && k < self.dims[2]);
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[self.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f32) {
        let idx = self.index(i, j, k);
        self.data[idx] = value;
    }

    /// Physical position (mm) of the center of voxel `(i, j, k)`.
    #[inline]
    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        Vector3::new(
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        )
    }

    /// True when dims match exactly and spacing/origin agree to tight
    /// tolerances.
    pub fn same_geometry(&self, other: &Volume3) -> bool {
        self.dims == other.dims
            && self
                .spacing
                .iter()
                .zip(&other.spacing)
                .all(|(a, b)| (a - b).abs() <= 1e-9)
            && self
                .origin
                .iter()
                .zip(&other.origin)
                .all(|(a, b)| (a - b).abs() <= 1e-6)
    }

    pub fn min_max(&self) -> (f32, f32) {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Continuous voxel coordinates of a physical point, clamped to the
    /// voxel-center bounding box. The second element of the pair records,
    /// per axis, whether the raw coordinate was inside the box (used to
    /// zero interpolant derivatives where the clamp is active).
    #[inline]
    fn voxel_coords_clamped(&self, p: Vector3<f64>) -> ([f64; 3], [bool; 3]) {
        let mut u = [0.0f64; 3];
        let mut inside = [true; 3];
        for a in 0..3 {
            let raw = (p[a] - self.origin[a]) / self.spacing[a];
            let max = (self.dims[a] - 1) as f64;
            inside[a] = (0.0..=max).contains(&raw);
            u[a] = raw.clamp(0.0, max);
        }
        (u, inside)
    }

    /// Trilinear interpolation over the 8 surrounding voxel centers.
    /// Out-of-domain points are clamped to the voxel-center bounding box,
    /// so far-outside queries return the nearest corner value.
    pub fn sample_trilinear(&self, p: Vector3<f64>) -> f64 {
        self.sample_trilinear_with_grad(p).0
    }

    /// Trilinear sample plus the exact gradient of the interpolant with
    /// respect to physical position (intensity per mm). Where the clamp is
    /// active on an axis, that component of the gradient is zero.
    pub fn sample_trilinear_with_grad(&self, p: Vector3<f64>) -> (f64, Vector3<f64>) {
        let (u, inside) = self.voxel_coords_clamped(p);
        let mut i0 = [0usize; 3];
        let mut f = [0.0f64; 3];
        for a in 0..3 {
            let base = (u[a].floor() as usize).min(self.dims[a] - 2);
            i0[a] = base;
            f[a] = u[a] - base as f64;
        }
        let idx = |di: usize, dj: usize, dk: usize| -> f64 {
            self.data[self.index(i0[0] + di, i0[1] + dj, i0[2] + dk)] as f64
        };
        let c000 = idx(0, 0, 0);
        let c100 = idx(1, 0, 0);
        let c010 = idx(0, 1, 0);
        let c110 = idx(1, 1, 0);
        let c001 = idx(0, 0, 1);
        let c101 = idx(1, 0, 1);
        let c011 = idx(0, 1, 1);
        let c111 = idx(1, 1, 1);

        let (fx, fy, fz) = (f[0], f[1], f[2]);
        let c00 = c000 + (c100 - c000) * fx;
        let c10 = c010 + (c110 - c010) * fx;
        let c01 = c001 + (c101 - c001) * fx;
        let c11 = c011 + (c111 - c011) * fx;
        let c0 = c00 + (c10 - c00) * fy;
        let c1 = c01 + (c11 - c01) * fy;
        let value = c0 + (c1 - c0) * fz;

        // d/dfx: interpolate the x-differences over (fy, fz), etc.
        let dx00 = c100 - c000;
        let dx10 = c110 - c010;
        let dx01 = c101 - c001;
        let dx11 = c111 - c011;
        let ddfx = (dx00 + (dx10 - dx00) * fy) * (1.0 - fz) + (dx01 + (dx11 - dx01) * fy) * fz;
        let ddfy = (c10 - c00) * (1.0 - fz) + (c11 - c01) * fz;
        let ddfz = c1 - c0;

        let grad = Vector3::new(
            if inside[0] { ddfx / self.spacing[0] } else { 0.0 },
            if inside[1] { ddfy / self.spacing[1] } else { 0.0 },
            if inside[2] { ddfz / self.spacing[2] } else { 0.0 },
        );
        (value, grad)
    }
}

/// Three scalar channels sharing one volume geometry; used for dense
/// displacement fields (mm) and image gradients (intensity/mm).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorVolume3 {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    channels: [Vec<f32>; 3],
}

impl VectorVolume3 {
    pub fn new(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: [f64; 3],
        channels: [Vec<f32>; 3],
    ) -> Result<Self> {
        let len = dims[0] * dims[1] * dims[2];
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidVolume(format!(
                "channel lengths {:?} do not match dims {:?} ({} voxels)",
                [channels[0].len(), channels[1].len(), channels[2].len()],
                dims,
                len
            )));
        }
        // Reuse the scalar-volume geometry validation.
        Volume3::zeros(dims, spacing, origin)?;
        Ok(Self {
            dims,
            spacing,
            origin,
            channels,
        })
    }

    pub fn zeros(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let len = dims[0] * dims[1] * dims[2];
        Self::new(dims, spacing, origin, [vec![0.0; len], vec![0.0; len], vec![0.0; len]])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.channels[c]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        &mut self.channels[c]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        let idx = self.index(i, j, k);
        Vector3::new(
            self.channels[0][idx] as f64,
            self.channels[1][idx] as f64,
            self.channels[2][idx] as f64,
        )
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: Vector3<f64>) {
        let idx = self.index(i, j, k);
        for c in 0..3 {
            self.channels[c][idx] = v[c] as f32;
        }
    }

    pub fn same_geometry_as(&self, vol: &Volume3) -> bool {
        self.dims == vol.dims()
            && self
                .spacing
                .iter()
                .zip(&vol.spacing())
                .all(|(a, b)| (a - b).abs() <= 1e-9)
            && self
                .origin
                .iter()
                .zip(&vol.origin())
                .all(|(a, b)| (a - b).abs() <= 1e-6)
    }

    /// Component-wise trilinear sample at a physical point (clamped).
    pub fn sample_trilinear(&self, p: Vector3<f64>) -> Vector3<f64> {
        let mut u = [0.0f64; 3];
        for a in 0..3 {
            let raw = (p[a] - self.origin[a]) / self.spacing[a];
            u[a] = raw.clamp(0.0, (self.dims[a] - 1) as f64);
        }
        let mut i0 = [0usize; 3];
        let mut f = [0.0f64; 3];
        for a in 0..3 {
            let base = (u[a].floor() as usize).min(self.dims[a] - 2);
            i0[a] = base;
            f[a] = u[a] - base as f64;
        }
        let mut out = Vector3::zeros();
        for c in 0..3 {
            let ch = &self.channels[c];
            let at = |di: usize, dj: usize, dk: usize| -> f64 {
                ch[i0[0] + di + self.dims[0] * (i0[1] + dj + self.dims[1] * (i0[2] + dk))] as f64
            };
            let c00 = at(0, 0, 0) + (at(1, 0, 0) - at(0, 0, 0)) * f[0];
            let c10 = at(0, 1, 0) + (at(1, 1, 0) - at(0, 1, 0)) * f[0];
            let c01 = at(0, 0, 1) + (at(1, 0, 1) - at(0, 0, 1)) * f[0];
            let c11 = at(0, 1, 1) + (at(1, 1, 1) - at(0, 1, 1)) * f[0];
            let c0 = c00 + (c10 - c00) * f[1];
            let c1 = c01 + (c11 - c01) * f[1];
            out[c] = c0 + (c1 - c0) * f[2];
        }
        out
    }
}

/// Separable Gaussian smoothing with per-axis bandwidth in mm. Kernels are
/// truncated at 3 sigma, normalized to unit sum, and renormalized over the
/// in-bounds support at borders (constants are preserved exactly).
/// `sigma = 0` on an axis is the identity along that axis.
pub fn gaussian_smooth(v: &Volume3, sigma_mm: [f64; 3]) -> Result<Volume3> {
    if sigma_mm.iter().any(|&s| s < 0.0 || !s.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "gaussian sigma {sigma_mm:?} must be non-negative"
        )));
    }
    let kernels: Vec<Option<conv::Kernel1D>> = (0..3)
        .map(|a| conv::gaussian_kernel(sigma_mm[a] / v.spacing()[a]))
        .collect();
    let mut buf: Vec<f64> = v.data().iter().map(|&x| x as f64).collect();
    let mut scratch = vec![0.0f64; buf.len()];
    for (axis, kernel) in kernels.iter().enumerate() {
        if let Some(k) = kernel {
            conv::conv_axis(&buf, &mut scratch, v.dims(), axis, k, conv::ConvMode::Forward);
            std::mem::swap(&mut buf, &mut scratch);
        }
    }
    let data: Vec<f32> = buf.iter().map(|&x| x as f32).collect();
    Volume3::new(v.dims(), v.spacing(), v.origin(), data)
}

/// Central-difference gradient, one-sided at boundaries, in intensity/mm.
pub fn gradient_central(v: &Volume3) -> VectorVolume3 {
    let dims = v.dims();
    let mut out = VectorVolume3::zeros(dims, v.spacing(), v.origin()).expect("valid geometry");
    let data = v.data();
    let strides = [1usize, dims[0], dims[0] * dims[1]];
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let idx = v.index(i, j, k);
                let pos = [i, j, k];
                for a in 0..3 {
                    let n = dims[a];
                    let s = strides[a];
                    let g = if pos[a] == 0 {
                        (data[idx + s] as f64 - data[idx] as f64) / v.spacing()[a]
                    } else if pos[a] == n - 1 {
                        (data[idx] as f64 - data[idx - s] as f64) / v.spacing()[a]
                    } else {
                        (data[idx + s] as f64 - data[idx - s] as f64) / (2.0 * v.spacing()[a])
                    };
                    out.channel_mut(a)[idx] = g as f32;
                }
            }
        }
    }
    out
}

/// Sub-volume `[lo, hi)` per axis; the origin shifts by `lo * spacing`.
pub fn crop(v: &Volume3, lo: [usize; 3], hi: [usize; 3]) -> Result<Volume3> {
    for a in 0..3 {
        if lo[a] >= hi[a] || hi[a] > v.dims()[a] {
            return Err(Error::InvalidParameter(format!(
                "crop range [{:?}, {:?}) invalid for dims {:?}",
                lo,
                hi,
                v.dims()
            )));
        }
    }
    let dims = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
    let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for k in lo[2]..hi[2] {
        for j in lo[1]..hi[1] {
            let row = v.index(lo[0], j, k);
            data.extend_from_slice(&v.data()[row..row + dims[0]]);
        }
    }
    let origin = [
        v.origin()[0] + lo[0] as f64 * v.spacing()[0],
        v.origin()[1] + lo[1] as f64 * v.spacing()[1],
        v.origin()[2] + lo[2] as f64 * v.spacing()[2],
    ];
    Volume3::new(dims, v.spacing(), origin, data)
}

/// Pyramid level: Gaussian smooth with sigma of one voxel per axis, then
/// keep every second voxel. Spacing doubles; the origin stays at the first
/// retained voxel center.
pub fn downsample2(v: &Volume3) -> Result<Volume3> {
    if v.dims().iter().any(|&d| d < 4) {
        return Err(Error::InvalidParameter(format!(
            "downsample2 requires dims >= 4 per axis, got {:?}",
            v.dims()
        )));
    }
    let sigma = [v.spacing()[0], v.spacing()[1], v.spacing()[2]];
    let smoothed = gaussian_smooth(v, sigma)?;
    let dims = v.dims();
    let out_dims = [dims[0].div_ceil(2), dims[1].div_ceil(2), dims[2].div_ceil(2)];
    let mut data = Vec::with_capacity(out_dims[0] * out_dims[1] * out_dims[2]);
    for k in (0..dims[2]).step_by(2) {
        for j in (0..dims[1]).step_by(2) {
            for i in (0..dims[0]).step_by(2) {
                data.push(smoothed.get(i, j, k));
            }
        }
    }
    let spacing = [v.spacing()[0] * 2.0, v.spacing()[1] * 2.0, v.spacing()[2] * 2.0];
    Volume3::new(out_dims, spacing, v.origin(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_volume(dims: [usize; 3], spacing: [f64; 3], a: f64) -> Volume3 {
        let mut v = Volume3::zeros(dims, spacing, [0.0; 3]).unwrap();
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let x = i as f64 * spacing[0];
                    v.set(i, j, k, (a * x) as f32);
                }
            }
        }
        v
    }

    #[test]
    fn construction_rejects_bad_geometry() {
        assert!(Volume3::new([2, 2, 1], [1.0; 3], [0.0; 3], vec![0.0; 4]).is_err());
        assert!(Volume3::new([2, 2, 2], [1.0, 0.0, 1.0], [0.0; 3], vec![0.0; 8]).is_err());
        assert!(Volume3::new([2, 2, 2], [1.0; 3], [0.0; 3], vec![0.0; 7]).is_err());
        assert!(Volume3::new([2, 2, 2], [1.0; 3], [0.0; 3], vec![0.0; 8]).is_ok());
    }

    #[test]
    fn trilinear_reproduces_voxel_centers() {
        let dims = [4, 3, 3];
        let data: Vec<f32> = (0..36).map(|x| x as f32 * 0.5 - 3.0).collect();
        let v = Volume3::new(dims, [0.7, 1.1, 0.9], [1.0, -2.0, 0.5], data).unwrap();
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let p = v.voxel_center(i, j, k);
                    assert_eq!(v.sample_trilinear(p) as f32, v.get(i, j, k));
                }
            }
        }
    }

    #[test]
    fn trilinear_midpoint_is_average() {
        // Neighbors equal along y and z; values 0 and 10 along x.
        let mut v = Volume3::zeros([2, 2, 2], [2.0, 1.0, 1.0], [0.0; 3]).unwrap();
        for j in 0..2 {
            for k in 0..2 {
                v.set(1, j, k, 10.0);
            }
        }
        let mid = Vector3::new(1.0, 0.5, 0.5);
        assert!((v.sample_trilinear(mid) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn trilinear_clamps_far_outside() {
        let data: Vec<f32> = (0..8).map(|x| x as f32).collect();
        let v = Volume3::new([2, 2, 2], [1.0; 3], [0.0; 3], data).unwrap();
        let far = Vector3::new(-100.0, -100.0, -100.0);
        assert_eq!(v.sample_trilinear(far), 0.0);
        let far = Vector3::new(100.0, 100.0, 100.0);
        assert_eq!(v.sample_trilinear(far), 7.0);
        // Gradient vanishes where the clamp is active.
        let (_, g) = v.sample_trilinear_with_grad(far);
        assert_eq!(g, Vector3::zeros());
    }

    #[test]
    fn trilinear_bounded_by_corner_values() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let dims = [5, 5, 5];
        let data: Vec<f32> = (0..125).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let v = Volume3::new(dims, [1.0; 3], [0.0; 3], data).unwrap();
        let (lo, hi) = v.min_max();
        for _ in 0..500 {
            let p = Vector3::new(
                rng.gen_range(0.0..4.0),
                rng.gen_range(0.0..4.0),
                rng.gen_range(0.0..4.0),
            );
            let s = v.sample_trilinear(p);
            assert!(s >= lo as f64 - 1e-9 && s <= hi as f64 + 1e-9);
        }
    }

    #[test]
    fn smooth_preserves_constant() {
        let v = Volume3::filled([6, 5, 7], [0.5, 0.5, 1.0], [0.0; 3], 3.25).unwrap();
        let s = gaussian_smooth(&v, [1.0, 2.0, 0.7]).unwrap();
        for &x in s.data() {
            assert!((x - 3.25).abs() / 3.25 < 1e-6);
        }
    }

    #[test]
    fn smooth_sigma_zero_is_identity() {
        let data: Vec<f32> = (0..60).map(|x| (x as f32).sin()).collect();
        let v = Volume3::new([3, 4, 5], [1.0; 3], [0.0; 3], data).unwrap();
        let s = gaussian_smooth(&v, [0.0; 3]).unwrap();
        assert_eq!(s.data(), v.data());
    }

    /// Dense-convolution oracle: build the full 3D kernel as the product of
    /// per-axis Gaussian weights and renormalize over the in-bounds support.
    fn dense_smooth_oracle(v: &Volume3, sigma_vox: f64) -> Vec<f64> {
        let r = (3.0 * sigma_vox).ceil() as isize;
        let w1: Vec<f64> = (-r..=r)
            .map(|t| (-((t as f64).powi(2)) / (2.0 * sigma_vox * sigma_vox)).exp())
            .collect();
        let dims = v.dims();
        let mut out = vec![0.0f64; v.voxel_count()];
        for k in 0..dims[2] as isize {
            for j in 0..dims[1] as isize {
                for i in 0..dims[0] as isize {
                    let mut acc = 0.0;
                    let mut wsum = 0.0;
                    for dk in -r..=r {
                        for dj in -r..=r {
                            for di in -r..=r {
                                let (ii, jj, kk) = (i + di, j + dj, k + dk);
                                if ii < 0
                                    || jj < 0
                                    || kk < 0
                                    || ii >= dims[0] as isize
                                    || jj >= dims[1] as isize
                                    || kk >= dims[2] as isize
                                {
                                    continue;
                                }
                                let w = w1[(di + r) as usize] * w1[(dj + r) as usize] * w1[(dk + r) as usize];
                                acc += w * v.get(ii as usize, jj as usize, kk as usize) as f64;
                                wsum += w;
                            }
                        }
                    }
                    out[(i + dims[0] as isize * (j + dims[1] as isize * k)) as usize] = acc / wsum;
                }
            }
        }
        out
    }

    #[test]
    fn smooth_impulse_matches_dense_oracle() {
        let mut v = Volume3::zeros([9, 9, 9], [1.0; 3], [0.0; 3]).unwrap();
        v.set(4, 4, 4, 1.0);
        let s = gaussian_smooth(&v, [1.0; 3]).unwrap();
        let oracle = dense_smooth_oracle(&v, 1.0);
        for (got, want) in s.data().iter().zip(&oracle) {
            assert!((*got as f64 - want).abs() < 1e-6, "got {got} want {want}");
        }
        // Center weight equals the normalized 1D weight cubed.
        let r = 3usize;
        let w1: Vec<f64> = (0..=2 * r)
            .map(|t| (-(((t as f64) - r as f64).powi(2)) / 2.0).exp())
            .collect();
        let norm: f64 = w1.iter().sum();
        let w0 = w1[r] / norm;
        assert!((s.get(4, 4, 4) as f64 - w0.powi(3)).abs() < 1e-6);
    }

    #[test]
    fn smooth_range_bounded() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f32> = (0..7 * 6 * 5).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let v = Volume3::new([7, 6, 5], [1.0; 3], [0.0; 3], data).unwrap();
        let (lo, hi) = v.min_max();
        let s = gaussian_smooth(&v, [1.5, 1.0, 2.0]).unwrap();
        for &x in s.data() {
            assert!(x >= lo - 1e-5 && x <= hi + 1e-5);
        }
    }

    #[test]
    fn gradient_of_ramp_is_constant_in_interior() {
        let v = ramp_volume([6, 5, 4], [0.5, 1.0, 1.0], 2.0);
        let g = gradient_central(&v);
        for k in 1..3 {
            for j in 1..4 {
                for i in 1..5 {
                    let idx = v.index(i, j, k);
                    assert!((g.channel(0)[idx] - 2.0).abs() < 1e-5);
                    assert!(g.channel(1)[idx].abs() < 1e-5);
                    assert!(g.channel(2)[idx].abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let v = Volume3::filled([4, 4, 4], [1.0; 3], [0.0; 3], 7.0).unwrap();
        let g = gradient_central(&v);
        for a in 0..3 {
            assert!(g.channel(a).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn gradient_matches_bruteforce_on_random_volume() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let dims = [5, 5, 5];
        let spacing = [0.7, 1.0, 1.3];
        let data: Vec<f32> = (0..125).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let v = Volume3::new(dims, spacing, [0.0; 3], data).unwrap();
        let g = gradient_central(&v);
        // Independent re-evaluation of the finite-difference formulas.
        for k in 0..5usize {
            for j in 0..5usize {
                for i in 0..5usize {
                    let idx = v.index(i, j, k);
                    let pos = [i, j, k];
                    for a in 0..3 {
                        let get = |p: [usize; 3]| v.get(p[0], p[1], p[2]) as f64;
                        let mut lo = pos;
                        let mut hi = pos;
                        let expected = if pos[a] == 0 {
                            hi[a] += 1;
                            (get(hi) - get(pos)) / spacing[a]
                        } else if pos[a] == 4 {
                            lo[a] -= 1;
                            (get(pos) - get(lo)) / spacing[a]
                        } else {
                            hi[a] += 1;
                            lo[a] -= 1;
                            (get(hi) - get(lo)) / (2.0 * spacing[a])
                        };
                        assert_eq!(g.channel(a)[idx], expected as f32);
                    }
                }
            }
        }
    }

    #[test]
    fn crop_full_range_is_identity() {
        let data: Vec<f32> = (0..24).map(|x| x as f32).collect();
        let v = Volume3::new([4, 3, 2], [1.0; 3], [5.0, 6.0, 7.0], data).unwrap();
        let c = crop(&v, [0, 0, 0], [4, 3, 2]).unwrap();
        assert_eq!(c, v);
    }

    #[test]
    fn crop_patient_sized_region() {
        let v = Volume3::zeros([128, 128, 96], [0.63, 0.63, 1.0], [0.0; 3]).unwrap();
        let c = crop(&v, [8, 10, 11], [120, 119, 85]).unwrap();
        assert_eq!(c.dims(), [112, 109, 74]);
        assert!((c.origin()[0] - 8.0 * 0.63).abs() < 1e-12);
    }

    #[test]
    fn crop_rejects_empty_axis() {
        let v = Volume3::zeros([4, 4, 4], [1.0; 3], [0.0; 3]).unwrap();
        assert!(crop(&v, [2, 0, 0], [2, 4, 4]).is_err());
    }

    #[test]
    fn downsample_geometry() {
        let v = Volume3::filled([8, 8, 8], [1.0; 3], [0.5, 0.5, 0.5], 2.0).unwrap();
        let d = downsample2(&v).unwrap();
        assert_eq!(d.dims(), [4, 4, 4]);
        assert_eq!(d.spacing(), [2.0, 2.0, 2.0]);
        assert_eq!(d.origin(), [0.5, 0.5, 0.5]);
        for &x in d.data() {
            assert!((x - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn downsample_preserves_ramp_at_interior_retained_centers() {
        let v = ramp_volume([12, 12, 12], [1.0; 3], 1.5);
        let d = downsample2(&v).unwrap();
        // Kernel radius at sigma = 1 voxel is 3; the ramp is exactly
        // preserved where the kernel support is complete.
        for k in 2..4 {
            for j in 2..4 {
                for i in 2..4 {
                    let x = d.origin()[0] + i as f64 * d.spacing()[0];
                    let got = d.get(i, j, k) as f64;
                    assert!((got - 1.5 * x).abs() < 1e-5, "got {got} want {}", 1.5 * x);
                }
            }
        }
    }

    #[test]
    fn downsample_rejects_small_dims() {
        let v = Volume3::zeros([3, 8, 8], [1.0; 3], [0.0; 3]).unwrap();
        assert!(downsample2(&v).is_err());
    }
}
