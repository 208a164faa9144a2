//! Control-point displacement grids.
//!
//! A [`ControlGrid`] parametrizes a dense displacement field by first-order
//! (trilinear) interpolation of per-node displacement vectors, so every
//! interpolated component is bounded by the surrounding node values. The
//! grid is anchored to a reference volume geometry and always covers the
//! whole image domain, extending one layer past the last voxel where the
//! image extent is not a multiple of the node spacing.

use std::fs;
use std::io::Write;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::volume::{VectorVolume3, Volume3};

#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    spacing_voxels: [usize; 3],
    grid_dims: [usize; 3],
    ref_dims: [usize; 3],
    ref_spacing: [f64; 3],
    ref_origin: [f64; 3],
    /// Node displacements in mm, x-fastest.
    displacements: Vec<Vector3<f64>>,
}

impl ControlGrid {
    /// Zero-displacement grid covering the given reference geometry.
    pub fn covering(reference: &Volume3, spacing_voxels: [usize; 3]) -> Result<Self> {
        if spacing_voxels.iter().any(|&k| k == 0) {
            return Err(Error::InvalidParameter(
                "control spacing must be at least 1 voxel per axis".into(),
            ));
        }
        let ref_dims = reference.dims();
        let mut grid_dims = [0usize; 3];
        for a in 0..3 {
            grid_dims[a] = (ref_dims[a] - 1).div_ceil(spacing_voxels[a]) + 1;
        }
        let count = grid_dims[0] * grid_dims[1] * grid_dims[2];
        Ok(Self {
            spacing_voxels,
            grid_dims,
            ref_dims,
            ref_spacing: reference.spacing(),
            ref_origin: reference.origin(),
            displacements: vec![Vector3::zeros(); count],
        })
    }

    pub fn grid_dims(&self) -> [usize; 3] {
        self.grid_dims
    }

    pub fn spacing_voxels(&self) -> [usize; 3] {
        self.spacing_voxels
    }

    pub fn ref_dims(&self) -> [usize; 3] {
        self.ref_dims
    }

    pub fn ref_spacing(&self) -> [f64; 3] {
        self.ref_spacing
    }

    pub fn ref_origin(&self) -> [f64; 3] {
        self.ref_origin
    }

    /// Number of control points M.
    pub fn num_points(&self) -> usize {
        self.displacements.len()
    }

    /// Grid cell volume eta = v * K1 K2 K3 in mm^3.
    pub fn cell_volume(&self) -> f64 {
        self.ref_spacing[0]
            * self.ref_spacing[1]
            * self.ref_spacing[2]
            * (self.spacing_voxels[0] * self.spacing_voxels[1] * self.spacing_voxels[2]) as f64
    }

    /// Physical node spacing per axis in mm.
    pub fn node_spacing_mm(&self) -> [f64; 3] {
        [
            self.ref_spacing[0] * self.spacing_voxels[0] as f64,
            self.ref_spacing[1] * self.spacing_voxels[1] as f64,
            self.ref_spacing[2] * self.spacing_voxels[2] as f64,
        ]
    }

    pub fn displacements(&self) -> &[Vector3<f64>] {
        &self.displacements
    }

    pub fn displacements_mut(&mut self) -> &mut [Vector3<f64>] {
        &mut self.displacements
    }

    pub fn set_displacements(&mut self, d: Vec<Vector3<f64>>) -> Result<()> {
        if d.len() != self.displacements.len() {
            return Err(Error::InvalidParameter(format!(
                "displacement count {} does not match grid with {} nodes",
                d.len(),
                self.displacements.len()
            )));
        }
        self.displacements = d;
        Ok(())
    }

    #[inline]
    pub fn node_index(&self, a: usize, b: usize, c: usize) -> usize {
        a + self.grid_dims[0] * (b + self.grid_dims[1] * c)
    }

    /// Physical position of node (a, b, c) in mm.
    pub fn node_position(&self, a: usize, b: usize, c: usize) -> Vector3<f64> {
        Vector3::new(
            self.ref_origin[0] + (a * self.spacing_voxels[0]) as f64 * self.ref_spacing[0],
            self.ref_origin[1] + (b * self.spacing_voxels[1]) as f64 * self.ref_spacing[1],
            self.ref_origin[2] + (c * self.spacing_voxels[2]) as f64 * self.ref_spacing[2],
        )
    }

    /// Cell base index and fractional coordinates for a point given in
    /// continuous reference-voxel coordinates (clamped to the grid hull).
    #[inline]
    pub fn cell_of_voxel_coords(&self, u: [f64; 3]) -> ([usize; 3], [f64; 3]) {
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let g = (u[a] / self.spacing_voxels[a] as f64).clamp(0.0, (self.grid_dims[a] - 1) as f64);
            let b = (g.floor() as usize).min(self.grid_dims[a] - 2);
            base[a] = b;
            frac[a] = g - b as f64;
        }
        (base, frac)
    }

    /// Trilinear interpolation of node displacements at a physical point.
    /// Points outside the grid hull are clamped to it.
    pub fn interpolate_displacement(&self, p: Vector3<f64>) -> Vector3<f64> {
        let u = [
            (p[0] - self.ref_origin[0]) / self.ref_spacing[0],
            (p[1] - self.ref_origin[1]) / self.ref_spacing[1],
            (p[2] - self.ref_origin[2]) / self.ref_spacing[2],
        ];
        let (base, f) = self.cell_of_voxel_coords(u);
        let mut out = Vector3::zeros();
        for corner in 0..8usize {
            let (da, db, dc) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
            let w = (if da == 1 { f[0] } else { 1.0 - f[0] })
                * (if db == 1 { f[1] } else { 1.0 - f[1] })
                * (if dc == 1 { f[2] } else { 1.0 - f[2] });
            out += w * self.displacements[self.node_index(base[0] + da, base[1] + db, base[2] + dc)];
        }
        out
    }

    /// True when the grid is anchored to the same geometry as `vol`.
    pub fn anchored_to(&self, vol: &Volume3) -> bool {
        self.ref_dims == vol.dims()
            && self
                .ref_spacing
                .iter()
                .zip(&vol.spacing())
                .all(|(a, b)| (a - b).abs() <= 1e-9)
            && self
                .ref_origin
                .iter()
                .zip(&vol.origin())
                .all(|(a, b)| (a - b).abs() <= 1e-6)
    }

    /// Largest node displacement magnitude in mm.
    pub fn max_displacement(&self) -> f64 {
        self.displacements.iter().map(|d| d.norm()).fold(0.0, f64::max)
    }

    /// Serializes as a sidecar text header plus a raw little-endian f64
    /// array, x-fastest and component-interleaved (dx dy dz per node).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let data_path = path.with_extension("raw");
        let data_name = data_path
            .file_name()
            .ok_or_else(|| Error::InvalidParameter(format!("{}: not a file path", path.display())))?
            .to_string_lossy()
            .into_owned();
        let mut header = String::new();
        let gd = self.grid_dims;
        let sv = self.spacing_voxels;
        let rd = self.ref_dims;
        let rs = self.ref_spacing;
        let ro = self.ref_origin;
        header.push_str(&format!("grid_dims = {} {} {}\n", gd[0], gd[1], gd[2]));
        header.push_str(&format!("spacing_voxels = {} {} {}\n", sv[0], sv[1], sv[2]));
        header.push_str(&format!("ref_dims = {} {} {}\n", rd[0], rd[1], rd[2]));
        header.push_str(&format!("ref_spacing_mm = {} {} {}\n", rs[0], rs[1], rs[2]));
        header.push_str(&format!("ref_origin_mm = {} {} {}\n", ro[0], ro[1], ro[2]));
        header.push_str(&format!("data_file = {data_name}\n"));
        fs::write(path, header).map_err(|e| Error::io(path, e))?;

        let mut flat = Vec::with_capacity(self.displacements.len() * 3);
        for d in &self.displacements {
            flat.extend_from_slice(&[d[0], d[1], d[2]]);
        }
        let mut bytes = vec![0u8; flat.len() * 8];
        LittleEndian::write_f64_into(&flat, &mut bytes);
        let mut f = fs::File::create(&data_path).map_err(|e| Error::io(&data_path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&data_path, e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut grid_dims = None;
        let mut spacing_voxels = None;
        let mut ref_dims = None;
        let mut ref_spacing = None;
        let mut ref_origin = None;
        let mut data_file = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::UnsupportedFormat(format!("malformed grid header line '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            let triple_usize = |v: &str| -> Result<[usize; 3]> {
                let p: Vec<usize> = v
                    .split_whitespace()
                    .map(|s| s.parse().map_err(|_| Error::UnsupportedFormat(format!("bad value '{s}'"))))
                    .collect::<Result<_>>()?;
                if p.len() != 3 {
                    return Err(Error::UnsupportedFormat(format!("'{key}' needs 3 values")));
                }
                Ok([p[0], p[1], p[2]])
            };
            let triple_f64 = |v: &str| -> Result<[f64; 3]> {
                let p: Vec<f64> = v
                    .split_whitespace()
                    .map(|s| s.parse().map_err(|_| Error::UnsupportedFormat(format!("bad value '{s}'"))))
                    .collect::<Result<_>>()?;
                if p.len() != 3 {
                    return Err(Error::UnsupportedFormat(format!("'{key}' needs 3 values")));
                }
                Ok([p[0], p[1], p[2]])
            };
            match key {
                "grid_dims" => grid_dims = Some(triple_usize(value)?),
                "spacing_voxels" => spacing_voxels = Some(triple_usize(value)?),
                "ref_dims" => ref_dims = Some(triple_usize(value)?),
                "ref_spacing_mm" => ref_spacing = Some(triple_f64(value)?),
                "ref_origin_mm" => ref_origin = Some(triple_f64(value)?),
                "data_file" => data_file = Some(value.to_string()),
                other => return Err(Error::UnsupportedFormat(format!("unknown grid header key '{other}'"))),
            }
        }
        let missing = |k: &str| Error::UnsupportedFormat(format!("grid header missing '{k}'"));
        let grid_dims = grid_dims.ok_or_else(|| missing("grid_dims"))?;
        let spacing_voxels = spacing_voxels.ok_or_else(|| missing("spacing_voxels"))?;
        let ref_dims = ref_dims.ok_or_else(|| missing("ref_dims"))?;
        let ref_spacing = ref_spacing.ok_or_else(|| missing("ref_spacing_mm"))?;
        let ref_origin = ref_origin.ok_or_else(|| missing("ref_origin_mm"))?;
        let data_file = data_file.ok_or_else(|| missing("data_file"))?;

        let data_path = path.parent().unwrap_or_else(|| Path::new(".")).join(&data_file);
        let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
        let count = grid_dims[0] * grid_dims[1] * grid_dims[2];
        if bytes.len() != count * 3 * 8 {
            return Err(Error::UnsupportedFormat(format!(
                "{}: grid data holds {} bytes, expected {}",
                data_path.display(),
                bytes.len(),
                count * 24
            )));
        }
        let mut flat = vec![0.0f64; count * 3];
        LittleEndian::read_f64_into(&bytes, &mut flat);
        let displacements = flat.chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect();
        Ok(Self {
            spacing_voxels,
            grid_dims,
            ref_dims,
            ref_spacing,
            ref_origin,
            displacements,
        })
    }
}

/// Dense per-voxel evaluation of the grid over its anchored geometry.
pub fn dense_field(grid: &ControlGrid, geometry: &Volume3) -> Result<VectorVolume3> {
    if !grid.anchored_to(geometry) {
        return Err(Error::GeometryMismatch(
            "dense_field: grid is not anchored to the given geometry".into(),
        ));
    }
    let dims = geometry.dims();
    let mut out = VectorVolume3::zeros(dims, geometry.spacing(), geometry.origin())?;
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let d = grid.interpolate_displacement(geometry.voxel_center(i, j, k));
                out.set(i, j, k, d);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn reference() -> Volume3 {
        Volume3::zeros([13, 11, 9], [0.5, 1.0, 2.0], [1.0, 2.0, 3.0]).unwrap()
    }

    #[test]
    fn grid_covers_domain() {
        let v = reference();
        let g = ControlGrid::covering(&v, [4, 4, 4]).unwrap();
        for a in 0..3 {
            assert!((g.grid_dims()[a] - 1) * g.spacing_voxels()[a] >= v.dims()[a] - 1);
        }
        assert!(g.cell_volume() > 0.0);
    }

    #[test]
    fn interpolation_reproduces_nodes() {
        let v = reference();
        let mut g = ControlGrid::covering(&v, [3, 3, 3]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for d in g.displacements_mut() {
            *d = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        }
        let gd = g.grid_dims();
        for c in 0..gd[2] {
            for b in 0..gd[1] {
                for a in 0..gd[0] {
                    let p = g.node_position(a, b, c);
                    let want = g.displacements()[g.node_index(a, b, c)];
                    let got = g.interpolate_displacement(p);
                    assert!((got - want).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn interpolation_midpoint_linearity() {
        let v = reference();
        let mut g = ControlGrid::covering(&v, [4, 4, 4]).unwrap();
        let idx = g.node_index(1, 0, 0);
        g.displacements_mut()[idx] = Vector3::new(2.0, 0.0, 0.0);
        let a = g.node_position(0, 0, 0);
        let b = g.node_position(1, 0, 0);
        let mid = 0.5 * (a + b);
        let got = g.interpolate_displacement(mid);
        assert!((got - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn interpolation_bounded_by_cell_corners() {
        let v = reference();
        let mut g = ControlGrid::covering(&v, [4, 4, 4]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for d in g.displacements_mut() {
            *d = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        }
        for _ in 0..1000 {
            let p = Vector3::new(rng.gen_range(1.0..7.0), rng.gen_range(2.0..12.0), rng.gen_range(3.0..19.0));
            let u = [
                (p[0] - 1.0) / 0.5,
                (p[1] - 2.0) / 1.0,
                (p[2] - 3.0) / 2.0,
            ];
            let (base, _) = g.cell_of_voxel_coords(u);
            let got = g.interpolate_displacement(p);
            for c in 0..3 {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for corner in 0..8usize {
                    let d = g.displacements()[g.node_index(
                        base[0] + (corner & 1),
                        base[1] + ((corner >> 1) & 1),
                        base[2] + ((corner >> 2) & 1),
                    )];
                    lo = lo.min(d[c]);
                    hi = hi.max(d[c]);
                }
                assert!(got[c] >= lo - 1e-12 && got[c] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn grid_save_load_round_trip() {
        let dir = tempfile::TempDir::new().unwrap();
        let v = reference();
        let mut g = ControlGrid::covering(&v, [5, 4, 3]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for d in g.displacements_mut() {
            *d = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let p = dir.path().join("grid.cg");
        g.save(&p).unwrap();
        let r = ControlGrid::load(&p).unwrap();
        assert_eq!(r, g);
    }

    #[test]
    fn dense_field_consistency() {
        let v = reference();
        let mut g = ControlGrid::covering(&v, [4, 4, 4]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for d in g.displacements_mut() {
            *d = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let f = dense_field(&g, &v).unwrap();
        // Spot check: dense values equal direct interpolation at centers.
        for n in 0..100 {
            let i = (n * 7) % v.dims()[0];
            let j = (n * 5) % v.dims()[1];
            let k = (n * 3) % v.dims()[2];
            let want = g.interpolate_displacement(v.voxel_center(i, j, k));
            let got = f.get(i, j, k);
            assert!((got - want).norm() < 1e-6);
        }
    }

    #[test]
    fn dense_field_zero_and_constant() {
        let v = reference();
        let g = ControlGrid::covering(&v, [4, 4, 4]).unwrap();
        let f = dense_field(&g, &v).unwrap();
        for c in 0..3 {
            assert!(f.channel(c).iter().all(|&x| x == 0.0));
        }
        let mut g2 = ControlGrid::covering(&v, [4, 4, 4]).unwrap();
        for d in g2.displacements_mut() {
            *d = Vector3::new(0.5, -1.0, 2.0);
        }
        let f2 = dense_field(&g2, &v).unwrap();
        assert!(f2.channel(0).iter().all(|&x| (x - 0.5).abs() < 1e-6));
        assert!(f2.channel(1).iter().all(|&x| (x + 1.0).abs() < 1e-6));
        assert!(f2.channel(2).iter().all(|&x| (x - 2.0).abs() < 1e-6));
    }
}
