//! Local correlation coefficient dissimilarity and its analytic gradient
//! with respect to the control-point displacements.
//!
//! The metric is
//!
//! ```text
//! E_D = - sum_x  (m(FW) - m(F) m(W)) / sqrt((m(FF) - m(F)^2 + eps)(m(WW) - m(W)^2 + eps)) * v
//! ```
//!
//! where `W(x) = I_M(x + d(x))` is the warped moving image, `m(.)` is a
//! Gaussian-window local mean with bandwidth `lcc_sigma_voxels`, `v` is the
//! voxel volume, and `eps = lcc_epsilon * range(I_F)^2` keeps flat regions
//! finite. The gradient chains through the local means (adjoint smoothing),
//! the trilinear sampling of the moving image, and the trilinear control
//! weights. Border renormalization makes the smoothing non-symmetric, so
//! the backward pass uses the transposed operator.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::conv::{gaussian_kernel, smooth3, smooth3_transpose, Kernel1D};
use crate::volume::Volume3;

use super::grid::ControlGrid;

/// Per-axis cell lookup tables for voxel -> control-cell interpolation.
struct CellTables {
    base: [Vec<usize>; 3],
    frac: [Vec<f64>; 3],
}

fn cell_tables(grid: &ControlGrid, dims: [usize; 3]) -> CellTables {
    let mut base: [Vec<usize>; 3] = [vec![], vec![], vec![]];
    let mut frac: [Vec<f64>; 3] = [vec![], vec![], vec![]];
    for a in 0..3 {
        let k = grid.spacing_voxels()[a];
        let gd = grid.grid_dims()[a];
        base[a] = Vec::with_capacity(dims[a]);
        frac[a] = Vec::with_capacity(dims[a]);
        for i in 0..dims[a] {
            let g = i as f64 / k as f64;
            let b = ((i / k) as usize).min(gd - 2);
            base[a].push(b);
            frac[a].push(g - b as f64);
        }
    }
    CellTables { base, frac }
}

pub(crate) struct LccEval {
    pub energy: f64,
    pub grad: Vec<Vector3<f64>>,
}

pub(crate) fn lcc_energy_grad(
    fixed: &Volume3,
    moving: &Volume3,
    grid: &ControlGrid,
    sigma_voxels: f64,
    epsilon_rel: f64,
    need_grad: bool,
) -> Result<LccEval> {
    if !fixed.same_geometry(moving) {
        return Err(Error::GeometryMismatch(
            "lcc_energy: fixed and moving volumes must share geometry".into(),
        ));
    }
    if !grid.anchored_to(fixed) {
        return Err(Error::GeometryMismatch(
            "lcc_energy: control grid is not anchored to the fixed geometry".into(),
        ));
    }
    if !(sigma_voxels > 0.0) {
        return Err(Error::InvalidParameter("lcc sigma must be positive".into()));
    }
    let kernel: Kernel1D = gaussian_kernel(sigma_voxels).expect("positive sigma");

    let dims = fixed.dims();
    let (nx, ny) = (dims[0], dims[1]);
    let n = fixed.voxel_count();
    let plane = nx * ny;
    let v = fixed.voxel_volume();
    let tables = cell_tables(grid, dims);

    // Warp pass: W(x) = I_M(x + d(x)) plus the interpolant gradient at the
    // warped position (needed for the chain rule).
    let mut w = vec![0.0f64; n];
    let mut gw = vec![[0.0f64; 3]; n];
    let disp = grid.displacements();
    let gdx = grid.grid_dims();
    w.par_chunks_mut(plane)
        .zip(gw.par_chunks_mut(plane))
        .enumerate()
        .for_each(|(kz, (wp, gp))| {
            let bz = tables.base[2][kz];
            let fz = tables.frac[2][kz];
            for j in 0..ny {
                let by = tables.base[1][j];
                let fy = tables.frac[1][j];
                for i in 0..nx {
                    let bx = tables.base[0][i];
                    let fx = tables.frac[0][i];
                    let mut d = Vector3::zeros();
                    for corner in 0..8usize {
                        let (da, db, dc) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
                        let wgt = (if da == 1 { fx } else { 1.0 - fx })
                            * (if db == 1 { fy } else { 1.0 - fy })
                            * (if dc == 1 { fz } else { 1.0 - fz });
                        d += wgt * disp[bx + da + gdx[0] * (by + db + gdx[1] * (bz + dc))];
                    }
                    let pos = fixed.voxel_center(i, j, kz) + d;
                    let (val, g) = moving.sample_trilinear_with_grad(pos);
                    let idx = i + nx * j;
                    wp[idx] = val;
                    gp[idx] = [g[0], g[1], g[2]];
                }
            }
        });

    let f: Vec<f64> = fixed.data().iter().map(|&x| x as f64).collect();
    let (lo, hi) = fixed.min_max();
    let range = (hi as f64 - lo as f64).max(1e-12);
    let eps = epsilon_rel * range * range;

    let mut scratch = vec![0.0f64; n];
    let smooth = |src: &[f64], scratch: &mut Vec<f64>| -> Vec<f64> {
        let mut buf = src.to_vec();
        smooth3(&mut buf, scratch, dims, &kernel);
        buf
    };

    let sf = smooth(&f, &mut scratch);
    let sw = smooth(&w, &mut scratch);
    let ff: Vec<f64> = f.iter().map(|x| x * x).collect();
    let sff = smooth(&ff, &mut scratch);
    drop(ff);
    let ww: Vec<f64> = w.iter().map(|x| x * x).collect();
    let sww = smooth(&ww, &mut scratch);
    drop(ww);
    let fw: Vec<f64> = f.iter().zip(&w).map(|(a, b)| a * b).collect();
    let sfw = smooth(&fw, &mut scratch);
    drop(fw);

    let mut rho_sum = 0.0f64;
    // p = 1/sqrt(bc), q = rho/c; both feed the adjoint pass.
    let mut p = vec![0.0f64; n];
    let mut q = vec![0.0f64; n];
    for i in 0..n {
        let a = sfw[i] - sf[i] * sw[i];
        let b = sff[i] - sf[i] * sf[i] + eps;
        let c = sww[i] - sw[i] * sw[i] + eps;
        let denom = (b * c).sqrt();
        let rho = a / denom;
        rho_sum += rho;
        if need_grad {
            p[i] = 1.0 / denom;
            q[i] = rho / c;
        }
    }
    let energy = -v * rho_sum;
    if !energy.is_finite() {
        return Err(Error::Numeric("lcc energy is not finite".into()));
    }
    if !need_grad {
        return Ok(LccEval {
            energy,
            grad: Vec::new(),
        });
    }

    let mut pf: Vec<f64> = p.iter().zip(&sf).map(|(a, b)| a * b).collect();
    let mut qw: Vec<f64> = q.iter().zip(&sw).map(|(a, b)| a * b).collect();
    smooth3_transpose(&mut p, &mut scratch, dims, &kernel);
    smooth3_transpose(&mut pf, &mut scratch, dims, &kernel);
    smooth3_transpose(&mut q, &mut scratch, dims, &kernel);
    smooth3_transpose(&mut qw, &mut scratch, dims, &kernel);

    // dE/dW(y), reusing the W buffer.
    let mut u = w;
    u.par_iter_mut().enumerate().for_each(|(i, ui)| {
        *ui = -v * (f[i] * p[i] - pf[i] - *ui * q[i] + qw[i]);
    });

    // Scatter through the trilinear control weights. Sequential on purpose:
    // the accumulation order must not depend on scheduling.
    let mut grad = vec![Vector3::zeros(); grid.num_points()];
    for kz in 0..dims[2] {
        let bz = tables.base[2][kz];
        let fz = tables.frac[2][kz];
        for j in 0..ny {
            let by = tables.base[1][j];
            let fy = tables.frac[1][j];
            let row = nx * (j + ny * kz);
            for i in 0..nx {
                let idx = row + i;
                let g = gw[idx];
                let ui = u[idx];
                let coeff = Vector3::new(ui * g[0], ui * g[1], ui * g[2]);
                let bx = tables.base[0][i];
                let fx = tables.frac[0][i];
                let wx = [1.0 - fx, fx];
                let wy = [1.0 - fy, fy];
                let wz = [1.0 - fz, fz];
                for corner in 0..8usize {
                    let (da, db, dc) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
                    let wgt = wx[da] * wy[db] * wz[dc];
                    grad[bx + da + gdx[0] * (by + db + gdx[1] * (bz + dc))] += wgt * coeff;
                }
            }
        }
    }

    Ok(LccEval { energy, grad })
}
