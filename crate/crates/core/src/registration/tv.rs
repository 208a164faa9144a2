//! Isotropic total-variation regularization of the control-point
//! displacement field.
//!
//! ```text
//! E_R = eta * sum_m ( sqrt( sum_{i,j} (grad_i k_j[m])^2 + eps^2 ) - eps )
//! ```
//!
//! with forward differences over one grid step (scaled to per-mm), a zero
//! (Neumann) difference at the far boundary, and a Charbonnier constant
//! `eps` that makes the energy differentiable. Subtracting `eps` per node
//! pins `E_R(0) = 0` exactly.

use nalgebra::Vector3;

use crate::error::{Error, Result};

use super::grid::ControlGrid;

pub(crate) struct TvEval {
    pub energy: f64,
    pub grad: Vec<Vector3<f64>>,
}

pub(crate) fn tv_energy_grad(grid: &ControlGrid, epsilon: f64, need_grad: bool) -> Result<TvEval> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter("tv epsilon must be positive".into()));
    }
    let gd = grid.grid_dims();
    let h = grid.node_spacing_mm();
    let eta = grid.cell_volume();
    let disp = grid.displacements();
    let strides = [1usize, gd[0], gd[0] * gd[1]];

    let mut energy = 0.0f64;
    let mut grad = if need_grad {
        vec![Vector3::zeros(); disp.len()]
    } else {
        Vec::new()
    };

    for c in 0..gd[2] {
        for b in 0..gd[1] {
            for a in 0..gd[0] {
                let m = a + gd[0] * (b + gd[1] * c);
                let here = disp[m];
                let pos = [a, b, c];
                let mut diffs = [[0.0f64; 3]; 3]; // [axis][component]
                let mut valid = [false; 3];
                let mut sq = 0.0f64;
                for i in 0..3 {
                    if pos[i] + 1 < gd[i] {
                        valid[i] = true;
                        let neigh = disp[m + strides[i]];
                        for j in 0..3 {
                            let d = (neigh[j] - here[j]) / h[i];
                            diffs[i][j] = d;
                            sq += d * d;
                        }
                    }
                }
                let s = (sq + epsilon * epsilon).sqrt();
                energy += s - epsilon;
                if need_grad {
                    for i in 0..3 {
                        if !valid[i] {
                            continue;
                        }
                        for j in 0..3 {
                            let t = diffs[i][j] / (s * h[i]);
                            grad[m][j] -= t;
                            grad[m + strides[i]][j] += t;
                        }
                    }
                }
            }
        }
    }
    energy *= eta;
    for g in &mut grad {
        *g *= eta;
    }
    Ok(TvEval { energy, grad })
}
