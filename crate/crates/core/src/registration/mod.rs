//! Parametric deformable registration: local correlation coefficient
//! dissimilarity plus isotropic total-variation regularization of the
//! control-point displacements, minimized coarse-to-fine with L-BFGS.
//!
//! Convention: the displacement field lives on the fixed-image domain and
//! the moving image is sampled at `x + d(x)`. When the deformed frame is
//! fixed and the undeformed frame is moving, `d` pulls fixed-frame points
//! back toward the undeformed geometry; downstream kinematics flips the
//! sign to report physical motion.

mod grid;
mod lbfgs;
mod lcc;
mod tv;

use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{downsample2, Volume3};

pub use grid::{dense_field, ControlGrid};

/// Registration parameters. Defaults follow the artifact-wide choices:
/// `lambda = 0.05`, control spacing `(6, 6, 6)` voxels, LCC bandwidth 2
/// voxels, 3 pyramid levels, 200 iterations per level.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    /// Regularization coefficient weighting the TV term.
    pub lambda: f64,
    /// Gaussian bandwidth of the LCC local means, in voxels.
    pub lcc_sigma_voxels: f64,
    /// Control-point spacing in voxels per axis.
    pub control_spacing_voxels: [usize; 3],
    /// Multiresolution levels (level 0 is full resolution).
    pub pyramid_levels: usize,
    /// Iteration cap per level.
    pub max_iterations: usize,
    /// Relative gradient tolerance: a level stops when the gradient
    /// max-norm falls below this fraction of its initial value.
    pub gradient_tolerance: f64,
    /// Charbonnier smoothing constant of the TV term (mm).
    pub tv_epsilon_mm: f64,
    /// LCC variance floor, relative to the squared fixed-image range.
    pub lcc_epsilon: f64,
    /// Reserved for seeded components; the solver itself is deterministic.
    pub rng_seed: u64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            lcc_sigma_voxels: 2.0,
            control_spacing_voxels: [6, 6, 6],
            pyramid_levels: 3,
            max_iterations: 200,
            gradient_tolerance: 1e-5,
            tv_epsilon_mm: 1e-3,
            lcc_epsilon: 1e-6,
            rng_seed: 0,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::Config("registration.lambda must be >= 0".into()));
        }
        if !(self.lcc_sigma_voxels > 0.0) {
            return Err(Error::Config("registration.lcc_sigma_voxels must be > 0".into()));
        }
        if self.control_spacing_voxels.iter().any(|&k| k == 0) {
            return Err(Error::Config(
                "registration.control_spacing_voxels must be >= 1 per axis".into(),
            ));
        }
        if self.pyramid_levels == 0 {
            return Err(Error::Config("registration.pyramid_levels must be >= 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("registration.max_iterations must be >= 1".into()));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::Config("registration.gradient_tolerance must be > 0".into()));
        }
        if !(self.tv_epsilon_mm > 0.0) {
            return Err(Error::Config("registration.tv_epsilon_mm must be > 0".into()));
        }
        if !(self.lcc_epsilon > 0.0) {
            return Err(Error::Config("registration.lcc_epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// One accepted iterate of the descent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub level: usize,
    pub iteration: usize,
    pub e_data: f64,
    pub e_reg: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct RegistrationResult {
    pub control_grid: ControlGrid,
    pub objective_history: Vec<HistoryEntry>,
    pub converged: bool,
    pub iterations_used: Vec<usize>,
}

impl RegistrationResult {
    /// Objective history as CSV with columns level, iteration, E_D, E_R, total.
    pub fn write_history_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("level,iteration,e_data,e_reg,total\n");
        for e in &self.objective_history {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.level, e.iteration, e.e_data, e.e_reg, e.total
            ));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// LCC dissimilarity `E_D` and its gradient per control point.
pub fn lcc_energy(
    fixed: &Volume3,
    moving: &Volume3,
    grid: &ControlGrid,
    cfg: &RegistrationConfig,
) -> Result<(f64, Vec<Vector3<f64>>)> {
    let eval = lcc::lcc_energy_grad(fixed, moving, grid, cfg.lcc_sigma_voxels, cfg.lcc_epsilon, true)?;
    Ok((eval.energy, eval.grad))
}

/// TV regularization `E_R` and its gradient per control point.
pub fn tv_energy(grid: &ControlGrid, cfg: &RegistrationConfig) -> Result<(f64, Vec<Vector3<f64>>)> {
    let eval = tv::tv_energy_grad(grid, cfg.tv_epsilon_mm, true)?;
    Ok((eval.energy, eval.grad))
}

/// Total objective `E_D + lambda * E_R` and its gradient.
pub fn objective(
    fixed: &Volume3,
    moving: &Volume3,
    grid: &ControlGrid,
    cfg: &RegistrationConfig,
) -> Result<(f64, Vec<Vector3<f64>>)> {
    let (e_d, mut grad) = lcc_energy(fixed, moving, grid, cfg)?;
    let (e_r, g_r) = tv_energy(grid, cfg)?;
    for (g, gr) in grad.iter_mut().zip(&g_r) {
        *g += cfg.lambda * gr;
    }
    Ok((e_d + cfg.lambda * e_r, grad))
}

fn flatten(d: &[Vector3<f64>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(d.len() * 3);
    for v in d {
        out.extend_from_slice(&[v[0], v[1], v[2]]);
    }
    out
}

fn unflatten(x: &[f64]) -> Vec<Vector3<f64>> {
    x.chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect()
}

/// Multiresolution TV-regularized registration of `moving` onto `fixed`.
///
/// The pyramid is built by repeated smoothing/decimation; control
/// displacements are upsampled between levels by trilinear interpolation.
/// Each level runs L-BFGS with backtracking until the gradient max-norm
/// drops below `gradient_tolerance` times its initial value or the
/// iteration cap is reached. The result is deterministic for fixed inputs.
pub fn register(fixed: &Volume3, moving: &Volume3, cfg: &RegistrationConfig) -> Result<RegistrationResult> {
    cfg.validate()?;
    if !fixed.same_geometry(moving) {
        return Err(Error::GeometryMismatch(
            "register: fixed and moving volumes must share geometry".into(),
        ));
    }

    // Build the pyramid; stop early if a level would get too small.
    let mut pyramid = vec![(fixed.clone(), moving.clone())];
    for _ in 1..cfg.pyramid_levels {
        let (pf, pm) = pyramid.last().unwrap();
        if pf.dims().iter().any(|&d| d < 4) {
            break;
        }
        pyramid.push((downsample2(pf)?, downsample2(pm)?));
    }

    let mut history: Vec<HistoryEntry> = Vec::new();
    let mut iterations_used = vec![0usize; pyramid.len()];
    let mut converged = false;
    let mut prev_grid: Option<ControlGrid> = None;

    for level in (0..pyramid.len()).rev() {
        let (lf, lm) = &pyramid[level];
        let mut grid = ControlGrid::covering(lf, cfg.control_spacing_voxels)?;
        if let Some(prev) = &prev_grid {
            let gd = grid.grid_dims();
            let mut init = Vec::with_capacity(grid.num_points());
            for c in 0..gd[2] {
                for b in 0..gd[1] {
                    for a in 0..gd[0] {
                        init.push(prev.interpolate_displacement(grid.node_position(a, b, c)));
                    }
                }
            }
            grid.set_displacements(init)?;
        }

        let mut work = grid.clone();
        let eval = |x: &[f64], need_grad: bool| -> Result<lbfgs::ObjectiveEval> {
            let mut g = work.clone();
            g.set_displacements(unflatten(x))?;
            let data = lcc::lcc_energy_grad(lf, lm, &g, cfg.lcc_sigma_voxels, cfg.lcc_epsilon, need_grad)?;
            let reg = tv::tv_energy_grad(&g, cfg.tv_epsilon_mm, need_grad)?;
            let total = data.energy + cfg.lambda * reg.energy;
            if !total.is_finite() {
                return Err(Error::Numeric("registration objective is not finite".into()));
            }
            let grad = if need_grad {
                let mut grad = data.grad;
                for (gi, ri) in grad.iter_mut().zip(&reg.grad) {
                    *gi += cfg.lambda * ri;
                }
                flatten(&grad)
            } else {
                Vec::new()
            };
            Ok(lbfgs::ObjectiveEval {
                e_data: data.energy,
                e_reg: reg.energy,
                total,
                grad,
            })
        };

        let outcome = lbfgs::minimize(
            flatten(grid.displacements()),
            eval,
            &lbfgs::MinimizeOptions {
                max_iterations: cfg.max_iterations,
                gradient_tolerance_rel: cfg.gradient_tolerance,
                ..Default::default()
            },
        )?;

        for (it, (e_d, e_r, total)) in outcome.history.iter().enumerate() {
            history.push(HistoryEntry {
                level,
                iteration: it,
                e_data: *e_d,
                e_reg: *e_r,
                total: *total,
            });
        }
        iterations_used[level] = outcome.iterations;
        converged = outcome.converged;
        work.set_displacements(unflatten(&outcome.x))?;
        prev_grid = Some(work);
    }

    Ok(RegistrationResult {
        control_grid: prev_grid.expect("at least one pyramid level"),
        objective_history: history,
        converged,
        iterations_used,
    })
}
