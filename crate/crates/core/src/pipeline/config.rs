//! Pipeline configuration: one TOML file drives every stage.
//!
//! All keys have defaults, so an empty config runs the default phantom
//! study end to end. Unknown keys are rejected. Key schema (defaults in
//! parentheses):
//!
//! ```text
//! output_dir = "out"                 # every artifact lands here
//!
//! [input]                            # optional external volumes
//! fixed  = "path.nii|.vol"           # (generated systolic phantom)
//! moving = "path"                    # (generated diastolic phantom)
//! mask   = "path"                    # (generated wall mask)
//!
//! [phantom]                          # see synthetic::PhantomSpec
//! dims = [112, 112, 74]
//! spacing_mm = [0.63, 0.63, 1.0]
//! inner_radius_mm = 22.0
//! outer_radius_mm = 25.0
//! intensities = [-50.0, 120.0, 300.0]
//! blur_sigma_voxels = 0.8
//! noise_sigma = 10.0
//! rng_seed = 42
//!
//! [field]                            # analytic truth displacement
//! dr_max_mm = 1.0
//! axial_max_mm = 0.0
//! profile = "sin2"                   # or "constant"
//!
//! [registration]                     # see registration::RegistrationConfig
//! lambda = 0.05
//! lcc_sigma_voxels = 2.0
//! control_spacing_voxels = [6, 6, 6]
//! pyramid_levels = 3
//! max_iterations = 200
//! gradient_tolerance = 1e-5
//! tv_epsilon_mm = 1e-3
//! lcc_epsilon = 1e-6
//! rng_seed = 0
//!
//! [surface]
//! iso = 0.5                          # mask threshold
//! k_neighbors_normals = 30
//!
//! [curvature]                        # see surface::CurvatureParams
//! k_neighbors = 60
//! inlier_threshold_mm = 0.5
//! max_iterations = 500
//! axis_cone_deg = 30.0
//! reference_axis = [0.0, 0.0, 1.0]
//! r_min_mm = 5.0
//! r_max_mm = 100.0
//! rng_seed = 0
//!
//! [kinematics]
//! sign = -1.0                        # fixed-frame pullback -> motion
//! signed_percentiles = false
//! crop_lo = [0, 0, 0]                # optional voxel-index window
//! crop_hi = [112, 112, 74]           # (omit both to use all points)
//!
//! [verify]
//! r2_min_normal = 0.95
//! nrmse_max_normal = 0.05
//! strain_p99_rel_tol = 0.10
//! qq_points = 20
//! histogram_bins = 30
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registration::RegistrationConfig;
use crate::surface::CurvatureParams;
use crate::synthetic::{AnalyticField, AxialProfile, PhantomSpec};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub fixed: Option<PathBuf>,
    pub moving: Option<PathBuf>,
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub dr_max_mm: f64,
    pub axial_max_mm: f64,
    pub profile: AxialProfile,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            dr_max_mm: 1.0,
            axial_max_mm: 0.0,
            profile: AxialProfile::Sin2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceConfig {
    pub iso: f64,
    pub k_neighbors_normals: usize,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            iso: 0.5,
            k_neighbors_normals: 30,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KinematicsConfig {
    /// Converts the registration's fixed-frame pullback field into the
    /// physical motion direction (+1 or -1).
    pub sign: f64,
    /// Compute the 99th-percentile summaries over signed values instead of
    /// absolute values.
    pub signed_percentiles: bool,
    /// Optional voxel-index crop window applied to the wall points before
    /// kinematics, in the registration reference geometry.
    pub crop_lo: Option<[usize; 3]>,
    pub crop_hi: Option<[usize; 3]>,
}

impl Default for KinematicsConfig {
    fn default() -> Self {
        Self {
            sign: -1.0,
            signed_percentiles: false,
            crop_lo: None,
            crop_hi: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyThresholds {
    pub r2_min_normal: f64,
    pub nrmse_max_normal: f64,
    pub strain_p99_rel_tol: f64,
    pub qq_points: usize,
    pub histogram_bins: usize,
}

impl Default for VerifyThresholds {
    fn default() -> Self {
        Self {
            r2_min_normal: 0.95,
            nrmse_max_normal: 0.05,
            strain_p99_rel_tol: 0.10,
            qq_points: 20,
            histogram_bins: 30,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub input: InputConfig,
    pub phantom: PhantomSpec,
    pub field: FieldConfig,
    pub registration: RegistrationConfig,
    pub surface: SurfaceConfig,
    pub curvature: CurvatureParams,
    pub kinematics: KinematicsConfig,
    pub verify: VerifyThresholds,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            input: InputConfig::default(),
            phantom: PhantomSpec::default(),
            field: FieldConfig::default(),
            registration: RegistrationConfig::default(),
            surface: SurfaceConfig::default(),
            curvature: CurvatureParams::default(),
            kinematics: KinematicsConfig::default(),
            verify: VerifyThresholds::default(),
        }
    }
}

impl PipelineConfig {
    /// Parses a TOML table, optionally pre-patched with `--set` overrides.
    pub fn from_toml_value(value: toml::Table) -> Result<Self> {
        let cfg: PipelineConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("{}: {e}", path.display())))?;
        apply_overrides(&mut table, overrides)?;
        Self::from_toml_value(table)
    }

    pub fn with_overrides(overrides: &[(String, String)]) -> Result<Self> {
        let mut table = toml::Table::new();
        apply_overrides(&mut table, overrides)?;
        Self::from_toml_value(table)
    }

    pub fn validate(&self) -> Result<()> {
        self.phantom.validate()?;
        self.registration.validate()?;
        self.curvature.validate()?;
        if self.field.dr_max_mm < 0.0 || self.field.axial_max_mm < 0.0 {
            return Err(Error::Config("field amplitudes must be >= 0".into()));
        }
        if !(self.surface.iso.is_finite()) {
            return Err(Error::Config("surface.iso must be finite".into()));
        }
        if self.surface.k_neighbors_normals < 3 {
            return Err(Error::Config("surface.k_neighbors_normals must be >= 3".into()));
        }
        if self.kinematics.sign != 1.0 && self.kinematics.sign != -1.0 {
            return Err(Error::Config("kinematics.sign must be +1 or -1".into()));
        }
        if self.kinematics.crop_lo.is_some() != self.kinematics.crop_hi.is_some() {
            return Err(Error::Config(
                "kinematics.crop_lo and kinematics.crop_hi must be given together".into(),
            ));
        }
        if let (Some(lo), Some(hi)) = (self.kinematics.crop_lo, self.kinematics.crop_hi) {
            if (0..3).any(|a| lo[a] >= hi[a]) {
                return Err(Error::Config("kinematics crop window is empty".into()));
            }
        }
        if self.verify.qq_points < 2 || self.verify.histogram_bins == 0 {
            return Err(Error::Config(
                "verify.qq_points must be >= 2 and verify.histogram_bins >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Overrides every seeded component with one global seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.phantom.rng_seed = seed;
        self.registration.rng_seed = seed;
        self.curvature.rng_seed = seed;
    }

    /// The analytic truth field implied by the phantom and field sections.
    pub fn analytic_field(&self) -> AnalyticField {
        let mut f = AnalyticField::radial_inflation(&self.phantom, self.field.dr_max_mm);
        f.axial_max_mm = self.field.axial_max_mm;
        f.profile = self.field.profile;
        f
    }
}

/// Applies dotted-path `--set key=value` overrides onto the raw TOML table
/// before deserialization. Values parse as TOML (so numbers, booleans and
/// arrays work); anything unparsable is taken as a string.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[(String, String)]) -> Result<()> {
    for (key, raw) in overrides {
        let value: toml::Value = match raw.parse::<toml::Value>() {
            Ok(v) => v,
            Err(_) => toml::Value::String(raw.clone()),
        };
        let parts: Vec<&str> = key.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(Error::Config(format!("bad override key '{key}'")));
        }
        let mut current = table;
        for part in &parts[..parts.len() - 1] {
            current = current
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("override key '{key}' crosses a non-table value")))?;
        }
        current.insert(parts[parts.len() - 1].to_string(), value);
    }
    Ok(())
}
