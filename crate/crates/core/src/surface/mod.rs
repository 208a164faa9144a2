//! Wall point clouds and local surface geometry.

mod cylinder;
mod io;
mod kdtree;
mod normals;

use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::volume::Volume3;

pub use cylinder::{fit_cylinder_msac, radius_of_curvature_field, CurvatureParams, CylinderFit};
pub use io::{load_cloud_csv, load_cloud_ply, save_cloud_csv, save_cloud_ply};
pub use kdtree::KdTree;
pub use normals::{estimate_normals, orient_normals};

/// Points in mm with optional per-point normals and radii, a validity flag,
/// and named scalar attribute channels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub normals: Option<Vec<Vector3<f64>>>,
    pub radius: Option<Vec<f64>>,
    pub valid: Vec<bool>,
    pub attributes: BTreeMap<String, Vec<f64>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Vector3<f64>>) -> Self {
        let n = points.len();
        Self {
            points,
            normals: None,
            radius: None,
            valid: vec![true; n],
            attributes: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Keeps only points inside the axis-aligned mm box `[lo, hi]`.
    pub fn filter_box(&self, lo: Vector3<f64>, hi: Vector3<f64>) -> Self {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| {
                let p = self.points[i];
                (0..3).all(|a| p[a] >= lo[a] && p[a] <= hi[a])
            })
            .collect();
        Self {
            points: keep.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| keep.iter().map(|&i| n[i]).collect()),
            radius: self
                .radius
                .as_ref()
                .map(|r| keep.iter().map(|&i| r[i]).collect()),
            valid: keep.iter().map(|&i| self.valid[i]).collect(),
            attributes: self
                .attributes
                .iter()
                .map(|(k, v)| (k.clone(), keep.iter().map(|&i| v[i]).collect()))
                .collect(),
        }
    }
}

/// Extracts the boundary of a thresholded mask: centers (mm) of voxels
/// above `iso` that have at least one in-bounds face neighbour below `iso`.
pub fn extract_wall_points(mask: &Volume3, iso: f64) -> Result<PointCloud> {
    let dims = mask.dims();
    let mut points = Vec::new();
    let mut any_above = false;
    let mut any_below = false;
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let v = mask.get(i, j, k) as f64;
                if v > iso {
                    any_above = true;
                } else if v < iso {
                    any_below = true;
                    continue;
                } else {
                    continue;
                }
                let mut boundary = false;
                let pos = [i as isize, j as isize, k as isize];
                'faces: for a in 0..3 {
                    for step in [-1isize, 1] {
                        let mut q = pos;
                        q[a] += step;
                        if q[a] < 0 || q[a] >= dims[a] as isize {
                            continue;
                        }
                        if (mask.get(q[0] as usize, q[1] as usize, q[2] as usize) as f64) < iso {
                            boundary = true;
                            break 'faces;
                        }
                    }
                }
                if boundary {
                    points.push(mask.voxel_center(i, j, k));
                }
            }
        }
    }
    if !any_above || !any_below || points.is_empty() {
        return Err(Error::EmptySurface);
    }
    Ok(PointCloud::from_points(points))
}

/// Indices of the k nearest cloud points to `query`, ties broken by lower
/// index, sorted ascending by distance. Builds a fresh k-d tree; for
/// repeated queries build [`KdTree`] once instead.
pub fn knn(cloud: &PointCloud, query: Vector3<f64>, k: usize) -> Result<Vec<usize>> {
    if k > cloud.len() {
        return Err(Error::InvalidParameter(format!(
            "knn: k = {k} exceeds point count {}",
            cloud.len()
        )));
    }
    Ok(KdTree::build(&cloud.points).knn(query, k))
}
