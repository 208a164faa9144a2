//! Point-cloud file I/O: ASCII PLY and CSV, units in mm.
//!
//! The PLY vertex element carries `x y z`, then `nx ny nz` when normals are
//! present, then `radius` when radii are present, then `valid` (uchar), and
//! finally any named attribute channels as doubles. Floats are written with
//! Rust's shortest round-trip formatting, so save/load is value-exact.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

use super::PointCloud;

pub fn save_cloud_ply(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut header = String::from("ply\nformat ascii 1.0\ncomment vesselkin point cloud\n");
    header.push_str(&format!("element vertex {}\n", cloud.len()));
    header.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.normals.is_some() {
        header.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    if cloud.radius.is_some() {
        header.push_str("property double radius\n");
    }
    header.push_str("property uchar valid\n");
    for name in cloud.attributes.keys() {
        header.push_str(&format!("property double {name}\n"));
    }
    header.push_str("end_header\n");

    let mut body = String::new();
    for i in 0..cloud.len() {
        let p = cloud.points[i];
        body.push_str(&format!("{} {} {}", p[0], p[1], p[2]));
        if let Some(normals) = &cloud.normals {
            let n = normals[i];
            body.push_str(&format!(" {} {} {}", n[0], n[1], n[2]));
        }
        if let Some(radius) = &cloud.radius {
            body.push_str(&format!(" {}", radius[i]));
        }
        body.push_str(if cloud.valid[i] { " 1" } else { " 0" });
        for values in cloud.attributes.values() {
            body.push_str(&format!(" {}", values[i]));
        }
        body.push('\n');
    }

    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_cloud_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let bad = |msg: &str| Error::UnsupportedFormat(format!("{}: {msg}", path.display()));

    if lines.next().map(str::trim) != Some("ply") {
        return Err(bad("missing 'ply' magic"));
    }
    let mut count: Option<usize> = None;
    let mut properties: Vec<String> = Vec::new();
    for line in lines.by_ref() {
        let line = line.trim();
        if line == "end_header" {
            break;
        }
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(bad("only ascii PLY is supported"));
                }
            }
            Some("comment") => {}
            Some("element") => match (tok.next(), tok.next()) {
                (Some("vertex"), Some(n)) => {
                    count = Some(n.parse().map_err(|_| bad("bad vertex count"))?);
                }
                _ => return Err(bad("only the vertex element is supported")),
            },
            Some("property") => {
                let _ty = tok.next().ok_or_else(|| bad("property without type"))?;
                let name = tok.next().ok_or_else(|| bad("property without name"))?;
                properties.push(name.to_string());
            }
            Some(other) => return Err(bad(&format!("unsupported header line '{other}'"))),
            None => {}
        }
    }
    let count = count.ok_or_else(|| bad("missing vertex element"))?;
    for req in ["x", "y", "z"] {
        if !properties.iter().any(|p| p == req) {
            return Err(bad(&format!("missing required property '{req}'")));
        }
    }

    let mut columns: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for name in &properties {
        columns.insert(name.as_str(), Vec::with_capacity(count));
    }
    let mut seen = 0usize;
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(&format!("bad value '{t}'"))))
            .collect::<Result<_>>()?;
        if values.len() != properties.len() {
            return Err(bad(&format!(
                "row has {} values, header declares {} properties",
                values.len(),
                properties.len()
            )));
        }
        for (name, value) in properties.iter().zip(values) {
            columns.get_mut(name.as_str()).unwrap().push(value);
        }
        seen += 1;
    }
    if seen != count {
        return Err(bad(&format!("expected {count} vertices, found {seen}")));
    }

    assemble_cloud(columns.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
}

/// CSV alternative with a header row; same column names as the PLY
/// properties.
pub fn save_cloud_csv(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut names = vec!["x".to_string(), "y".to_string(), "z".to_string()];
    if cloud.normals.is_some() {
        names.extend(["nx".into(), "ny".into(), "nz".into()]);
    }
    if cloud.radius.is_some() {
        names.push("radius".into());
    }
    names.push("valid".into());
    names.extend(cloud.attributes.keys().cloned());

    let mut out = names.join(",");
    out.push('\n');
    for i in 0..cloud.len() {
        let mut row: Vec<String> = Vec::with_capacity(names.len());
        let p = cloud.points[i];
        row.extend([p[0].to_string(), p[1].to_string(), p[2].to_string()]);
        if let Some(normals) = &cloud.normals {
            let n = normals[i];
            row.extend([n[0].to_string(), n[1].to_string(), n[2].to_string()]);
        }
        if let Some(radius) = &cloud.radius {
            row.push(radius[i].to_string());
        }
        row.push(if cloud.valid[i] { "1".into() } else { "0".into() });
        for values in cloud.attributes.values() {
            row.push(values[i].to_string());
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_cloud_csv(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::UnsupportedFormat(format!("{}: {msg}", path.display()));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file"))?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut columns: BTreeMap<String, Vec<f64>> = names.iter().map(|n| (n.clone(), Vec::new())).collect();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse().map_err(|_| bad(&format!("bad value '{t}'"))))
            .collect::<Result<_>>()?;
        if values.len() != names.len() {
            return Err(bad("row width does not match header"));
        }
        for (name, value) in names.iter().zip(values) {
            columns.get_mut(name).unwrap().push(value);
        }
    }
    assemble_cloud(columns)
}

fn assemble_cloud(mut columns: BTreeMap<String, Vec<f64>>) -> Result<PointCloud> {
    let take = |cols: &mut BTreeMap<String, Vec<f64>>, name: &str| -> Option<Vec<f64>> { cols.remove(name) };
    let x = take(&mut columns, "x").ok_or_else(|| Error::UnsupportedFormat("missing column 'x'".into()))?;
    let y = take(&mut columns, "y").ok_or_else(|| Error::UnsupportedFormat("missing column 'y'".into()))?;
    let z = take(&mut columns, "z").ok_or_else(|| Error::UnsupportedFormat("missing column 'z'".into()))?;
    let n = x.len();
    if y.len() != n || z.len() != n {
        return Err(Error::UnsupportedFormat("coordinate columns differ in length".into()));
    }
    let points: Vec<Vector3<f64>> = (0..n).map(|i| Vector3::new(x[i], y[i], z[i])).collect();

    let normals = match (take(&mut columns, "nx"), take(&mut columns, "ny"), take(&mut columns, "nz")) {
        (Some(nx), Some(ny), Some(nz)) => {
            Some((0..n).map(|i| Vector3::new(nx[i], ny[i], nz[i])).collect())
        }
        (None, None, None) => None,
        _ => {
            return Err(Error::UnsupportedFormat(
                "normals require all of nx, ny, nz".into(),
            ))
        }
    };
    let radius = take(&mut columns, "radius");
    let valid = match take(&mut columns, "valid") {
        Some(v) => v.iter().map(|&x| x != 0.0).collect(),
        None => vec![true; n],
    };

    Ok(PointCloud {
        points,
        normals,
        radius,
        valid,
        attributes: columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn sample_cloud() -> PointCloud {
        let mut cloud = PointCloud::from_points(vec![
            Vector3::new(0.125, -1.5, 2.0),
            Vector3::new(3.25, 4.75, -0.0625),
            Vector3::new(1.0 / 3.0, 2.0_f64.sqrt(), std::f64::consts::PI),
        ]);
        cloud.normals = Some(vec![Vector3::z(), Vector3::x(), Vector3::new(0.6, 0.8, 0.0)]);
        cloud.radius = Some(vec![25.0, 24.5, 26.25]);
        cloud.valid = vec![true, false, true];
        cloud.attributes.insert("strain".into(), vec![0.04, 0.02, -0.01]);
        cloud
    }

    #[test]
    fn ply_round_trip_is_value_exact() {
        let dir = TempDir::new().unwrap();
        let cloud = sample_cloud();
        let p = dir.path().join("cloud.ply");
        save_cloud_ply(&cloud, &p).unwrap();
        let r = load_cloud_ply(&p).unwrap();
        assert_eq!(r, cloud);
    }

    #[test]
    fn csv_round_trip_is_value_exact() {
        let dir = TempDir::new().unwrap();
        let cloud = sample_cloud();
        let p = dir.path().join("cloud.csv");
        save_cloud_csv(&cloud, &p).unwrap();
        let r = load_cloud_csv(&p).unwrap();
        assert_eq!(r, cloud);
    }

    #[test]
    fn points_only_round_trip() {
        let dir = TempDir::new().unwrap();
        let cloud = PointCloud::from_points(vec![Vector3::new(1.0, 2.0, 3.0)]);
        let p = dir.path().join("pts.ply");
        save_cloud_ply(&cloud, &p).unwrap();
        let r = load_cloud_ply(&p).unwrap();
        assert_eq!(r, cloud);
    }

    #[test]
    fn malformed_ply_is_rejected() {
        let dir = TempDir::new().unwrap();
        let p = dir.path().join("bad.ply");
        std::fs::write(&p, "ply\nformat binary_little_endian 1.0\nend_header\n").unwrap();
        assert!(load_cloud_ply(&p).is_err());
    }
}
