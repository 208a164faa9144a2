//! Volume file I/O.
//!
//! Two formats are supported, dispatched on extension:
//!
//! * `.nii` — uncompressed little-endian NIfTI-1, axis-aligned only
//!   (see [`super::nifti`]).
//! * anything else — a sidecar text header plus a raw little-endian
//!   32-bit-float data file. The header holds `key = value` lines:
//!
//!   ```text
//!   dims = 112 109 74
//!   spacing_mm = 0.63 0.63 1.0
//!   origin_mm = 0.0 0.0 0.0
//!   data_file = volume.raw
//!   ```
//!
//!   `data_file` is resolved relative to the header's directory. Raw f32
//!   round-trips are bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use crate::error::{Error, Result};

use super::nifti;
use super::Volume3;

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume3> {
    let path = path.as_ref();
    if path.extension().map(|e| e == "nii").unwrap_or(false) {
        nifti::load_nifti(path)
    } else {
        load_sidecar(path)
    }
}

pub fn save_volume(v: &Volume3, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if path.extension().map(|e| e == "nii").unwrap_or(false) {
        nifti::save_nifti(v, path)
    } else {
        save_sidecar(v, path)
    }
}

fn parse_triple<T: std::str::FromStr>(key: &str, value: &str) -> Result<[T; 3]> {
    let parts: Vec<&str> = value
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .collect();
    if parts.len() != 3 {
        return Err(Error::UnsupportedFormat(format!(
            "header key '{key}' expects 3 values, got '{value}'"
        )));
    }
    let mut out: Vec<T> = Vec::with_capacity(3);
    for p in parts {
        out.push(
            p.parse::<T>()
                .map_err(|_| Error::UnsupportedFormat(format!("header key '{key}': cannot parse '{p}'")))?,
        );
    }
    Ok([
        out.remove(0),
        out.remove(0),
        out.remove(0),
    ])
}

fn load_sidecar(path: &Path) -> Result<Volume3> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut dims: Option<[usize; 3]> = None;
    let mut spacing: Option<[f64; 3]> = None;
    let mut origin = [0.0f64; 3];
    let mut data_file: Option<String> = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::UnsupportedFormat(format!("malformed header line '{line}'")))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "dims" => dims = Some(parse_triple::<usize>(key, value)?),
            "spacing_mm" => spacing = Some(parse_triple::<f64>(key, value)?),
            "origin_mm" => origin = parse_triple::<f64>(key, value)?,
            "data_file" => data_file = Some(value.to_string()),
            other => {
                return Err(Error::UnsupportedFormat(format!("unknown header key '{other}'")));
            }
        }
    }
    let dims = dims.ok_or_else(|| Error::UnsupportedFormat("header missing 'dims'".into()))?;
    let spacing = spacing.ok_or_else(|| Error::UnsupportedFormat("header missing 'spacing_mm'".into()))?;
    let data_file = data_file.ok_or_else(|| Error::UnsupportedFormat("header missing 'data_file'".into()))?;
    let data_path = path.parent().unwrap_or_else(|| Path::new(".")).join(&data_file);

    let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let expected = dims[0] * dims[1] * dims[2] * 4;
    if bytes.len() != expected {
        return Err(Error::UnsupportedFormat(format!(
            "{}: data file holds {} bytes, header dims {:?} require {}",
            data_path.display(),
            bytes.len(),
            dims,
            expected
        )));
    }
    let mut data = vec![0.0f32; dims[0] * dims[1] * dims[2]];
    LittleEndian::read_f32_into(&bytes, &mut data);
    Volume3::new(dims, spacing, origin, data)
}

fn save_sidecar(v: &Volume3, path: &Path) -> Result<()> {
    let data_path = path.with_extension("raw");
    let data_name = data_path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("{}: not a file path", path.display())))?
        .to_string_lossy()
        .into_owned();

    let mut header = String::new();
    let d = v.dims();
    let s = v.spacing();
    let o = v.origin();
    header.push_str(&format!("dims = {} {} {}\n", d[0], d[1], d[2]));
    header.push_str(&format!("spacing_mm = {} {} {}\n", s[0], s[1], s[2]));
    header.push_str(&format!("origin_mm = {} {} {}\n", o[0], o[1], o[2]));
    header.push_str(&format!("data_file = {data_name}\n"));
    fs::write(path, header).map_err(|e| Error::io(path, e))?;

    let mut bytes = vec![0u8; v.data().len() * 4];
    LittleEndian::write_f32_into(v.data(), &mut bytes);
    let mut f = fs::File::create(&data_path).map_err(|e| Error::io(&data_path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&data_path, e))?;
    Ok(())
}
