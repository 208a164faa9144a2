//! Minimal NIfTI-1 reader/writer.
//!
//! Deliberately narrow: single-file uncompressed `.nii`, little-endian,
//! `dim[0] == 3`, datatypes int16/uint16/float32, and qform/sform limited
//! to axis-aligned scaling plus translation. Everything else is rejected
//! with a descriptive error rather than guessed at.

use std::fs;
use std::io::Write;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use crate::error::{Error, Result};

use super::Volume3;

const HEADER_LEN: usize = 348;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;
const DT_UINT16: i16 = 512;

fn bad(path: &Path, what: impl std::fmt::Display) -> Error {
    Error::UnsupportedFormat(format!("{}: {what}", path.display()))
}

pub fn load_nifti(path: &Path) -> Result<Volume3> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN + 4 {
        return Err(bad(path, "file shorter than a NIfTI-1 header"));
    }
    let h = &bytes[..HEADER_LEN];

    let sizeof_hdr = LittleEndian::read_i32(&h[0..4]);
    if sizeof_hdr != 348 {
        if sizeof_hdr.swap_bytes() == 348 {
            return Err(bad(path, "big-endian NIfTI files are not supported"));
        }
        return Err(bad(path, format!("sizeof_hdr is {sizeof_hdr}, expected 348")));
    }
    if &h[344..348] != b"n+1\0" {
        return Err(bad(path, "magic is not 'n+1' (only single-file .nii is supported)"));
    }

    let ndim = LittleEndian::read_i16(&h[40..42]);
    if ndim != 3 {
        return Err(bad(path, format!("dim[0] is {ndim}, only 3-D volumes are supported")));
    }
    let dims = [
        LittleEndian::read_i16(&h[42..44]) as usize,
        LittleEndian::read_i16(&h[44..46]) as usize,
        LittleEndian::read_i16(&h[46..48]) as usize,
    ];

    let datatype = LittleEndian::read_i16(&h[70..72]);
    let bytes_per = match datatype {
        DT_INT16 | DT_UINT16 => 2usize,
        DT_FLOAT32 => 4usize,
        other => {
            return Err(bad(
                path,
                format!("datatype {other} unsupported (int16, uint16 and float32 only)"),
            ))
        }
    };

    let qfac = LittleEndian::read_f32(&h[76..80]);
    let pixdim = [
        LittleEndian::read_f32(&h[80..84]) as f64,
        LittleEndian::read_f32(&h[84..88]) as f64,
        LittleEndian::read_f32(&h[88..92]) as f64,
    ];
    let vox_offset = LittleEndian::read_f32(&h[108..112]) as usize;
    let scl_slope = LittleEndian::read_f32(&h[112..116]);
    let scl_inter = LittleEndian::read_f32(&h[116..120]);
    let qform_code = LittleEndian::read_i16(&h[252..254]);
    let sform_code = LittleEndian::read_i16(&h[254..256]);

    let (spacing, origin) = if sform_code > 0 {
        let mut rows = [[0.0f64; 4]; 3];
        for (r, row) in rows.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = LittleEndian::read_f32(&h[280 + 16 * r + 4 * c..280 + 16 * r + 4 * c + 4]) as f64;
            }
        }
        let mut spacing = [0.0f64; 3];
        for (r, row) in rows.iter().enumerate() {
            for c in 0..3 {
                if r == c {
                    spacing[r] = row[c];
                } else if row[c].abs() > 1e-6 * row[r].abs().max(1.0) {
                    return Err(bad(
                        path,
                        "sform is not an axis-aligned scaling (rotations/shears unsupported)",
                    ));
                }
            }
        }
        if spacing.iter().any(|&s| s <= 0.0) {
            return Err(bad(path, "sform diagonal must be positive (no axis flips)"));
        }
        (spacing, [rows[0][3], rows[1][3], rows[2][3]])
    } else if qform_code > 0 {
        let b = LittleEndian::read_f32(&h[256..260]);
        let c = LittleEndian::read_f32(&h[260..264]);
        let d = LittleEndian::read_f32(&h[264..268]);
        if b.abs() > 1e-6 || c.abs() > 1e-6 || d.abs() > 1e-6 {
            return Err(bad(path, "qform quaternion is not identity (rotations unsupported)"));
        }
        if qfac < 0.0 {
            return Err(bad(path, "qform qfac = -1 (axis flip) unsupported"));
        }
        let origin = [
            LittleEndian::read_f32(&h[268..272]) as f64,
            LittleEndian::read_f32(&h[272..276]) as f64,
            LittleEndian::read_f32(&h[276..280]) as f64,
        ];
        (pixdim, origin)
    } else {
        (pixdim, [0.0, 0.0, 0.0])
    };

    let count = dims[0] * dims[1] * dims[2];
    if vox_offset < HEADER_LEN {
        return Err(bad(path, format!("vox_offset {vox_offset} overlaps the header")));
    }
    if bytes.len() < vox_offset + count * bytes_per {
        return Err(bad(
            path,
            format!(
                "data truncated: need {} bytes after offset {vox_offset}, file has {}",
                count * bytes_per,
                bytes.len().saturating_sub(vox_offset)
            ),
        ));
    }
    let raw = &bytes[vox_offset..vox_offset + count * bytes_per];
    let (slope, inter) = if scl_slope == 0.0 { (1.0f32, 0.0f32) } else { (scl_slope, scl_inter) };
    let mut data = vec![0.0f32; count];
    match datatype {
        DT_INT16 => {
            for (i, out) in data.iter_mut().enumerate() {
                *out = LittleEndian::read_i16(&raw[2 * i..2 * i + 2]) as f32 * slope + inter;
            }
        }
        DT_UINT16 => {
            for (i, out) in data.iter_mut().enumerate() {
                *out = LittleEndian::read_u16(&raw[2 * i..2 * i + 2]) as f32 * slope + inter;
            }
        }
        DT_FLOAT32 => {
            LittleEndian::read_f32_into(raw, &mut data);
            if slope != 1.0 || inter != 0.0 {
                for v in &mut data {
                    *v = *v * slope + inter;
                }
            }
        }
        _ => unreachable!(),
    }
    Volume3::new(dims, spacing, origin, data)
}

pub fn save_nifti(v: &Volume3, path: &Path) -> Result<()> {
    let mut h = vec![0u8; HEADER_LEN];
    LittleEndian::write_i32(&mut h[0..4], 348);
    // dim
    LittleEndian::write_i16(&mut h[40..42], 3);
    let d = v.dims();
    LittleEndian::write_i16(&mut h[42..44], d[0] as i16);
    LittleEndian::write_i16(&mut h[44..46], d[1] as i16);
    LittleEndian::write_i16(&mut h[46..48], d[2] as i16);
    for r in 4..8 {
        LittleEndian::write_i16(&mut h[40 + 2 * r..42 + 2 * r], 1);
    }
    LittleEndian::write_i16(&mut h[70..72], DT_FLOAT32);
    LittleEndian::write_i16(&mut h[72..74], 32); // bitpix
    let s = v.spacing();
    LittleEndian::write_f32(&mut h[76..80], 1.0); // qfac
    LittleEndian::write_f32(&mut h[80..84], s[0] as f32);
    LittleEndian::write_f32(&mut h[84..88], s[1] as f32);
    LittleEndian::write_f32(&mut h[88..92], s[2] as f32);
    LittleEndian::write_f32(&mut h[108..112], 352.0); // vox_offset
    LittleEndian::write_f32(&mut h[112..116], 1.0); // scl_slope
    LittleEndian::write_i16(&mut h[252..254], 0); // qform_code
    LittleEndian::write_i16(&mut h[254..256], 1); // sform_code: scanner anat
    let o = v.origin();
    for (r, (sp, or)) in s.iter().zip(o.iter()).enumerate() {
        LittleEndian::write_f32(&mut h[280 + 16 * r + 4 * r..284 + 16 * r + 4 * r], *sp as f32);
        LittleEndian::write_f32(&mut h[280 + 16 * r + 12..280 + 16 * r + 16], *or as f32);
    }
    h[344..348].copy_from_slice(b"n+1\0");

    let mut bytes = vec![0u8; v.data().len() * 4];
    LittleEndian::write_f32_into(v.data(), &mut bytes);

    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&h).map_err(|e| Error::io(path, e))?;
    f.write_all(&[0u8; 4]).map_err(|e| Error::io(path, e))?; // extender
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}
