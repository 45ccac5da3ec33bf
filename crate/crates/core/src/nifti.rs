//! Minimal single-file NIfTI-1 reader/writer.
//!
//! Supported subset: little-endian `.nii` with magic `n+1\0`, 3-D volumes,
//! datatypes uint8 (2), int16 (4) and float32 (16). The reader is defensive:
//! malformed bytes produce a format error naming the offending field, never a
//! panic.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::volume::{LabelVolume, MaskVolume, ScalarVolume};
use std::io::Write;
use std::path::Path;

pub const DT_UINT8: i16 = 2;
pub const DT_INT16: i16 = 4;
pub const DT_FLOAT32: i16 = 16;

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;

/// Raw payload of a supported NIfTI file, before interpretation as
/// scalar/mask/label volume.
#[derive(Debug, Clone)]
pub enum RawData {
    U8(Vec<u8>),
    I16(Vec<i16>),
    F32(Vec<f32>),
}

#[derive(Debug, Clone)]
pub struct RawVolume {
    pub grid: Grid,
    pub datatype: i16,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub data: RawData,
}

fn read_i16(bytes: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([bytes[off], bytes[off + 1]])
}

fn read_i32(bytes: &[u8], off: usize) -> i32 {
    i32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]])
}

fn read_f32(bytes: &[u8], off: usize) -> f32 {
    f32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]])
}

/// Parse the supported NIfTI-1 subset from raw bytes.
pub fn parse_nifti(bytes: &[u8]) -> Result<RawVolume> {
    if bytes.len() < VOX_OFFSET {
        return Err(Error::format(
            "sizeof_hdr",
            format!("file too small: {} bytes, need at least {VOX_OFFSET}", bytes.len()),
        ));
    }
    let sizeof_hdr = read_i32(bytes, 0);
    if sizeof_hdr != 348 {
        if sizeof_hdr.swap_bytes() == 348 {
            return Err(Error::format(
                "sizeof_hdr",
                "big-endian file; only little-endian is supported",
            ));
        }
        return Err(Error::format(
            "sizeof_hdr",
            format!("expected 348, got {sizeof_hdr}"),
        ));
    }
    let magic = &bytes[344..348];
    if magic != b"n+1\0" {
        if magic == b"ni1\0" {
            return Err(Error::format(
                "magic",
                "two-file (.hdr/.img) form is not supported",
            ));
        }
        return Err(Error::format(
            "magic",
            format!("expected \"n+1\\0\", got {magic:?}"),
        ));
    }
    let ndim = read_i16(bytes, 40);
    if ndim != 3 {
        return Err(Error::format("dim[0]", format!("expected 3, got {ndim}")));
    }
    let nx = read_i16(bytes, 42);
    let ny = read_i16(bytes, 44);
    let nz = read_i16(bytes, 46);
    if nx <= 0 || ny <= 0 || nz <= 0 {
        return Err(Error::format(
            "dim",
            format!("non-positive dims ({nx}, {ny}, {nz})"),
        ));
    }
    let datatype = read_i16(bytes, 70);
    let bytes_per = match datatype {
        DT_UINT8 => 1usize,
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        other => {
            return Err(Error::format(
                "datatype",
                format!("unsupported datatype code {other} (supported: 2, 4, 16)"),
            ))
        }
    };
    let sx = read_f32(bytes, 80);
    let sy = read_f32(bytes, 84);
    let sz = read_f32(bytes, 88);
    for (name, s) in [("pixdim[1]", sx), ("pixdim[2]", sy), ("pixdim[3]", sz)] {
        if !s.is_finite() || s <= 0.0 {
            return Err(Error::format(name, format!("non-positive spacing {s}")));
        }
    }
    let vox_offset = read_f32(bytes, 108);
    if !vox_offset.is_finite() || vox_offset < VOX_OFFSET as f32 || vox_offset.fract() != 0.0 {
        return Err(Error::format(
            "vox_offset",
            format!("expected integral value >= {VOX_OFFSET}, got {vox_offset}"),
        ));
    }
    let vox_offset = vox_offset as usize;
    let scl_slope = read_f32(bytes, 112);
    let scl_inter = read_f32(bytes, 116);

    let n_vox = (nx as usize)
        .checked_mul(ny as usize)
        .and_then(|v| v.checked_mul(nz as usize))
        .ok_or_else(|| Error::format("dim", "voxel count overflows"))?;
    let payload_len = n_vox
        .checked_mul(bytes_per)
        .ok_or_else(|| Error::format("dim", "payload size overflows"))?;
    let end = vox_offset
        .checked_add(payload_len)
        .ok_or_else(|| Error::format("vox_offset", "payload extent overflows"))?;
    if bytes.len() < end {
        return Err(Error::format(
            "data",
            format!(
                "truncated payload: need {payload_len} bytes at offset {vox_offset}, file has {}",
                bytes.len()
            ),
        ));
    }
    let payload = &bytes[vox_offset..end];
    let data = match datatype {
        DT_UINT8 => RawData::U8(payload.to_vec()),
        DT_INT16 => RawData::I16(
            payload
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]))
                .collect(),
        ),
        _ => RawData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        ),
    };
    let grid = Grid::new(
        (nx as usize, ny as usize, nz as usize),
        (sx as f64, sy as f64, sz as f64),
    )?;
    Ok(RawVolume {
        grid,
        datatype,
        scl_slope,
        scl_inter,
        data,
    })
}

pub fn read_raw(path: &Path) -> Result<RawVolume> {
    let bytes = std::fs::read(path)?;
    parse_nifti(&bytes)
}

/// Read any supported datatype as a real-valued volume, applying scl_slope /
/// scl_inter (slope 0 is treated as 1, per convention).
pub fn read_scalar(path: &Path) -> Result<ScalarVolume> {
    let raw = read_raw(path)?;
    let slope = if raw.scl_slope == 0.0 {
        1.0
    } else {
        raw.scl_slope as f64
    };
    let inter = raw.scl_inter as f64;
    let data: Vec<f64> = match raw.data {
        RawData::U8(v) => v.into_iter().map(|x| x as f64 * slope + inter).collect(),
        RawData::I16(v) => v.into_iter().map(|x| x as f64 * slope + inter).collect(),
        RawData::F32(v) => v.into_iter().map(|x| x as f64 * slope + inter).collect(),
    };
    ScalarVolume::from_data(raw.grid, data)
}

/// Read a uint8 file as a binary mask (nonzero means set).
pub fn read_mask(path: &Path) -> Result<MaskVolume> {
    let raw = read_raw(path)?;
    match raw.data {
        RawData::U8(v) => Ok(MaskVolume {
            grid: raw.grid,
            data: v.into_iter().map(|x| x != 0).collect(),
        }),
        _ => Err(Error::format(
            "datatype",
            format!("mask volumes must be uint8, got code {}", raw.datatype),
        )),
    }
}

/// Read a uint8 or int16 file as a label map; negative labels are rejected.
pub fn read_labels(path: &Path) -> Result<LabelVolume> {
    let raw = read_raw(path)?;
    let data: Vec<u32> = match raw.data {
        RawData::U8(v) => v.into_iter().map(|x| x as u32).collect(),
        RawData::I16(v) => {
            if v.iter().any(|&x| x < 0) {
                return Err(Error::format("data", "negative label value"));
            }
            v.into_iter().map(|x| x as u32).collect()
        }
        RawData::F32(_) => {
            return Err(Error::format(
                "datatype",
                "label volumes must be uint8 or int16, got float32",
            ))
        }
    };
    Ok(LabelVolume {
        grid: raw.grid,
        data,
    })
}

fn header_bytes(grid: &Grid, datatype: i16, bitpix: i16) -> [u8; HEADER_SIZE] {
    let mut h = [0u8; HEADER_SIZE];
    h[0..4].copy_from_slice(&348i32.to_le_bytes());
    // dim[0..8): 3-D, trailing dims 1
    let dims = [
        3i16,
        grid.dims.0 as i16,
        grid.dims.1 as i16,
        grid.dims.2 as i16,
        1,
        1,
        1,
        1,
    ];
    for (i, d) in dims.iter().enumerate() {
        h[40 + 2 * i..42 + 2 * i].copy_from_slice(&d.to_le_bytes());
    }
    h[70..72].copy_from_slice(&datatype.to_le_bytes());
    h[72..74].copy_from_slice(&bitpix.to_le_bytes());
    let pixdim = [
        1.0f32,
        grid.spacing.0 as f32,
        grid.spacing.1 as f32,
        grid.spacing.2 as f32,
        1.0,
        1.0,
        1.0,
        1.0,
    ];
    for (i, p) in pixdim.iter().enumerate() {
        h[76 + 4 * i..80 + 4 * i].copy_from_slice(&p.to_le_bytes());
    }
    h[108..112].copy_from_slice(&(VOX_OFFSET as f32).to_le_bytes());
    h[112..116].copy_from_slice(&1.0f32.to_le_bytes()); // scl_slope
    h[116..120].copy_from_slice(&0.0f32.to_le_bytes()); // scl_inter
    h[123] = 2; // xyzt_units: mm
    // sform: identity scaled by spacing (the pipeline is orientation-agnostic)
    h[254..256].copy_from_slice(&1i16.to_le_bytes());
    let srow_x = [grid.spacing.0 as f32, 0.0, 0.0, 0.0];
    let srow_y = [0.0, grid.spacing.1 as f32, 0.0, 0.0];
    let srow_z = [0.0, 0.0, grid.spacing.2 as f32, 0.0];
    for (base, row) in [(280, srow_x), (296, srow_y), (312, srow_z)] {
        for (i, v) in row.iter().enumerate() {
            h[base + 4 * i..base + 4 + 4 * i].copy_from_slice(&v.to_le_bytes());
        }
    }
    h[344..348].copy_from_slice(b"n+1\0");
    h
}

fn check_dims_representable(grid: &Grid) -> Result<()> {
    for d in [grid.dims.0, grid.dims.1, grid.dims.2] {
        if d > i16::MAX as usize {
            return Err(Error::Conversion(format!(
                "dimension {d} exceeds the NIfTI-1 int16 dim field"
            )));
        }
    }
    Ok(())
}

fn write_file(path: &Path, header: &[u8; HEADER_SIZE], payload: &[u8]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(header)?;
    f.write_all(&[0u8; 4])?; // extender: no extensions
    f.write_all(payload)?;
    f.flush()?;
    Ok(())
}

/// Write a real-valued volume as float32.
pub fn write_scalar(v: &ScalarVolume, path: &Path) -> Result<()> {
    check_dims_representable(&v.grid)?;
    let header = header_bytes(&v.grid, DT_FLOAT32, 32);
    let mut payload = Vec::with_capacity(v.data.len() * 4);
    for &val in &v.data {
        payload.extend_from_slice(&(val as f32).to_le_bytes());
    }
    write_file(path, &header, &payload)
}

/// Write a mask as uint8 (0/1).
pub fn write_mask(m: &MaskVolume, path: &Path) -> Result<()> {
    check_dims_representable(&m.grid)?;
    let header = header_bytes(&m.grid, DT_UINT8, 8);
    let payload: Vec<u8> = m.data.iter().map(|&b| b as u8).collect();
    write_file(path, &header, &payload)
}

/// Write labels with the requested datatype; values outside the datatype's
/// range are a conversion error.
pub fn write_labels(l: &LabelVolume, path: &Path, datatype: i16) -> Result<()> {
    check_dims_representable(&l.grid)?;
    match datatype {
        DT_UINT8 => {
            if let Some(&bad) = l.data.iter().find(|&&v| v > u8::MAX as u32) {
                return Err(Error::Conversion(format!(
                    "label {bad} does not fit in uint8"
                )));
            }
            let header = header_bytes(&l.grid, DT_UINT8, 8);
            let payload: Vec<u8> = l.data.iter().map(|&v| v as u8).collect();
            write_file(path, &header, &payload)
        }
        DT_INT16 => {
            if let Some(&bad) = l.data.iter().find(|&&v| v > i16::MAX as u32) {
                return Err(Error::Conversion(format!(
                    "label {bad} does not fit in int16"
                )));
            }
            let header = header_bytes(&l.grid, DT_INT16, 16);
            let mut payload = Vec::with_capacity(l.data.len() * 2);
            for &v in &l.data {
                payload.extend_from_slice(&(v as i16).to_le_bytes());
            }
            write_file(path, &header, &payload)
        }
        other => Err(Error::Conversion(format!(
            "labels must be written as uint8 or int16, got datatype code {other}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpfile(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("folia-nifti-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn scalar_roundtrip_f32_exact() {
        let g = Grid::new((5, 4, 3), (0.5, 0.5, 1.0)).unwrap();
        // values chosen exactly representable in f32
        let v = ScalarVolume::from_fn(g, |x, y, z| (x as f64) * 0.25 - (y as f64) + (z as f64) * 8.0);
        let path = tmpfile("roundtrip.nii");
        write_scalar(&v, &path).unwrap();
        let back = read_scalar(&path).unwrap();
        assert!(back.grid.same_geometry(&g));
        assert_eq!(back.data, v.data);
    }

    #[test]
    fn mask_roundtrip_preserves_set_voxels() {
        let g = Grid::isotropic((4, 4, 4), 2.0).unwrap();
        let m = MaskVolume::from_fn(g, |x, y, z| (x + y + z) % 2 == 0);
        let path = tmpfile("mask.nii");
        write_mask(&m, &path).unwrap();
        let back = read_mask(&path).unwrap();
        assert_eq!(back.data, m.data);
    }

    #[test]
    fn two_file_magic_rejected() {
        let g = Grid::isotropic((2, 2, 2), 1.0).unwrap();
        let mut h = header_bytes(&g, DT_UINT8, 8).to_vec();
        h[344..348].copy_from_slice(b"ni1\0");
        h.extend_from_slice(&[0u8; 4]);
        h.extend_from_slice(&[0u8; 8]);
        let err = parse_nifti(&h).unwrap_err();
        assert!(matches!(err, Error::Format { ref field, .. } if field == "magic"), "{err}");
    }

    #[test]
    fn hand_assembled_uint8_file_reads_x_fastest() {
        // oracle: bytes written by hand straight from the field layout
        let mut bytes = vec![0u8; 352 + 8];
        bytes[0..4].copy_from_slice(&348i32.to_le_bytes());
        let dims: [i16; 4] = [3, 2, 2, 2];
        for (i, d) in dims.iter().enumerate() {
            bytes[40 + 2 * i..42 + 2 * i].copy_from_slice(&d.to_le_bytes());
        }
        bytes[70..72].copy_from_slice(&DT_UINT8.to_le_bytes());
        bytes[72..74].copy_from_slice(&8i16.to_le_bytes());
        for i in 1..=3 {
            bytes[76 + 4 * i..80 + 4 * i].copy_from_slice(&1.0f32.to_le_bytes());
        }
        bytes[108..112].copy_from_slice(&352.0f32.to_le_bytes());
        bytes[344..348].copy_from_slice(b"n+1\0");
        for (i, b) in bytes[352..360].iter_mut().enumerate() {
            *b = i as u8;
        }
        let raw = parse_nifti(&bytes).unwrap();
        match raw.data {
            RawData::U8(d) => assert_eq!(d, vec![0, 1, 2, 3, 4, 5, 6, 7]),
            _ => panic!("expected u8 payload"),
        }
        // voxel (1,0,0) is payload element 1; (0,1,0) is element 2; (0,0,1) is 4
        assert_eq!(raw.grid.index(1, 0, 0), 1);
        assert_eq!(raw.grid.index(0, 1, 0), 2);
        assert_eq!(raw.grid.index(0, 0, 1), 4);
    }

    #[test]
    fn float_constant_payload_is_ieee_bytes() {
        let g = Grid::isotropic((3, 3, 3), 1.0).unwrap();
        let v = ScalarVolume::filled(g, std::f64::consts::PI);
        let path = tmpfile("pi.nii");
        write_scalar(&v, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let expect = (std::f64::consts::PI as f32).to_le_bytes();
        for chunk in bytes[352..].chunks_exact(4) {
            assert_eq!(chunk, expect);
        }
    }

    #[test]
    fn label_out_of_uint8_range_is_conversion_error() {
        let g = Grid::isotropic((2, 2, 2), 1.0).unwrap();
        let mut l = LabelVolume::zeros(g);
        l.data[3] = 300;
        let path = tmpfile("labels300.nii");
        let err = write_labels(&l, &path, DT_UINT8).unwrap_err();
        assert!(matches!(err, Error::Conversion(_)), "{err}");
        // but int16 is fine
        write_labels(&l, &path, DT_INT16).unwrap();
        let back = read_labels(&path).unwrap();
        assert_eq!(back.data[3], 300);
    }

    #[test]
    fn truncated_payload_names_field() {
        let g = Grid::isotropic((4, 4, 4), 1.0).unwrap();
        let v = ScalarVolume::zeros(g);
        let path = tmpfile("trunc.nii");
        write_scalar(&v, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(352 + 10);
        let err = parse_nifti(&bytes).unwrap_err();
        assert!(matches!(err, Error::Format { ref field, .. } if field == "data"), "{err}");
    }

    #[test]
    fn big_endian_detected() {
        let mut bytes = vec![0u8; 400];
        bytes[0..4].copy_from_slice(&348i32.to_be_bytes());
        let err = parse_nifti(&bytes).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("big-endian"), "{text}");
    }
}
