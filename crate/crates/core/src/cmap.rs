//! Two-plane float map files.
//!
//! Layout (all little-endian):
//!
//! | bytes | field                              |
//! |-------|------------------------------------|
//! | 4     | magic, `CMAP` or `FLOW`            |
//! | 2     | version, u16 = 1                   |
//! | 4     | width, u32                         |
//! | 4     | height, u32                        |
//! | 1     | channel count, u8 = 2              |
//! | 5     | reserved, zero                     |
//! | 4·w·h | plane 0, row-major f32             |
//! | 4·w·h | plane 1, row-major f32             |
//!
//! `CMAP` planes are the photometric and geometric log-covariance maps.
//! `FLOW` planes are the x and y flow components; invalid pixels are NaN.
//! `EMAP` planes are photometric and geometric consistency errors, NaN where
//! the error is undefined.

use std::fs;
use std::path::{Path, PathBuf};

use crate::consistency::{ErrorKind, ErrorMap, FlowField};
use crate::error::{Error, Result};
use crate::image::{Grid, Image, Mask};
use crate::quality::UncertaintyPair;

pub const CMAP_MAGIC: [u8; 4] = *b"CMAP";
pub const FLOW_MAGIC: [u8; 4] = *b"FLOW";
pub const EMAP_MAGIC: [u8; 4] = *b"EMAP";
pub const VERSION: u16 = 1;
pub const CHANNELS: u8 = 2;
pub const HEADER_LEN: usize = 20;

/// Encodes two equally sized planes under `magic`. Values are stored as f32.
pub fn encode_planes(magic: [u8; 4], plane0: &Image, plane1: &Image) -> Result<Vec<u8>> {
    plane1.ensure_dims(plane0.dims())?;
    let (w, h) = plane0.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * w * h);
    out.extend_from_slice(&magic);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.push(CHANNELS);
    out.extend_from_slice(&[0u8; 5]);
    for plane in [plane0, plane1] {
        for &v in plane.as_slice() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Decodes a two-plane file, checking magic, version, channel count,
/// reserved bytes and length.
pub fn decode_planes(magic: [u8; 4], bytes: &[u8]) -> std::result::Result<(Image, Image), String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("truncated header ({} bytes)", bytes.len()));
    }
    if bytes[0..4] != magic {
        return Err(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[0..4]),
            String::from_utf8_lossy(&magic)
        ));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let w = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    if bytes[14] != CHANNELS {
        return Err(format!("expected {CHANNELS} channels, found {}", bytes[14]));
    }
    if bytes[15..20].iter().any(|&b| b != 0) {
        return Err("reserved bytes are not zero".into());
    }
    let n = w.checked_mul(h).ok_or_else(|| format!("dimensions {w}x{h} overflow"))?;
    let expected = HEADER_LEN + 8 * n;
    if bytes.len() != expected {
        return Err(format!("expected {expected} bytes, found {}", bytes.len()));
    }
    let read_plane = |offset: usize| -> Vec<f64> {
        bytes[offset..offset + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect()
    };
    let p0 = read_plane(HEADER_LEN);
    let p1 = read_plane(HEADER_LEN + 4 * n);
    Ok((
        Grid::from_vec(w, h, p0).map_err(|e| e.to_string())?,
        Grid::from_vec(w, h, p1).map_err(|e| e.to_string())?,
    ))
}

/// `<dir>/<j>_<i>.cmap`
pub fn cmap_path(dir: &Path, j: usize, i: usize) -> PathBuf {
    dir.join(format!("{j}_{i}.cmap"))
}

pub fn write_cmap(path: &Path, pair: &UncertaintyPair) -> Result<()> {
    let bytes = encode_planes(CMAP_MAGIC, &pair.photo, &pair.geo)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a `.cmap` file for the pair `(j, i)`. Any failure is reported as a
/// provider error naming the pair.
pub fn read_cmap(path: &Path, j: usize, i: usize) -> Result<UncertaintyPair> {
    let provider_err = |message: String| Error::ProviderIo {
        j,
        i,
        message: format!("{}: {message}", path.display()),
    };
    let bytes = fs::read(path).map_err(|e| provider_err(e.to_string()))?;
    let (photo, geo) = decode_planes(CMAP_MAGIC, &bytes).map_err(provider_err)?;
    let pair = UncertaintyPair { photo, geo, j, i };
    pair.validate().map_err(|e| provider_err(e.to_string()))?;
    Ok(pair)
}

fn nan_outside(values: &Image, valid: &Mask) -> Image {
    let mut out = values.clone();
    for (v, &m) in out.as_mut_slice().iter_mut().zip(valid.as_slice()) {
        if !m {
            *v = f64::NAN;
        }
    }
    out
}

fn finite_mask(plane: &Image) -> Mask {
    plane.map(f64::is_finite)
}

pub fn write_flow(path: &Path, flow: &FlowField) -> Result<()> {
    let bytes = encode_planes(
        FLOW_MAGIC,
        &nan_outside(&flow.u, &flow.valid),
        &nan_outside(&flow.v, &flow.valid),
    )?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// `<dir>/<j>_<i>.emap`
pub fn emap_path(dir: &Path, j: usize, i: usize) -> PathBuf {
    dir.join(format!("{j}_{i}.emap"))
}

pub fn write_error_maps(path: &Path, photo: &ErrorMap, geo: &ErrorMap) -> Result<()> {
    let bytes = encode_planes(
        EMAP_MAGIC,
        &nan_outside(&photo.values, &photo.valid),
        &nan_outside(&geo.values, &geo.valid),
    )?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Photometric and geometric error maps; invalid pixels read back as zero.
pub fn read_error_maps(path: &Path) -> Result<(ErrorMap, ErrorMap)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (p, g) = decode_planes(EMAP_MAGIC, &bytes).map_err(|m| Error::parse(path, 0, m))?;
    let to_map = |plane: &Image, kind| ErrorMap {
        values: plane.map(|x| if x.is_finite() { x } else { 0.0 }),
        valid: finite_mask(plane),
        kind,
    };
    Ok((to_map(&p, ErrorKind::Photo), to_map(&g, ErrorKind::Geo)))
}

pub fn read_flow(path: &Path) -> Result<FlowField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (u, v) = decode_planes(FLOW_MAGIC, &bytes).map_err(|m| Error::parse(path, 0, m))?;
    let valid = Grid::from_vec(
        u.width(),
        u.height(),
        finite_mask(&u)
            .as_slice()
            .iter()
            .zip(finite_mask(&v).as_slice())
            .map(|(a, b)| *a && *b)
            .collect(),
    )?;
    let zero_invalid = |g: &Image| g.map(|x| if x.is_finite() { x } else { 0.0 });
    Ok(FlowField {
        u: zero_invalid(&u),
        v: zero_invalid(&v),
        valid,
    })
}
