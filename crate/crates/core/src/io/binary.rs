//! Little-endian float grids and policy parameter files.
//!
//! A grid file is a 16-byte header (4-byte magic, u32 width, u32 height, u32
//! reserved = 0) followed by `f32` values in `[height][width][channels]`
//! order. Flow uses magic `OFBF` with two channels (dx, dy); JND maps `OFBJ`
//! and other scalar maps `OFBS`, one channel each.

use std::io::{Read, Write};
use std::path::Path;

use crate::abr::net::{NetShape, Network};
use crate::abr::PolicyParams;
use crate::error::{Error, Result};
use crate::flowfield::{FlowField, ScalarMap};
use crate::perception::JndMap;

pub const FLOW_MAGIC: &[u8; 4] = b"OFBF";
pub const JND_MAGIC: &[u8; 4] = b"OFBJ";
pub const SCALAR_MAGIC: &[u8; 4] = b"OFBS";
pub const PARAMS_MAGIC: &[u8; 4] = b"OFBP";
pub const PARAMS_VERSION: u32 = 1;

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in u32")))
}

fn write_grid(w: &mut impl Write, magic: &[u8; 4], width: usize, height: usize, values: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 4 * values.len());
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&u32_of(width, "width")?.to_le_bytes());
    buf.extend_from_slice(&u32_of(height, "height")?.to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_grid(r: &mut impl Read, magic: &[u8; 4], channels: usize) -> Result<(usize, usize, Vec<f32>)> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::Format(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&m)
        )));
    }
    let width = read_u32(r)? as usize;
    let height = read_u32(r)? as usize;
    if read_u32(r)? != 0 {
        return Err(Error::Format("reserved header field must be 0".into()));
    }
    let n = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| Error::Format("grid dimensions overflow".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 4 * n {
        return Err(Error::Format(format!(
            "{width}x{height}x{channels} grid needs {} bytes of data, found {}",
            4 * n,
            bytes.len()
        )));
    }
    let values = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok((width, height, values))
}

pub fn write_flow(w: &mut impl Write, flow: &FlowField) -> Result<()> {
    let flat: Vec<f32> = flow.vectors().iter().flatten().copied().collect();
    write_grid(w, FLOW_MAGIC, flow.width(), flow.height(), &flat)
}

pub fn read_flow(r: &mut impl Read) -> Result<FlowField> {
    let (w, h, v) = read_grid(r, FLOW_MAGIC, 2)?;
    FlowField::new(w, h, v.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
}

/// Thresholds are stored as `f32`.
pub fn write_jnd(w: &mut impl Write, jnd: &JndMap) -> Result<()> {
    let flat: Vec<f32> = jnd.thresholds().iter().map(|&t| t as f32).collect();
    write_grid(w, JND_MAGIC, jnd.width(), jnd.height(), &flat)
}

pub fn read_jnd(r: &mut impl Read) -> Result<JndMap> {
    let (w, h, v) = read_grid(r, JND_MAGIC, 1)?;
    JndMap::new(w, h, v.into_iter().map(f64::from).collect())
}

/// Values are stored as `f32`.
pub fn write_scalar_map(w: &mut impl Write, map: &ScalarMap) -> Result<()> {
    let flat: Vec<f32> = map.values().iter().map(|&t| t as f32).collect();
    write_grid(w, SCALAR_MAGIC, map.width(), map.height(), &flat)
}

pub fn read_scalar_map(r: &mut impl Read) -> Result<ScalarMap> {
    let (w, h, v) = read_grid(r, SCALAR_MAGIC, 1)?;
    ScalarMap::new(w, h, v.into_iter().map(f64::from).collect())
}

/// Header: magic, u32 version, u32 tensor count. Then per tensor: u32 rank,
/// u32 dims, and the `f32` values. Actor tensors come first, then critic.
pub fn write_params(w: &mut impl Write, params: &PolicyParams) -> Result<()> {
    let nets = [&params.actor, &params.critic];
    let tensors: usize = nets.iter().map(|n| n.shape().tensors().len()).sum();
    let mut buf = Vec::new();
    buf.extend_from_slice(PARAMS_MAGIC);
    buf.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
    buf.extend_from_slice(&u32_of(tensors, "tensor count")?.to_le_bytes());
    for net in nets {
        let mut values = net.params().iter();
        for (_, dims) in net.shape().tensors() {
            buf.extend_from_slice(&u32_of(dims.len(), "rank")?.to_le_bytes());
            for &d in &dims {
                buf.extend_from_slice(&u32_of(d, "dimension")?.to_le_bytes());
            }
            for v in values.by_ref().take(dims.iter().product()) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_params(r: &mut impl Read) -> Result<PolicyParams> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != PARAMS_MAGIC {
        return Err(Error::Format("not a policy parameter file".into()));
    }
    let version = read_u32(r)?;
    if version != PARAMS_VERSION {
        return Err(Error::Format(format!("unsupported parameter file version {version}")));
    }
    let count = read_u32(r)? as usize;
    if count != 12 {
        return Err(Error::Format(format!("expected 12 tensors (actor then critic), found {count}")));
    }
    let mut nets = Vec::with_capacity(2);
    for _ in 0..2 {
        let mut dims_all = Vec::with_capacity(6);
        let mut values = Vec::new();
        for _ in 0..6 {
            let rank = read_u32(r)? as usize;
            if rank == 0 || rank > 4 {
                return Err(Error::Format(format!("tensor rank {rank} out of range")));
            }
            let dims = (0..rank).map(|_| read_u32(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let mut bytes = vec![0u8; 4 * n];
            r.read_exact(&mut bytes)?;
            values.extend(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
            dims_all.push(dims);
        }
        let shape = NetShape::from_tensors(&dims_all).map_err(|e| Error::Format(e.to_string()))?;
        nets.push(Network::from_params(shape, values).map_err(|e| Error::Format(e.to_string()))?);
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after parameters".into()));
    }
    let critic = nets.pop().expect("two nets");
    let actor = nets.pop().expect("two nets");
    Ok(PolicyParams { actor, critic })
}

fn save_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn save_params(path: &Path, params: &PolicyParams) -> Result<()> {
    save_with(path, |b| write_params(b, params))
}

pub fn load_params(path: &Path) -> Result<PolicyParams> {
    read_params(&mut std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn save_flow(path: &Path, flow: &FlowField) -> Result<()> {
    save_with(path, |b| write_flow(b, flow))
}

pub fn load_flow(path: &Path) -> Result<FlowField> {
    read_flow(&mut std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn save_jnd(path: &Path, jnd: &JndMap) -> Result<()> {
    save_with(path, |b| write_jnd(b, jnd))
}

pub fn load_jnd(path: &Path) -> Result<JndMap> {
    read_jnd(&mut std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn save_scalar_map(path: &Path, map: &ScalarMap) -> Result<()> {
    save_with(path, |b| write_scalar_map(b, map))
}

pub fn load_scalar_map(path: &Path) -> Result<ScalarMap> {
    read_scalar_map(&mut std::io::BufReader::new(std::fs::File::open(path)?))
}
