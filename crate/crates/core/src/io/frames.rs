//! Grayscale frame files: binary PGM (P5) and raw 8-bit with a JSON sidecar.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowfield::Frame;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Parses a binary PGM. Maxval up to 255 gives an 8-bit frame; larger maxvals
/// use two big-endian bytes per pixel.
pub fn parse_pgm(bytes: &[u8]) -> Result<Frame> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_err("truncated PGM header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(format_err("not a binary PGM (P5)"));
    }
    let mut num = |what: &str| -> Result<usize> { token()?.parse().map_err(|_| format_err(format!("bad PGM {what}"))) };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(format_err(format!("PGM maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates the header from the raster
    let data = &bytes[(pos + 1).min(bytes.len())..];
    let n = width * height;
    let wide = maxval > 255;
    let need = if wide { 2 * n } else { n };
    if data.len() < need {
        return Err(format_err(format!("PGM raster needs {need} bytes, found {}", data.len())));
    }
    let pixels: Vec<u16> = if wide {
        data[..need].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    } else {
        data[..n].iter().map(|&p| u16::from(p)).collect()
    };
    let bit_depth = usize::BITS - maxval.leading_zeros();
    Frame::new(width, height, bit_depth, pixels)
}

pub fn encode_pgm(frame: &Frame) -> Vec<u8> {
    let maxval = (1u32 << frame.bit_depth()) - 1;
    let mut out = format!("P5\n{} {}\n{}\n", frame.width(), frame.height(), maxval).into_bytes();
    if maxval > 255 {
        out.extend(frame.pixels().iter().flat_map(|p| p.to_be_bytes()));
    } else {
        out.extend(frame.pixels().iter().map(|&p| p as u8));
    }
    out
}

pub fn read_pgm(path: &Path) -> Result<Frame> {
    parse_pgm(&std::fs::read(path)?)
}

pub fn write_pgm(path: &Path, frame: &Frame) -> Result<()> {
    std::fs::write(path, encode_pgm(frame))?;
    Ok(())
}

/// Dimensions of a raw frame, stored next to it as `<file>.json`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawHeader {
    pub width: usize,
    pub height: usize,
}

pub fn sidecar_path(raw: &Path) -> PathBuf {
    let mut s = raw.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn read_raw(path: &Path) -> Result<Frame> {
    let header: RawHeader = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    let bytes = std::fs::read(path)?;
    if bytes.len() != header.width * header.height {
        return Err(format_err(format!(
            "raw frame {}x{} needs {} bytes, found {}",
            header.width,
            header.height,
            header.width * header.height,
            bytes.len()
        )));
    }
    Frame::from_u8(header.width, header.height, &bytes)
}

/// Writes an 8-bit frame and its sidecar.
pub fn write_raw(path: &Path, frame: &Frame) -> Result<()> {
    if frame.bit_depth() != 8 {
        return Err(format_err("raw frames are 8-bit only"));
    }
    std::fs::write(path, frame.pixels().iter().map(|&p| p as u8).collect::<Vec<_>>())?;
    let header = RawHeader { width: frame.width(), height: frame.height() };
    std::fs::write(sidecar_path(path), serde_json::to_string(&header)?)?;
    Ok(())
}

/// Reads a frame, choosing the format from the extension (`.pgm` or raw).
pub fn read_frame(path: &Path) -> Result<Frame> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("pgm") => read_pgm(path),
        _ => read_raw(path),
    }
}
