//! Binary 8-bit PGM (P5) reading and writing.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Intensities are quantized with `round(v * 255)`, clamped to `[0, 255]`.
pub fn write(path: &Path, width: usize, height: usize, pixels: &[f32]) -> Result<()> {
    debug_assert_eq!(pixels.len(), width * height);
    let mut buf = format!("P5\n{width} {height}\n255\n").into_bytes();
    buf.extend(
        pixels
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Returns `(width, height, pixels)` with intensities mapped to `[0, 1]`.
pub fn read(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (width, height, maxval, offset) = parse_header(path, &bytes)?;
    let n = width * height;
    let data = &bytes[offset..];
    if maxval > 255 {
        return Err(pgm_err(path, "only 8-bit PGM is supported"));
    }
    if data.len() < n {
        return Err(pgm_err(
            path,
            format!("expected {n} pixel bytes, found {}", data.len()),
        ));
    }
    let scale = maxval as f32;
    let pixels = data[..n].iter().map(|&v| f32::from(v) / scale).collect();
    Ok((width, height, pixels))
}

/// Reads only the header: `(width, height)`.
pub fn read_size(path: &Path) -> Result<(usize, usize)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, h, _, _) = parse_header(path, &bytes)?;
    Ok((w, h))
}

fn pgm_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Pgm {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<(usize, usize, usize, usize)> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(pgm_err(path, "missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(pgm_err(path, "truncated header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| pgm_err(path, "bad header number"))?;
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(pgm_err(path, "truncated header"));
    }
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 || maxval == 0 {
        return Err(pgm_err(path, "zero dimension or maxval"));
    }
    Ok((w, h, maxval, pos + 1))
}
