//! Binary PGM (P5) and PPM (P6) writers, maxval 255.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Linearly map `values` onto `[0, 255]`. A constant input maps to 128
/// everywhere; non-finite entries count as the minimum.
pub fn rescale_to_u8(values: &[f32]) -> Vec<u8> {
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return vec![128; values.len()];
    }
    let range = (hi - lo) as f64;
    values
        .iter()
        .map(|&v| {
            let v = if v.is_finite() { v } else { lo };
            (((v - lo) as f64 / range) * 255.0).round().clamp(0.0, 255.0) as u8
        })
        .collect()
}

/// Quantize a value in `[0,1]` to a byte.
pub fn unit_to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != width * height {
        return Err(Error::shape("encode_pgm", format!("{} pixels for {width}×{height}", pixels.len())));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

/// `pixels` holds interleaved RGB triples.
pub fn encode_ppm(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != 3 * width * height {
        return Err(Error::shape("encode_ppm", format!("{} bytes for {width}×{height} RGB", pixels.len())));
    }
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let bytes = encode_pgm(width, height, pixels)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Write a C×H×W (or 1×C×H×W) image with values in `[0,1]`. One channel is
/// replicated to gray; three are used as RGB.
pub fn write_ppm_image(path: &Path, image: &Tensor) -> Result<()> {
    let s = image.shape();
    let (c, h, w) = match s.len() {
        3 => (s[0], s[1], s[2]),
        4 if s[0] == 1 => (s[1], s[2], s[3]),
        _ => return Err(Error::shape("write_ppm", format!("expected C×H×W, got {s:?}"))),
    };
    if c != 1 && c != 3 {
        return Err(Error::shape("write_ppm", format!("need 1 or 3 channels, got {c}")));
    }
    let plane = h * w;
    let data = image.data();
    let mut rgb = Vec::with_capacity(3 * plane);
    for p in 0..plane {
        for ch in 0..3 {
            let src = if c == 1 { 0 } else { ch };
            rgb.push(unit_to_u8(data[src * plane + p]));
        }
    }
    let bytes = encode_ppm(w, h, &rgb)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parse a binary P5/P6 file into `(width, height, channels, bytes)`.
/// Only maxval 255 is accepted.
pub fn decode_pnm(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bad = |d: &str| Error::Dataset(format!("malformed PNM: {d}"));
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(bad("expected P5 or P6 magic")),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad header number"))?;
    }
    if fields[2] != 255 {
        return Err(bad("maxval must be 255"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("missing separator after header"));
    }
    pos += 1;
    let (w, h) = (fields[0], fields[1]);
    let need = w
        .checked_mul(h)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| bad("dimensions overflow"))?;
    let body = &bytes[pos..];
    if body.len() != need {
        return Err(bad(&format!("expected {need} pixel bytes, found {}", body.len())));
    }
    Ok((w, h, channels, body.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_maps_to_mid_gray() {
        assert_eq!(rescale_to_u8(&[0.0; 5]), vec![128; 5]);
        assert_eq!(rescale_to_u8(&[3.5, 3.5]), vec![128, 128]);
    }

    #[test]
    fn rescale_hits_both_ends() {
        assert_eq!(rescale_to_u8(&[-1.0, 0.0, 1.0]), vec![0, 128, 255]);
    }

    #[test]
    fn pgm_header_and_roundtrip() {
        let bytes = encode_pgm(3, 2, &[0, 1, 2, 3, 4, 5]).unwrap();
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        let (w, h, c, px) = decode_pnm(&bytes).unwrap();
        assert_eq!((w, h, c), (3, 2, 1));
        assert_eq!(px, vec![0, 1, 2, 3, 4, 5]);
        assert!(encode_pgm(3, 3, &[0; 6]).is_err());
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(decode_pnm(b"P3\n1 1\n255\n").is_err());
        assert!(decode_pnm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode_pnm(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }
}
