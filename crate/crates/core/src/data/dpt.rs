//! The DPT single-tensor container.
//!
//! ```text
//! "DPTF" | version: u32 LE = 1 | dtype: u8 = 1 (f32) | ndim: u8
//!        | ndim × extent: u32 LE | payload: f32 LE, row-major | crc32(payload): u32 LE
//! ```

use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"DPTF";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 1;

pub fn encode(t: &Tensor) -> Vec<u8> {
    assert!(t.ndim() <= u8::MAX as usize, "too many axes for DPT");
    let mut out = Vec::with_capacity(10 + 4 * t.ndim() + 4 * t.len() + 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(DTYPE_F32);
    out.push(t.ndim() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&u32::try_from(d).expect("extent exceeds u32").to_le_bytes());
    }
    let start = out.len();
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out[start..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn take<'a>(bytes: &'a [u8], at: usize, n: usize) -> std::result::Result<&'a [u8], FormatError> {
    bytes.get(at..at + n).ok_or(FormatError::Truncated {
        needed: at + n,
        available: bytes.len(),
    })
}

/// Decode one record from the front of `bytes`, returning it and the bytes consumed.
pub fn decode_prefix(bytes: &[u8]) -> std::result::Result<(Tensor, usize), FormatError> {
    let magic = take(bytes, 0, 4)?;
    if magic != MAGIC {
        return Err(FormatError::BadMagic { found: magic.try_into().unwrap() });
    }
    let version = u32::from_le_bytes(take(bytes, 4, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let dtype = take(bytes, 8, 1)?[0];
    if dtype != DTYPE_F32 {
        return Err(FormatError::UnsupportedDtype(dtype));
    }
    let ndim = take(bytes, 9, 1)?[0] as usize;
    let mut at = 10;
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(u32::from_le_bytes(take(bytes, at, 4)?.try_into().unwrap()) as usize);
        at += 4;
    }
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| FormatError::LengthMismatch(format!("extents {shape:?} overflow")))?;
    let available = bytes.len().saturating_sub(at + 4);
    if count > available {
        return Err(FormatError::LengthMismatch(format!(
            "extents {shape:?} need {count} payload bytes, {available} present"
        )));
    }
    let payload = take(bytes, at, count)?;
    let stored = u32::from_le_bytes(take(bytes, at + count, 4)?.try_into().unwrap());
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(FormatError::Checksum { stored, computed });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let tensor = Tensor::new(shape, data).map_err(|e| FormatError::LengthMismatch(e.to_string()))?;
    Ok((tensor, at + count + 4))
}

/// Decode a buffer holding exactly one record.
pub fn decode(bytes: &[u8]) -> std::result::Result<Tensor, FormatError> {
    let (t, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(FormatError::TrailingBytes);
    }
    Ok(t)
}

pub fn save_tensor(path: &Path, t: &Tensor) -> Result<()> {
    std::fs::write(path, encode(t)).map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|source| Error::Format { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_element_layout_is_22_bytes() {
        let b = encode(&Tensor::from_vec(vec![1.0]));
        assert_eq!(b.len(), 22);
        assert_eq!(&b[..4], b"DPTF");
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        assert_eq!(b[8], 1);
        assert_eq!(b[9], 1);
        assert_eq!(&b[10..14], &[1, 0, 0, 0]);
        assert_eq!(&b[14..18], &1.0f32.to_le_bytes());
        assert_eq!(&b[18..22], &crc32fast::hash(&1.0f32.to_le_bytes()).to_le_bytes());
    }

    #[test]
    fn distinct_errors() {
        let good = encode(&Tensor::from_vec(vec![1.0, 2.0]));
        let mut b = good.clone();
        b[0] = b'Q';
        assert!(matches!(decode(&b), Err(FormatError::BadMagic { .. })));
        let mut b = good.clone();
        b[4] = 2;
        assert_eq!(decode(&b), Err(FormatError::UnsupportedVersion(2)));
        let mut b = good.clone();
        b[8] = 7;
        assert_eq!(decode(&b), Err(FormatError::UnsupportedDtype(7)));
        let mut b = good.clone();
        b[10] = 3;
        assert!(matches!(decode(&b), Err(FormatError::LengthMismatch(_))));
        let mut b = good.clone();
        b[15] ^= 0x10;
        assert!(matches!(decode(&b), Err(FormatError::Checksum { .. })));
        assert!(matches!(decode(&good[..good.len() - 1]), Err(FormatError::LengthMismatch(_) | FormatError::Truncated { .. })));
        let mut b = good.clone();
        b.push(0);
        assert_eq!(decode(&b), Err(FormatError::TrailingBytes));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.dpt");
        let t = Tensor::new(vec![2, 3], vec![0.5, -1.0, f32::MIN_POSITIVE, 3.0, 1e30, -0.0]).unwrap();
        save_tensor(&p, &t).unwrap();
        let u = load_tensor(&p).unwrap();
        assert_eq!(t.shape(), u.shape());
        let bits = |x: &Tensor| x.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&t), bits(&u));
    }

    proptest! {
        #[test]
        fn roundtrip_is_bitwise(shape in proptest::collection::vec(1usize..5, 0..4), seed in any::<u64>()) {
            let n: usize = shape.iter().product();
            let data: Vec<f32> = (0..n)
                .map(|i| f32::from_bits((seed.wrapping_mul(6364136223846793005).wrapping_add((i as u64).wrapping_mul(1442695040888963407)) >> 32) as u32 & 0x7f7f_ffff))
                .collect();
            let t = Tensor::new(shape, data).unwrap();
            let back = decode(&encode(&t)).unwrap();
            prop_assert_eq!(back.shape(), t.shape());
            let a: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = t.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn truncations_never_panic(len in 0usize..60, cut in 0usize..300) {
            let t = Tensor::from_vec((0..len).map(|i| i as f32).collect());
            let b = encode(&t);
            let cut = cut.min(b.len());
            if cut < b.len() {
                prop_assert!(decode(&b[..cut]).is_err());
            }
        }
    }
}
