//! MSL: a minimal little-endian container for C×H×W float32 slices.
//!
//! Layout: `"MMSL"`, u32 version (1), u32 C, u32 H, u32 W, then C·H·W f32
//! values in channel-major, row-major order.

use std::fs;
use std::path::Path;

use super::{generic_names, SliceStack};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const MSL_MAGIC: &[u8; 4] = b"MMSL";
pub const MSL_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

pub fn encode_slice(stack: &SliceStack) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * stack.data().len());
    out.extend_from_slice(MSL_MAGIC);
    out.extend_from_slice(&MSL_VERSION.to_le_bytes());
    for dim in [stack.channels(), stack.height(), stack.width()] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for v in stack.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses an MSL byte buffer. Channels are named `c0..`; callers attach
/// modality names from the manifest.
pub fn decode_slice(bytes: &[u8]) -> Result<SliceStack> {
    if bytes.len() < 4 || &bytes[..4] != MSL_MAGIC {
        return Err(Error::Format("missing MMSL magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Length {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    let version = word(1);
    if version != MSL_VERSION {
        return Err(Error::Format(format!("unsupported MSL version {version}")));
    }
    let (c, h, w) = (word(2) as usize, word(3) as usize, word(4) as usize);
    if c == 0 || h == 0 || w == 0 {
        return Err(Error::Dimension(format!("header declares {c}x{h}x{w}")));
    }
    let n = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| Error::Format(format!("header dimensions {c}x{h}x{w} overflow")))?;
    let expected = HEADER_LEN + 4 * n;
    if bytes.len() < expected {
        return Err(Error::Length {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            bytes.len() - expected
        )));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    SliceStack::new(generic_names(c), h, w, data)
}

pub fn write_slice_file(path: &Path, stack: &SliceStack) -> Result<()> {
    write_atomic(path, &encode_slice(stack))
}

pub fn read_slice_file(path: &Path) -> Result<SliceStack> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_slice(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zeros_round_trip() {
        let stack = SliceStack::unnamed(3, 4, 4, vec![0.0; 48]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.msl");
        write_slice_file(&path, &stack).unwrap();
        assert_eq!(read_slice_file(&path).unwrap(), stack);
    }

    #[test]
    fn header_bytes_are_exact() {
        let stack = SliceStack::unnamed(2, 3, 5, vec![1.5; 30]).unwrap();
        let bytes = encode_slice(&stack);
        assert_eq!(&bytes[0..4], b"MMSL");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[3, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &[5, 0, 0, 0]);
        assert_eq!(&bytes[20..24], &1.5f32.to_le_bytes());
        assert_eq!(bytes.len(), 20 + 30 * 4);
    }

    #[test]
    fn ramp_reads_back_bit_exact() {
        let n = 240 * 240;
        let data: Vec<f32> = (0..n).map(|i| i as f32 / n as f32 * 2.0 - 1.0).collect();
        let stack = SliceStack::unnamed(1, 240, 240, data.clone()).unwrap();
        let bytes = encode_slice(&stack);
        // byte-level oracle: every payload word equals the written value's LE bytes
        for (i, v) in data.iter().enumerate() {
            assert_eq!(&bytes[20 + 4 * i..24 + 4 * i], &v.to_le_bytes());
        }
        let back = decode_slice(&bytes).unwrap();
        assert!(back.data().iter().zip(&data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn bad_magic_is_format_error() {
        let mut bytes = encode_slice(&SliceStack::unnamed(1, 1, 1, vec![0.0]).unwrap());
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_slice(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn bad_version_is_format_error() {
        let mut bytes = encode_slice(&SliceStack::unnamed(1, 1, 1, vec![0.0]).unwrap());
        bytes[4] = 2;
        assert!(matches!(decode_slice(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload_is_length_error() {
        let bytes = encode_slice(&SliceStack::unnamed(1, 2, 2, vec![0.0; 4]).unwrap());
        let err = decode_slice(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Length { expected: 36, found: 33 }));
        assert!(matches!(decode_slice(&bytes[..10]), Err(Error::Length { .. })));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            (c, h, w, bits) in (1usize..4, 1usize..6, 1usize..6).prop_flat_map(|(c, h, w)| {
                (Just(c), Just(h), Just(w), proptest::collection::vec(any::<u32>(), c * h * w))
            })
        ) {
            let data: Vec<f32> = bits.iter().map(|b| f32::from_bits(*b)).collect();
            let stack = SliceStack::unnamed(c, h, w, data).unwrap();
            let back = decode_slice(&encode_slice(&stack)).unwrap();
            prop_assert_eq!(back.channels(), c);
            let same = back.data().iter().zip(stack.data()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
        }
    }
}
