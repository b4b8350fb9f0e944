use super::SliceStack;
use crate::error::{Error, Result};

pub const DEFAULT_CANONICAL_SIZE: usize = 240;

/// Center-crops or symmetrically zero-pads every channel to `size`×`size`.
///
/// Cropping keeps the window starting at `(H - size) / 2`; padding puts
/// `(size - H) / 2` zero rows before and the remainder after (same for columns).
pub fn resize_center(slice: &SliceStack, size: usize) -> Result<SliceStack> {
    if size == 0 {
        return Err(Error::Dimension("canonical size must be positive".into()));
    }
    let (h, w) = (slice.height(), slice.width());
    if h == size && w == size {
        return Ok(slice.clone());
    }
    let mut out = vec![0.0f32; slice.channels() * size * size];
    // For each axis: (source start, destination start, run length).
    let axis = |len: usize| -> (usize, usize, usize) {
        if len >= size {
            ((len - size) / 2, 0, size)
        } else {
            (0, (size - len) / 2, len)
        }
    };
    let (src_r, dst_r, rows) = axis(h);
    let (src_c, dst_c, cols) = axis(w);
    for c in 0..slice.channels() {
        let plane = slice.channel(c);
        let dst_plane = &mut out[c * size * size..(c + 1) * size * size];
        for r in 0..rows {
            let src = (src_r + r) * w + src_c;
            let dst = (dst_r + r) * size + dst_c;
            dst_plane[dst..dst + cols].copy_from_slice(&plane[src..src + cols]);
        }
    }
    SliceStack::new(slice.modality_names().to_vec(), size, size, out)
}

/// Min-max rescales one channel in place to [-1, 1]. A constant channel
/// becomes constant -1; a channel already spanning exactly [-1, 1] is left
/// untouched so that rescaling is idempotent bit-for-bit.
pub fn rescale_channel(plane: &mut [f32]) -> Result<()> {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in plane.iter() {
        if !v.is_finite() {
            return Err(Error::Data(format!("non-finite intensity {v}")));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo == -1.0 && hi == 1.0 {
        return Ok(());
    }
    if hi == lo {
        plane.fill(-1.0);
        return Ok(());
    }
    let (lo, hi) = (lo as f64, hi as f64);
    let scale = 2.0 / (hi - lo);
    for v in plane.iter_mut() {
        let r = ((*v as f64 - lo) * scale - 1.0) as f32;
        *v = r.clamp(-1.0, 1.0);
    }
    Ok(())
}

/// Crops/pads to the canonical square size, then rescales each channel to [-1, 1].
pub fn preprocess(slice: &SliceStack, canonical_size: usize) -> Result<SliceStack> {
    if slice.data().is_empty() {
        return Err(Error::Dimension("empty slice".into()));
    }
    let mut out = resize_center(slice, canonical_size)?;
    for c in 0..out.channels() {
        rescale_channel(out.channel_mut(c))?;
    }
    Ok(out)
}
