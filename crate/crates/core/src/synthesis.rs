//! Inference from a checkpoint for any non-empty input subset, plus
//! difference heat maps and 8-bit renderings.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use candle_core::{DType, Tensor};
use image::{GrayImage, ImageFormat, Rgb, RgbImage};

use crate::conditioning::{ConditionVector, MISSING_FILL};
use crate::dataio::{preprocess, read_slice_file, write_slice_file, SliceStack, TargetSlice};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::losses::{apply_mask, channel_mask};
use crate::training::{load_checkpoint, Checkpoint};

/// Slices per forward pass when synthesizing many at once.
const BATCH: usize = 8;

/// A loaded generator ready for inference. Parameters are never mutated,
/// so one instance can serve concurrent callers.
pub struct Synthesizer {
    ckpt: Checkpoint,
}

impl Synthesizer {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(Synthesizer {
            ckpt: load_checkpoint(path)?,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Self {
        Synthesizer { ckpt }
    }

    pub fn modalities(&self) -> &[String] {
        &self.ckpt.meta.modalities
    }

    pub fn target(&self) -> &str {
        &self.ckpt.meta.target
    }

    pub fn canonical_size(&self) -> usize {
        self.ckpt.meta.canonical_size
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.ckpt
    }

    /// Synthesizes from preprocessed stacks whose channels follow the
    /// checkpoint's modality ordering; channels absent in `c` are masked.
    pub fn synthesize_stacks(&self, stacks: &[SliceStack], c: &ConditionVector) -> Result<Vec<TargetSlice>> {
        c.require_nonempty()?;
        let n = self.modalities().len();
        if c.len() != n {
            return Err(Error::Condition(format!("condition of length {} for {n} modalities", c.len())));
        }
        let s = self.canonical_size();
        let mut out = Vec::with_capacity(stacks.len());
        for chunk in stacks.chunks(BATCH) {
            let mut data = Vec::with_capacity(chunk.len() * n * s * s);
            for stack in chunk {
                if (stack.channels(), stack.height(), stack.width()) != (n, s, s) {
                    return Err(Error::Shape(format!(
                        "input stack is {}x{}x{}, checkpoint expects {n}x{s}x{s}",
                        stack.channels(),
                        stack.height(),
                        stack.width()
                    )));
                }
                data.extend_from_slice(stack.data());
            }
            let b = chunk.len();
            let device = candle_core::Device::Cpu;
            let x = apply_mask(&Tensor::from_vec(data, (b, n, s, s), &device)?, c)?;
            let cond = channel_mask(c, DType::F32, &device)?.broadcast_as((b, n, s, s))?.contiguous()?;
            let y = self.ckpt.models.g1.forward(&x, &cond)?.to_dtype(DType::F32)?;
            for i in 0..b {
                let plane = y.get(i)?.flatten_all()?.to_vec1::<f32>()?;
                out.push(TargetSlice::new(self.target(), s, s, plane)?);
            }
        }
        Ok(out)
    }

    /// Reads, preprocesses and synthesizes from `name → MSL file` inputs,
    /// given in any order.
    pub fn synthesize_files(&self, inputs: &[(String, PathBuf)]) -> Result<TargetSlice> {
        let names: Vec<&str> = inputs.iter().map(|(n, _)| n.as_str()).collect();
        if let Some(dup) = names.iter().enumerate().find(|(i, n)| names[..*i].contains(n)) {
            return Err(Error::Argument(format!("modality {:?} given twice", dup.1)));
        }
        let c = ConditionVector::from_names(self.modalities(), &names)?;
        c.require_nonempty()?;
        let s = self.canonical_size();
        let mut stack = SliceStack::filled(self.modalities().to_vec(), s, s, MISSING_FILL)?;
        for (name, path) in inputs {
            let raw = read_slice_file(path)?;
            if raw.channels() != 1 {
                return Err(Error::Shape(format!(
                    "{} holds {} channels, expected a single modality",
                    path.display(),
                    raw.channels()
                )));
            }
            let plane = preprocess(&raw, s)?;
            let i = stack.channel_index(name).expect("validated by from_names");
            stack.channel_mut(i).copy_from_slice(plane.data());
        }
        Ok(self.synthesize_stacks(std::slice::from_ref(&stack), &c)?.remove(0))
    }
}

/// Loads `checkpoint` and synthesizes `target` from the given inputs.
pub fn synthesize(checkpoint: &Path, inputs: &[(String, PathBuf)], target: &str) -> Result<TargetSlice> {
    if inputs.is_empty() {
        return Err(Error::Condition("at least one input modality is required".into()));
    }
    let synth = Synthesizer::load(checkpoint)?;
    if synth.target() != target {
        return Err(Error::Argument(format!(
            "checkpoint synthesizes {:?}, not {target:?}",
            synth.target()
        )));
    }
    synth.synthesize_files(inputs)
}

/// Absolute difference at which the heat ramp saturates to white.
pub const HEAT_FULL_SCALE: f32 = 1.0;

/// Black → red → yellow → white, for `t` in [0, 1].
pub fn heat_color(t: f32) -> [u8; 3] {
    let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) } * 3.0;
    let ramp = |x: f32| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    [ramp(t), ramp(t - 1.0), ramp(t - 2.0)]
}

/// |synthetic − real| per pixel.
pub fn difference_raster(synthetic: &TargetSlice, real: &TargetSlice) -> Result<TargetSlice> {
    if !synthetic.same_shape(real) {
        return Err(Error::Shape(format!(
            "cannot compare {}x{} with {}x{}",
            synthetic.height, synthetic.width, real.height, real.width
        )));
    }
    let data = synthetic.data.iter().zip(&real.data).map(|(a, b)| (a - b).abs()).collect();
    TargetSlice::new(format!("{}_diff", synthetic.modality_name), synthetic.height, synthetic.width, data)
}

pub fn encode_heat_png(diff: &TargetSlice) -> Result<Vec<u8>> {
    let img = RgbImage::from_fn(diff.width as u32, diff.height as u32, |x, y| {
        let v = diff.data[y as usize * diff.width + x as usize];
        Rgb(heat_color(v / HEAT_FULL_SCALE))
    });
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

/// Writes the heat map to `png` and the raw difference raster to the MSL
/// file next to it (same stem, `.msl`). Returns the raw raster.
pub fn difference_map(synthetic: &TargetSlice, real: &TargetSlice, png: &Path) -> Result<TargetSlice> {
    let diff = difference_raster(synthetic, real)?;
    write_atomic(png, &encode_heat_png(&diff)?)?;
    write_slice_file(&png.with_extension("msl"), &diff.clone().into_stack())?;
    Ok(diff)
}

/// Maps [-1, 1] to 0..=255.
pub fn to_gray8(v: f32) -> u8 {
    (((v.clamp(-1.0, 1.0) + 1.0) * 0.5) * 255.0).round() as u8
}

pub fn encode_grayscale_png(plane: &[f32], height: usize, width: usize) -> Result<Vec<u8>> {
    if plane.len() != height * width {
        return Err(Error::Shape(format!("{} values for a {height}x{width} image", plane.len())));
    }
    let img = GrayImage::from_fn(width as u32, height as u32, |x, y| {
        image::Luma([to_gray8(plane[y as usize * width + x as usize])])
    });
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}
