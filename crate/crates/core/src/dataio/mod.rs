//! Slice rasters, the MSL file format, preprocessing, corpus manifests and
//! the synthetic phantom corpus.

mod manifest;
mod msl;
mod phantom;
mod preprocess;

pub use manifest::{CorpusManifest, ManifestEntry, Split};
pub use msl::{decode_slice, encode_slice, read_slice_file, write_slice_file, MSL_MAGIC, MSL_VERSION};
pub use phantom::{
    generate_phantom_corpus, render_phantom_slice, PhantomConfig, PhantomCorpus, PhantomSlice,
    Tissue, PHANTOM_MODALITIES,
};
pub use preprocess::{preprocess, rescale_channel, resize_center, DEFAULT_CANONICAL_SIZE};

use crate::error::{Error, Result};

/// A C×H×W raster, one channel per modality, stored channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceStack {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
    modality_names: Vec<String>,
}

impl SliceStack {
    pub fn new(
        modality_names: Vec<String>,
        height: usize,
        width: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        let channels = modality_names.len();
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "slice dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "data length {} does not match {channels}x{height}x{width}",
                data.len()
            )));
        }
        for (i, name) in modality_names.iter().enumerate() {
            if modality_names[..i].contains(name) {
                return Err(Error::Argument(format!("duplicate modality name {name:?}")));
            }
        }
        Ok(SliceStack {
            channels,
            height,
            width,
            data,
            modality_names,
        })
    }

    /// Builds a stack whose channels are named `c0`, `c1`, ...
    pub fn unnamed(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(generic_names(channels), height, width, data)
    }

    pub fn filled(modality_names: Vec<String>, height: usize, width: usize, value: f32) -> Result<Self> {
        let len = modality_names.len() * height * width;
        Self::new(modality_names, height, width, vec![value; len])
    }

    /// Stacks single-channel planes of identical size.
    pub fn from_planes(modality_names: Vec<String>, height: usize, width: usize, planes: &[&[f32]]) -> Result<Self> {
        if planes.len() != modality_names.len() {
            return Err(Error::Shape(format!(
                "{} planes for {} modality names",
                planes.len(),
                modality_names.len()
            )));
        }
        let mut data = Vec::with_capacity(planes.len() * height * width);
        for plane in planes {
            if plane.len() != height * width {
                return Err(Error::Shape(format!(
                    "plane of length {} does not match {height}x{width}",
                    plane.len()
                )));
            }
            data.extend_from_slice(plane);
        }
        Self::new(modality_names, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn modality_names(&self) -> &[String] {
        &self.modality_names
    }

    pub fn channel(&self, index: usize) -> &[f32] {
        let len = self.plane_len();
        &self.data[index * len..(index + 1) * len]
    }

    pub fn channel_mut(&mut self, index: usize) -> &mut [f32] {
        let len = self.plane_len();
        &mut self.data[index * len..(index + 1) * len]
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.modality_names.iter().position(|n| n == name)
    }

    pub fn with_names(mut self, modality_names: Vec<String>) -> Result<Self> {
        if modality_names.len() != self.channels {
            return Err(Error::Shape(format!(
                "{} names for a {}-channel stack",
                modality_names.len(),
                self.channels
            )));
        }
        self.modality_names = modality_names;
        Self::new(self.modality_names, self.height, self.width, self.data)
    }

    /// Copies one channel out as a single-channel target slice.
    pub fn extract(&self, index: usize) -> TargetSlice {
        TargetSlice {
            height: self.height,
            width: self.width,
            data: self.channel(index).to_vec(),
            modality_name: self.modality_names[index].clone(),
        }
    }
}

/// A single-channel H×W raster for the target modality.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSlice {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
    pub modality_name: String,
}

impl TargetSlice {
    pub fn new(modality_name: impl Into<String>, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!("target dimensions {height}x{width}")));
        }
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "target data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        Ok(TargetSlice {
            height,
            width,
            data,
            modality_name: modality_name.into(),
        })
    }

    pub fn from_stack(stack: SliceStack) -> Result<Self> {
        if stack.channels != 1 {
            return Err(Error::Shape(format!(
                "expected a single-channel slice, found {} channels",
                stack.channels
            )));
        }
        let name = stack.modality_names[0].clone();
        Self::new(name, stack.height, stack.width, stack.data)
    }

    pub fn into_stack(self) -> SliceStack {
        SliceStack {
            channels: 1,
            height: self.height,
            width: self.width,
            data: self.data,
            modality_names: vec![self.modality_name],
        }
    }

    pub fn same_shape(&self, other: &TargetSlice) -> bool {
        self.height == other.height && self.width == other.width
    }
}

pub(crate) fn generic_names(channels: usize) -> Vec<String> {
    (0..channels).map(|i| format!("c{i}")).collect()
}
