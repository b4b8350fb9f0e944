//! The two-stream conditional generator and the patch discriminator.
//!
//! Networks are plain parameter stores plus a forward function over
//! `(batch, channel, height, width)` tensors; gradients come from candle's
//! autodiff over [`candle_core::Var`] parameters.

mod layers;
mod params;

use candle_core::{DType, Device, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conditioning::ConditionPlanes;
use crate::dataio::SliceStack;
use crate::error::{Error, Result};
use layers::{instance_norm, leaky_relu, Conv, UpConv};
pub use params::{load_tensors, save_tensors, ParamStore, INIT_STD};

/// Tanh output is scaled by this factor so that f32 saturation still lands
/// strictly inside (-1, 1).
pub const OUTPUT_SCALE: f64 = 1.0 - 1.0 / (1u64 << 20) as f64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Number of condition planes (the modality count n).
    pub cond_channels: usize,
    pub base_width: usize,
    pub n_res_blocks: usize,
    pub canonical_size: usize,
}

impl GeneratorSpec {
    pub fn new(in_channels: usize, out_channels: usize, cond_channels: usize) -> Self {
        GeneratorSpec {
            in_channels,
            out_channels,
            cond_channels,
            base_width: 64,
            n_res_blocks: 6,
            canonical_size: crate::dataio::DEFAULT_CANONICAL_SIZE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.cond_channels == 0 {
            return Err(Error::Argument("generator channel counts must be positive".into()));
        }
        if self.base_width == 0 || self.n_res_blocks == 0 {
            return Err(Error::Argument("generator needs base_width ≥ 1 and n_res_blocks ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    pub in_channels: usize,
    pub base_width: usize,
    /// Number of stride-2 layers; the score map is H/2^n_layers × W/2^n_layers.
    pub n_layers: usize,
}

impl DiscriminatorSpec {
    pub fn new(in_channels: usize) -> Self {
        DiscriminatorSpec {
            in_channels,
            base_width: 64,
            n_layers: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.base_width == 0 || self.n_layers == 0 {
            return Err(Error::Argument("discriminator counts must be positive".into()));
        }
        Ok(())
    }

    pub fn stride_product(&self) -> usize {
        1 << self.n_layers
    }
}

/// Stride-1 7×7 input layer followed by two stride-2 downsamplers.
#[derive(Clone)]
struct Encoder {
    layers: [Conv; 3],
    normalize: bool,
}

impl Encoder {
    fn new<R: Rng>(store: &mut ParamStore, name: &str, c_in: usize, width: usize, normalize: bool, rng: &mut R) -> Result<Self> {
        Ok(Encoder {
            layers: [
                Conv::new(store, &format!("{name}.0"), c_in, width, 7, 1, 3, rng)?,
                Conv::new(store, &format!("{name}.1"), width, 2 * width, 3, 2, 1, rng)?,
                Conv::new(store, &format!("{name}.2"), 2 * width, 4 * width, 3, 2, 1, rng)?,
            ],
            normalize,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(&h)?;
            if self.normalize {
                h = instance_norm(&h)?;
            }
            h = h.relu()?;
        }
        Ok(h)
    }
}

#[derive(Clone)]
struct ResBlock {
    a: Conv,
    b: Conv,
}

impl ResBlock {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = instance_norm(&self.a.forward(x)?)?.relu()?;
        let h = instance_norm(&self.b.forward(&h)?)?;
        Ok((x + h)?)
    }
}

/// Encoder-decoder generator with separate image and condition encoders
/// whose features are concatenated and fused by a 1×1 convolution ahead of
/// the residual blocks.
#[derive(Clone)]
pub struct Generator {
    spec: GeneratorSpec,
    params: ParamStore,
    enc_img: Encoder,
    enc_cond: Encoder,
    fuse: Conv,
    blocks: Vec<ResBlock>,
    up: [UpConv; 2],
    out: Conv,
}

impl Generator {
    pub fn new<R: Rng>(spec: GeneratorSpec, dtype: DType, device: &Device, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let w = spec.base_width;
        let mut p = ParamStore::new(dtype, device);
        let enc_img = Encoder::new(&mut p, "enc_img", spec.in_channels, w, true, rng)?;
        // Condition planes are spatially constant; instance norm would erase them.
        let enc_cond = Encoder::new(&mut p, "enc_cond", spec.cond_channels, w, false, rng)?;
        let fuse = Conv::new(&mut p, "fuse", 8 * w, 4 * w, 1, 1, 0, rng)?;
        let blocks = (0..spec.n_res_blocks)
            .map(|i| {
                Ok(ResBlock {
                    a: Conv::new(&mut p, &format!("res.{i}.a"), 4 * w, 4 * w, 3, 1, 1, rng)?,
                    b: Conv::new(&mut p, &format!("res.{i}.b"), 4 * w, 4 * w, 3, 1, 1, rng)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let up = [
            UpConv::new(&mut p, "up.0", 4 * w, 2 * w, rng)?,
            UpConv::new(&mut p, "up.1", 2 * w, w, rng)?,
        ];
        let out = Conv::new(&mut p, "out", w, spec.out_channels, 7, 1, 3, rng)?;
        Ok(Generator {
            spec,
            params: p,
            enc_img,
            enc_cond,
            fuse,
            blocks,
            up,
            out,
        })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// `images`: (B, in_channels, H, W); `cond`: (B, cond_channels, H, W).
    /// Returns (B, out_channels, H, W) with values in (-1, 1).
    pub fn forward(&self, images: &Tensor, cond: &Tensor) -> Result<Tensor> {
        let (b, c, h, w) = images
            .dims4()
            .map_err(|_| Error::Shape(format!("generator input must be 4-D, got {:?}", images.dims())))?;
        let (cb, cc, ch, cw) = cond
            .dims4()
            .map_err(|_| Error::Shape(format!("condition input must be 4-D, got {:?}", cond.dims())))?;
        if c != self.spec.in_channels {
            return Err(Error::Shape(format!(
                "generator expects {} input channels, got {c}",
                self.spec.in_channels
            )));
        }
        if cc != self.spec.cond_channels {
            return Err(Error::Shape(format!(
                "generator expects {} condition planes, got {cc}",
                self.spec.cond_channels
            )));
        }
        if (cb, ch, cw) != (b, h, w) {
            return Err(Error::Shape(format!(
                "condition planes {:?} do not match images {:?}",
                cond.dims(),
                images.dims()
            )));
        }
        if h % 4 != 0 || w % 4 != 0 {
            return Err(Error::Shape(format!("generator needs H and W divisible by 4, got {h}x{w}")));
        }
        let dtype = self.params.dtype();
        let fi = self.enc_img.forward(&images.to_dtype(dtype)?)?;
        let fc = self.enc_cond.forward(&cond.to_dtype(dtype)?)?;
        let mut x = Tensor::cat(&[&fi, &fc], 1)?;
        x = instance_norm(&self.fuse.forward(&x)?)?.relu()?;
        for block in &self.blocks {
            x = block.forward(&x)?;
        }
        for up in &self.up {
            x = instance_norm(&up.forward(&x)?)?.relu()?;
        }
        Ok((self.out.forward(&x)?.tanh()? * OUTPUT_SCALE)?)
    }

    /// Single-slice convenience wrapper over [`Generator::forward`].
    pub fn forward_stack(&self, images: &SliceStack, cond: &ConditionPlanes) -> Result<SliceStack> {
        let device = self.params.device();
        let x = Tensor::from_slice(images.data(), (1, images.channels(), images.height(), images.width()), device)?;
        if (cond.height, cond.width) != (images.height(), images.width()) {
            return Err(Error::Shape(format!(
                "condition planes {}x{} do not match image {}x{}",
                cond.height,
                cond.width,
                images.height(),
                images.width()
            )));
        }
        let c = Tensor::from_slice(&cond.data, (1, cond.n, cond.height, cond.width), device)?;
        let y = self.forward(&x, &c)?;
        let data = y.flatten_all()?.to_dtype(DType::F32)?.to_vec1::<f32>()?;
        SliceStack::unnamed(self.spec.out_channels, images.height(), images.width(), data)
    }
}

/// Patch classifier: stride-2 4×4 layers, then two size-preserving 3×3
/// layers, ending in a single-channel map of unbounded scores.
#[derive(Clone)]
pub struct Discriminator {
    spec: DiscriminatorSpec,
    params: ParamStore,
    down: Vec<Conv>,
    penultimate: Conv,
    head: Conv,
}

impl Discriminator {
    pub fn new<R: Rng>(spec: DiscriminatorSpec, dtype: DType, device: &Device, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut p = ParamStore::new(dtype, device);
        let w = spec.base_width;
        let width = |i: usize| w * (1 << i.min(3));
        let mut down = Vec::with_capacity(spec.n_layers);
        for i in 0..spec.n_layers {
            let c_in = if i == 0 { spec.in_channels } else { width(i - 1) };
            down.push(Conv::new(&mut p, &format!("down.{i}"), c_in, width(i), 4, 2, 1, rng)?);
        }
        let last = width(spec.n_layers - 1);
        let penultimate = Conv::new(&mut p, "penultimate", last, width(spec.n_layers), 3, 1, 1, rng)?;
        let head = Conv::new(&mut p, "head", width(spec.n_layers), 1, 3, 1, 1, rng)?;
        Ok(Discriminator {
            spec,
            params: p,
            down,
            penultimate,
            head,
        })
    }

    pub fn spec(&self) -> &DiscriminatorSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// (B, in_channels, H, W) → (B, 1, H/2^n, W/2^n) score map.
    pub fn forward(&self, images: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = images
            .dims4()
            .map_err(|_| Error::Shape(format!("discriminator input must be 4-D, got {:?}", images.dims())))?;
        if c != self.spec.in_channels {
            return Err(Error::Shape(format!(
                "discriminator expects {} channels, got {c}",
                self.spec.in_channels
            )));
        }
        let s = self.spec.stride_product();
        if h < s || w < s {
            return Err(Error::Shape(format!("input {h}x{w} smaller than stride product {s}")));
        }
        let mut x = images.to_dtype(self.params.dtype())?;
        for (i, layer) in self.down.iter().enumerate() {
            x = layer.forward(&x)?;
            if i > 0 {
                x = instance_norm(&x)?;
            }
            x = leaky_relu(&x)?;
        }
        x = leaky_relu(&instance_norm(&self.penultimate.forward(&x)?)?)?;
        self.head.forward(&x)
    }
}

/// The paired generators (inputs → target, target → inputs) and the
/// discriminators on the input domain and on the target domain.
#[derive(Clone)]
pub struct ModelBundle {
    pub g1: Generator,
    pub g2: Generator,
    pub d1: Discriminator,
    pub d2: Discriminator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleSpec {
    pub g1: GeneratorSpec,
    pub g2: GeneratorSpec,
    pub d1: DiscriminatorSpec,
    pub d2: DiscriminatorSpec,
}

impl BundleSpec {
    /// Specs for `n` input modalities and one target modality.
    pub fn for_modalities(n: usize, canonical_size: usize, gen_width: usize, n_res_blocks: usize, disc_width: usize, disc_layers: usize) -> Self {
        let g = |i, o| GeneratorSpec {
            in_channels: i,
            out_channels: o,
            cond_channels: n,
            base_width: gen_width,
            n_res_blocks,
            canonical_size,
        };
        let d = |i| DiscriminatorSpec {
            in_channels: i,
            base_width: disc_width,
            n_layers: disc_layers,
        };
        BundleSpec {
            g1: g(n, 1),
            g2: g(1, n),
            d1: d(n),
            d2: d(1),
        }
    }
}

impl ModelBundle {
    pub fn new<R: Rng>(spec: &BundleSpec, dtype: DType, device: &Device, rng: &mut R) -> Result<Self> {
        Ok(ModelBundle {
            g1: Generator::new(spec.g1.clone(), dtype, device, rng)?,
            g2: Generator::new(spec.g2.clone(), dtype, device, rng)?,
            d1: Discriminator::new(spec.d1.clone(), dtype, device, rng)?,
            d2: Discriminator::new(spec.d2.clone(), dtype, device, rng)?,
        })
    }

    pub fn spec(&self) -> BundleSpec {
        BundleSpec {
            g1: self.g1.spec.clone(),
            g2: self.g2.spec.clone(),
            d1: self.d1.spec.clone(),
            d2: self.d2.spec.clone(),
        }
    }

    pub fn generator_vars(&self) -> Vec<candle_core::Var> {
        let mut v = self.g1.params.vars();
        v.extend(self.g2.params.vars());
        v
    }

    pub fn discriminator_vars(&self) -> Vec<candle_core::Var> {
        let mut v = self.d1.params.vars();
        v.extend(self.d2.params.vars());
        v
    }

    fn stores(&self) -> [(&'static str, &ParamStore); 4] {
        [
            ("g1", &self.g1.params),
            ("g2", &self.g2.params),
            ("d1", &self.d1.params),
            ("d2", &self.d2.params),
        ]
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut tensors = std::collections::HashMap::new();
        for (prefix, store) in self.stores() {
            store.export(prefix, &mut tensors)?;
        }
        save_tensors(&tensors, path)
    }

    pub fn load_weights(&self, path: &std::path::Path) -> Result<()> {
        let device = self.g1.params.device().clone();
        let tensors = load_tensors(path, &device)?;
        for (prefix, store) in self.stores() {
            store.import(prefix, &tensors)?;
        }
        Ok(())
    }
}
