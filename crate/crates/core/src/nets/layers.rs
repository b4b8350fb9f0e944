use candle_core::{Tensor, Var};
use rand::Rng;

use super::params::{ParamStore, INIT_STD};
use crate::error::Result;

const NORM_EPS: f64 = 1e-5;
pub(crate) const LEAKY_SLOPE: f64 = 0.2;

/// 2-D convolution with bias and symmetric zero padding.
#[derive(Clone)]
pub(crate) struct Conv {
    weight: Var,
    bias: Var,
    stride: usize,
    padding: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.normal(format!("{name}.weight"), &[c_out, c_in, kernel, kernel], INIT_STD, rng)?;
        let bias = store.zeros(format!("{name}.bias"), &[c_out])?;
        Ok(Conv {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub(crate) fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(self.weight.as_tensor(), self.padding, self.stride, 1, 1)?;
        let b = self.bias.as_tensor().reshape((1, self.bias.dim(0)?, 1, 1))?;
        Ok(y.broadcast_add(&b)?)
    }
}

/// Fractionally-strided convolution that exactly doubles H and W
/// (kernel 3, stride 2, padding 1, output padding 1).
#[derive(Clone)]
pub(crate) struct UpConv {
    weight: Var,
    bias: Var,
}

impl UpConv {
    pub(crate) fn new<R: Rng>(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize, rng: &mut R) -> Result<Self> {
        let weight = store.normal(format!("{name}.weight"), &[c_in, c_out, 3, 3], INIT_STD, rng)?;
        let bias = store.zeros(format!("{name}.bias"), &[c_out])?;
        Ok(UpConv { weight, bias })
    }

    pub(crate) fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv_transpose2d(self.weight.as_tensor(), 1, 1, 2, 1)?;
        let b = self.bias.as_tensor().reshape((1, self.bias.dim(0)?, 1, 1))?;
        Ok(y.broadcast_add(&b)?)
    }
}

/// Per-sample, per-channel normalization over the spatial axes (no affine terms).
pub(crate) fn instance_norm(x: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    let flat = x.reshape((b, c, h * w))?;
    let mean = flat.mean_keepdim(2)?;
    let centered = flat.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(2)?;
    let normed = centered.broadcast_div(&(var + NORM_EPS)?.sqrt()?)?;
    Ok(normed.reshape((b, c, h, w))?)
}

pub(crate) fn leaky_relu(x: &Tensor) -> Result<Tensor> {
    Ok(x.maximum(&(x * LEAKY_SLOPE)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    #[test]
    fn instance_norm_zero_mean_unit_var() {
        let data: Vec<f64> = (0..2 * 3 * 16).map(|i| ((i * 37) % 11) as f64 * 0.3 - 1.0).collect();
        let x = Tensor::from_vec(data, (2, 3, 4, 4), &Device::Cpu).unwrap();
        let y = instance_norm(&x).unwrap().reshape((6, 16)).unwrap();
        let mean = y.mean(1).unwrap().to_vec1::<f64>().unwrap();
        let var = y.sqr().unwrap().mean(1).unwrap().to_vec1::<f64>().unwrap();
        for (m, v) in mean.iter().zip(var) {
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-3, "{v}");
        }
    }

    #[test]
    fn up_conv_doubles_size() {
        let mut store = ParamStore::new(DType::F32, &Device::Cpu);
        let mut rng = crate::seeding::stream_rng(0, &[]);
        let up = UpConv::new(&mut store, "up", 4, 2, &mut rng).unwrap();
        let x = Tensor::zeros((1, 4, 5, 7), DType::F32, &Device::Cpu).unwrap();
        assert_eq!(up.forward(&x).unwrap().dims(), &[1, 2, 10, 14]);
    }

    #[test]
    fn leaky_relu_slopes() {
        let x = Tensor::new(&[-2.0f64, 0.0, 3.0], &Device::Cpu).unwrap();
        assert_eq!(leaky_relu(&x).unwrap().to_vec1::<f64>().unwrap(), vec![-0.4, 0.0, 3.0]);
    }
}
