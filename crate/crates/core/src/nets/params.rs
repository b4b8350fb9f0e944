use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Standard deviation of the zero-mean Gaussian weight initialization.
pub const INIT_STD: f64 = 0.02;

/// Named trainable tensors of one network, keyed by hierarchical names
/// such as `enc_img.0.weight`.
#[derive(Clone)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    dtype: DType,
    device: Device,
}

impl ParamStore {
    pub fn new(dtype: DType, device: &Device) -> Self {
        ParamStore {
            vars: BTreeMap::new(),
            dtype,
            device: device.clone(),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub(crate) fn normal<R: Rng>(&mut self, name: String, shape: &[usize], std: f64, rng: &mut R) -> Result<Var> {
        let n: usize = shape.iter().product();
        let dist = Normal::new(0.0f64, std).map_err(|e| Error::Argument(e.to_string()))?;
        let values: Vec<f64> = (0..n).map(|_| dist.sample(rng)).collect();
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        self.insert(name, Var::from_tensor(&t)?)
    }

    pub(crate) fn zeros(&mut self, name: String, shape: &[usize]) -> Result<Var> {
        let t = Tensor::zeros(shape, self.dtype, &self.device)?;
        self.insert(name, Var::from_tensor(&t)?)
    }

    fn insert(&mut self, name: String, var: Var) -> Result<Var> {
        if self.vars.contains_key(&name) {
            return Err(Error::Argument(format!("parameter {name} registered twice")));
        }
        self.vars.insert(name, var.clone());
        Ok(var)
    }

    pub fn named(&self) -> &BTreeMap<String, Var> {
        &self.vars
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Sets every parameter to zero.
    pub fn zero_all(&self) -> Result<()> {
        for v in self.vars.values() {
            v.set(&v.zeros_like()?)?;
        }
        Ok(())
    }

    /// Copies every parameter's values out, for equality checks.
    pub fn snapshot(&self) -> Result<BTreeMap<String, Vec<f64>>> {
        self.vars
            .iter()
            .map(|(k, v)| {
                let flat = v.as_tensor().flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
                Ok((k.clone(), flat))
            })
            .collect()
    }

    /// Parameters as `prefix.name` → f32 tensors, for serialization.
    pub fn export(&self, prefix: &str, out: &mut HashMap<String, Tensor>) -> Result<()> {
        for (k, v) in &self.vars {
            out.insert(format!("{prefix}.{k}"), v.as_tensor().to_dtype(DType::F32)?);
        }
        Ok(())
    }

    /// Overwrites parameters from `prefix.name` entries; every parameter must be present
    /// with a matching shape.
    pub fn import(&self, prefix: &str, tensors: &HashMap<String, Tensor>) -> Result<()> {
        for (k, v) in &self.vars {
            let key = format!("{prefix}.{k}");
            let t = tensors
                .get(&key)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks tensor {key}")))?;
            if t.dims() != v.dims() {
                return Err(Error::Shape(format!(
                    "tensor {key} has shape {:?}, network expects {:?}",
                    t.dims(),
                    v.dims()
                )));
            }
            v.set(&t.to_dtype(self.dtype)?.to_device(&self.device)?)?;
        }
        Ok(())
    }
}

/// Writes tensors to a safetensors archive via a temporary file and rename.
pub fn save_tensors(tensors: &HashMap<String, Tensor>, path: &Path) -> Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let tmp = parent.join(format!(
        ".{}.tmp",
        path.file_name().map(|s| s.to_string_lossy()).unwrap_or_default()
    ));
    candle_core::safetensors::save(tensors, &tmp)?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_tensors(path: &Path, device: &Device) -> Result<HashMap<String, Tensor>> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint not found"),
        ));
    }
    Ok(candle_core::safetensors::load(path, device)?)
}
