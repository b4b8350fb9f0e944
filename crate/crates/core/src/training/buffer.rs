use candle_core::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Bounded history of generated images fed to a discriminator.
///
/// While filling, every pushed image is stored and returned as is. Once
/// full, a push returns the new image with probability 1/2, and otherwise
/// swaps it for a uniformly chosen stored image which is returned instead.
pub struct ReplayBuffer {
    capacity: usize,
    shape: Vec<usize>,
    stored: Vec<Tensor>,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    /// `shape` is the shape every pushed image must have.
    pub fn new(capacity: usize, shape: &[usize], rng: ChaCha8Rng) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Capacity("replay buffer capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            shape: shape.to_vec(),
            stored: Vec::with_capacity(capacity),
            rng,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.stored.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stored.is_empty()
    }

    pub fn push_query(&mut self, img: &Tensor) -> Result<Tensor> {
        Ok(self.push_query_flagged(img)?.0)
    }

    /// Like [`push_query`](Self::push_query), also reporting whether the
    /// returned image came from the history.
    pub fn push_query_flagged(&mut self, img: &Tensor) -> Result<(Tensor, bool)> {
        if img.dims() != self.shape.as_slice() {
            return Err(Error::Shape(format!(
                "buffer holds images of shape {:?}, got {:?}",
                self.shape,
                img.dims()
            )));
        }
        let img = img.detach();
        if self.stored.len() < self.capacity {
            self.stored.push(img.clone());
            return Ok((img, false));
        }
        if self.rng.random::<bool>() {
            return Ok((img, false));
        }
        let i = self.rng.random_range(0..self.capacity);
        let old = std::mem::replace(&mut self.stored[i], img);
        Ok((old, true))
    }

    /// Runs every image of a (B, …) batch through the buffer.
    pub fn query_batch(&mut self, batch: &Tensor) -> Result<Tensor> {
        let b = batch.dim(0)?;
        let out = (0..b)
            .map(|i| self.push_query(&batch.narrow(0, i, 1)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Tensor::cat(&out, 0)?)
    }
}
