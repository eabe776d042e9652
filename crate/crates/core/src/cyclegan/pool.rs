//! History buffer of generated images fed to the discriminators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nncore::Tensor;

pub const DEFAULT_POOL_CAPACITY: usize = 50;

#[derive(Clone, Debug)]
pub struct ImagePool {
    capacity: usize,
    images: Vec<Tensor>,
    rng: ChaCha8Rng,
}

impl ImagePool {
    pub fn new(capacity: usize, seed: u64) -> Self {
        ImagePool { capacity, images: Vec::new(), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Rebuilds a pool from persisted parts.
    pub fn from_parts(capacity: usize, images: Vec<Tensor>, rng: ChaCha8Rng) -> Self {
        ImagePool { capacity, images, rng }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Tensor] {
        &self.images
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    /// Queries one image per batch item and restacks them.
    pub fn query(&mut self, batch: &Tensor) -> Result<Tensor> {
        if self.capacity == 0 {
            return Ok(batch.clone());
        }
        let out: Vec<Tensor> = batch.unstack().into_iter().map(|img| self.query_one(img)).collect();
        Tensor::stack(&out)
    }

    /// Below capacity: store and return `img`. Otherwise, with probability
    /// 1/2 return `img`, else return a uniformly chosen stored image and put
    /// `img` in its place.
    pub fn query_one(&mut self, img: Tensor) -> Tensor {
        if self.images.len() < self.capacity {
            self.images.push(img.clone());
            return img;
        }
        if self.rng.gen_bool(0.5) {
            let i = self.rng.gen_range(0..self.images.len());
            std::mem::replace(&mut self.images[i], img)
        } else {
            img
        }
    }
}
