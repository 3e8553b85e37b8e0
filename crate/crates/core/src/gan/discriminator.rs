use rand::Rng;
use serde::{Deserialize, Serialize};

use super::blocks::{conv_act, conv_act_backward, conv_act_input_grad, slope, ActCache, ConvChain};
use crate::error::{Error, Result};
use crate::nn::{ops, Conv2d, Dense, Element, Model, Parameter, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorConfig {
    pub in_channels: usize,
    /// Side of the square input; must be `4 * 2^k` with `k <= blocks`.
    pub image_size: usize,
    pub base_width: usize,
    pub max_width: usize,
    pub blocks: usize,
    pub convs_per_block: usize,
    pub hidden: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            in_channels: 3,
            image_size: 256,
            base_width: 16,
            max_width: 256,
            blocks: 10,
            convs_per_block: 4,
            hidden: 64,
        }
    }
}

impl DiscriminatorConfig {
    pub fn reduced() -> Self {
        DiscriminatorConfig {
            image_size: 32,
            base_width: 4,
            max_width: 32,
            hidden: 16,
            ..Self::default()
        }
    }

    /// Output channels of block `b` (1-based): doubling every other block.
    pub fn width(&self, b: usize) -> usize {
        (self.base_width << (b / 2)).min(self.max_width)
    }

    /// Leading blocks whose first convolution has stride 2.
    pub fn strided_blocks(&self) -> usize {
        (self.image_size / 4).trailing_zeros() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.in_channels > 0
            && self.base_width > 0
            && self.max_width >= self.base_width
            && self.blocks > 0
            && self.convs_per_block > 0
            && self.hidden > 0
            && self.image_size >= 4
            && self.image_size % 4 == 0
            && (self.image_size / 4).is_power_of_two()
            && self.strided_blocks() <= self.blocks;
        if !ok {
            return Err(Error::invalid(format!("invalid discriminator configuration {self:?}")));
        }
        Ok(())
    }
}

/// Stem conv, `blocks` blocks of conv + LReLU layers (the first layer of
/// each leading block strided), 4×4 average pool, dense, LReLU, dense.
/// Emits one logit per batch item; the sigmoid belongs to the loss.
#[derive(Clone, Debug)]
pub struct Discriminator<T: Element = f32> {
    config: DiscriminatorConfig,
    stem: Conv2d<T>,
    blocks: Vec<ConvChain<T>>,
    fc1: Dense<T>,
    fc2: Dense<T>,
}

#[derive(Clone, Debug)]
pub struct DiscriminatorCache<T: Element = f32> {
    stem: ActCache<T>,
    blocks: Vec<Vec<ActCache<T>>>,
    pool_input: crate::nn::Shape,
    pooled: Tensor<T>,
    fc1_pre: Tensor<T>,
    hidden: Tensor<T>,
}

impl<T: Element> Discriminator<T> {
    pub fn new<R: Rng>(config: DiscriminatorConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let stem = Conv2d::new("stem", config.in_channels, config.base_width, 3, 1, rng);
        let strided = config.strided_blocks();
        let mut c_prev = config.base_width;
        let blocks = (1..=config.blocks)
            .map(|b| {
                let width = config.width(b);
                let convs = (1..=config.convs_per_block)
                    .map(|j| {
                        let c_in = if j == 1 { c_prev } else { width };
                        let stride = if j == 1 && b <= strided { 2 } else { 1 };
                        Conv2d::new(&format!("block{b}.conv{j}"), c_in, width, 3, stride, rng)
                    })
                    .collect();
                c_prev = width;
                ConvChain { convs }
            })
            .collect();
        let fc1 = Dense::new("fc1", c_prev, config.hidden, rng);
        let fc2 = Dense::new("fc2", config.hidden, 1, rng);
        Ok(Discriminator {
            config,
            stem,
            blocks,
            fc1,
            fc2,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let s = x.shape();
        let side = self.config.image_size;
        if s.n == 0 || s.c != self.config.in_channels || s.h != side || s.w != side {
            return Err(Error::invalid(format!(
                "discriminator expects (n, {}, {side}, {side}), got {s:?}",
                self.config.in_channels
            )));
        }
        Ok(())
    }

    /// Logits, shape `(n, 1, 1, 1)`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = ops::lrelu(&self.stem.forward(x)?, slope())?;
        for b in &self.blocks {
            h = b.infer(&h)?;
        }
        let pooled = ops::avg_pool(&h, 4)?;
        let hidden = ops::lrelu(&self.fc1.forward(&pooled)?, slope())?;
        self.fc2.forward(&hidden)
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, DiscriminatorCache<T>)> {
        self.check_input(x)?;
        let (mut h, stem) = conv_act(&self.stem, x)?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (out, c) = b.forward(&h)?;
            blocks.push(c);
            h = out;
        }
        let pool_input = h.shape();
        let pooled = ops::avg_pool(&h, 4)?;
        let fc1_pre = self.fc1.forward(&pooled)?;
        let hidden = ops::lrelu(&fc1_pre, slope())?;
        let logits = self.fc2.forward(&hidden)?;
        Ok((
            logits,
            DiscriminatorCache {
                stem,
                blocks,
                pool_input,
                pooled,
                fc1_pre,
                hidden,
            },
        ))
    }

    /// Accumulates parameter gradients; returns the input gradient.
    pub fn backward(&mut self, cache: &DiscriminatorCache<T>, logit_grad: &Tensor<T>) -> Result<Tensor<T>> {
        let g_hidden = self.fc2.backward(&cache.hidden, logit_grad)?;
        let g_pre = ops::lrelu_backward(&cache.fc1_pre, slope(), &g_hidden)?;
        let g_pooled = self.fc1.backward(&cache.pooled, &g_pre)?;
        let mut g = ops::avg_pool_backward(cache.pool_input, 4, &g_pooled)?;
        for (b, c) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            g = b.backward(c, &g)?;
        }
        conv_act_backward(&mut self.stem, &cache.stem, &g)
    }

    /// Gradient with respect to the input image without touching any
    /// parameter gradient, for training the generator through a frozen
    /// discriminator.
    pub fn input_grad(&self, cache: &DiscriminatorCache<T>, logit_grad: &Tensor<T>) -> Result<Tensor<T>> {
        let g_hidden = ops::dense_backward(&cache.hidden, &self.fc2.weight.value, logit_grad)?.input;
        let g_pre = ops::lrelu_backward(&cache.fc1_pre, slope(), &g_hidden)?;
        let g_pooled = ops::dense_backward(&cache.pooled, &self.fc1.weight.value, &g_pre)?.input;
        let mut g = ops::avg_pool_backward(cache.pool_input, 4, &g_pooled)?;
        for (b, c) in self.blocks.iter().zip(&cache.blocks).rev() {
            g = b.input_grad(c, &g)?;
        }
        conv_act_input_grad(&self.stem, &cache.stem, &g)
    }

    pub fn probability(logits: &Tensor<T>) -> Tensor<T> {
        ops::sigmoid(logits)
    }

    pub fn cast<U: Element>(&self) -> Discriminator<U> {
        Discriminator {
            config: self.config,
            stem: self.stem.cast(),
            blocks: self.blocks.iter().map(ConvChain::cast).collect(),
            fc1: self.fc1.cast(),
            fc2: self.fc2.cast(),
        }
    }

    /// Number of convolutions in each block.
    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.convs.len()).collect()
    }
}

impl<T: Element> Model<T> for Discriminator<T> {
    fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut v: Vec<&Parameter<T>> = self.stem.parameters().into();
        for b in &self.blocks {
            v.extend(b.parameters());
        }
        v.extend(self.fc1.parameters());
        v.extend(self.fc2.parameters());
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v: Vec<&mut Parameter<T>> = self.stem.parameters_mut().into();
        for b in &mut self.blocks {
            v.extend(b.parameters_mut());
        }
        v.extend(self.fc1.parameters_mut());
        v.extend(self.fc2.parameters_mut());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Shape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_plan() {
        let c = DiscriminatorConfig::default();
        assert_eq!(c.strided_blocks(), 6);
        let widths: Vec<_> = (1..=10).map(|b| c.width(b)).collect();
        assert_eq!(widths, [16, 32, 32, 64, 64, 128, 128, 256, 256, 256]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = Discriminator::<f32>::new(c, &mut rng).unwrap();
        assert_eq!(d.block_sizes(), vec![4; 10]);
        let fc1 = d.parameters().into_iter().find(|p| p.name == "fc1.weight").unwrap();
        assert_eq!(fc1.value.shape(), Shape::new(64, 256, 1, 1));
    }

    #[test]
    fn logits_shape_zero_weights_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d = Discriminator::<f32>::new(DiscriminatorConfig::reduced(), &mut rng).unwrap();
        let x = Tensor::from_fn(Shape::new(2, 3, 32, 32), |n, c, y, x| ((n + c + y * x) % 5) as f32 / 4.0);
        let a = d.forward(&x).unwrap();
        assert_eq!(a.shape(), Shape::new(2, 1, 1, 1));
        assert_eq!(a, d.forward(&x).unwrap());
        assert_eq!(a, d.forward_cached(&x).unwrap().0);
        assert!(d.forward(&Tensor::zeros(Shape::new(1, 3, 16, 16))).is_err());
        let (_, cache) = d.forward_cached(&x).unwrap();
        let g = Tensor::full(Shape::new(2, 1, 1, 1), 1.0);
        let only = d.input_grad(&cache, &g).unwrap();
        let mut m = d.clone();
        assert_eq!(m.backward(&cache, &g).unwrap(), only);
        for p in d.parameters_mut() {
            p.value.fill(0.0);
        }
        let z = d.forward(&x).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        assert!(Discriminator::probability(&z).data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn invalid_sizes_rejected() {
        let c = DiscriminatorConfig {
            image_size: 48,
            ..DiscriminatorConfig::reduced()
        };
        assert!(c.validate().is_err());
        let c = DiscriminatorConfig {
            blocks: 2,
            ..DiscriminatorConfig::reduced()
        };
        assert!(c.validate().is_err());
    }
}
