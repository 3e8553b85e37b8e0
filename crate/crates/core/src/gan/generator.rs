use rand::Rng;
use serde::{Deserialize, Serialize};

use super::blocks::{conv_act, conv_act_backward, slope, ActCache, ConvChain, ResidualBlock, ResidualCache};
use crate::error::{Error, Result};
use crate::nn::{ops, Conv2d, Element, Model, Parameter, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Width of the first down block; each further block doubles it.
    pub base_width: usize,
    /// Number of down (and up) blocks.
    pub depth: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            in_channels: 3,
            out_channels: 3,
            base_width: 16,
            depth: 4,
        }
    }
}

impl GeneratorConfig {
    /// Small network for gradient checks and desk-scale smoke training.
    pub fn reduced() -> Self {
        GeneratorConfig {
            base_width: 8,
            depth: 2,
            ..Self::default()
        }
    }

    /// Channels of down block `k` (1-based); `k = depth + 1` is the bottleneck.
    pub fn width(&self, k: usize) -> usize {
        self.base_width << (k - 1)
    }

    /// Input sides must be multiples of this.
    pub fn granularity(&self) -> usize {
        1 << self.depth
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.base_width == 0 || self.depth == 0 || self.depth > 8
        {
            return Err(Error::invalid(format!("invalid generator configuration {self:?}")));
        }
        Ok(())
    }
}

/// Residual U-Net: `depth` residual down blocks each followed by a 2×2
/// average pool, a residual bottleneck, `depth` up blocks (nearest 2×
/// upsample, concat with the matching skip, three conv + LReLU) and a
/// conv + LReLU head.
#[derive(Clone, Debug)]
pub struct Generator<T: Element = f32> {
    config: GeneratorConfig,
    down: Vec<ResidualBlock<T>>,
    bottleneck: ResidualBlock<T>,
    up: Vec<ConvChain<T>>,
    head: Conv2d<T>,
}

/// Activations saved by [`Generator::forward_cached`].
#[derive(Clone, Debug)]
pub struct GeneratorCache<T: Element = f32> {
    down: Vec<ResidualCache<T>>,
    skips: Vec<Tensor<T>>,
    bottleneck: ResidualCache<T>,
    up: Vec<Vec<ActCache<T>>>,
    head: ActCache<T>,
}

impl<T: Element> Generator<T> {
    pub fn new<R: Rng>(config: GeneratorConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.depth;
        let down = (1..=d)
            .map(|k| {
                let c_in = if k == 1 { config.in_channels } else { config.width(k - 1) };
                ResidualBlock::new(&format!("down{k}"), c_in, config.width(k), rng)
            })
            .collect();
        let bottleneck = ResidualBlock::new("bottleneck", config.width(d), config.width(d + 1), rng);
        let up = (1..=d)
            .map(|k| {
                let skip = config.width(d + 1 - k);
                let below = config.width(d + 2 - k);
                ConvChain {
                    convs: (1..=3)
                        .map(|i| {
                            let c_in = if i == 1 { skip + below } else { skip };
                            Conv2d::new(&format!("up{k}.conv{i}"), c_in, skip, 3, 1, rng)
                        })
                        .collect(),
                }
            })
            .collect();
        let head = Conv2d::new("head", config.width(1), config.out_channels, 3, 1, rng);
        Ok(Generator {
            config,
            down,
            bottleneck,
            up,
            head,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    /// Weights that return any non-negative input unchanged: identity taps
    /// along the shallowest skip path, zeros elsewhere. A stand-in model for
    /// exercising evaluation and enhancement plumbing.
    pub fn pass_through(config: GeneratorConfig) -> Result<Self> {
        config.validate()?;
        if config.in_channels != config.out_channels || config.in_channels > config.width(1) {
            return Err(Error::invalid(
                "pass-through needs in_channels == out_channels <= base_width",
            ));
        }
        let mut g = Generator::new(config, &mut rand::rngs::mock::StepRng::new(0, 0))?;
        let identity = [
            "down1.transition.weight".to_string(),
            format!("up{}.conv1.weight", config.depth),
            format!("up{}.conv2.weight", config.depth),
            format!("up{}.conv3.weight", config.depth),
            "head.weight".to_string(),
        ];
        for p in g.parameters_mut() {
            p.value.fill(T::from_f64(0.0));
            if identity.contains(&p.name) {
                for c in 0..config.in_channels {
                    p.value.set(c, c, 1, 1, T::from_f64(1.0));
                }
            }
        }
        Ok(g)
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let s = x.shape();
        let g = self.config.granularity();
        if s.n == 0 || s.c != self.config.in_channels || s.h == 0 || s.w == 0 || s.h % g != 0 || s.w % g != 0 {
            return Err(Error::invalid(format!(
                "generator input {s:?} needs {} channels and sides divisible by {g}; center-crop the image",
                self.config.in_channels
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut skips = Vec::with_capacity(self.config.depth);
        let mut h = x.clone();
        for block in &self.down {
            let d = block.infer(&h)?;
            h = ops::avg_pool(&d, 2)?;
            skips.push(d);
        }
        let mut u = self.bottleneck.infer(&h)?;
        for (chain, skip) in self.up.iter().zip(skips.iter().rev()) {
            let cat = ops::concat_channels(skip, &ops::upsample_nn(&u, 2)?)?;
            u = chain.infer(&cat)?;
        }
        ops::lrelu(&self.head.forward(&u)?, slope())
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, GeneratorCache<T>)> {
        self.check_input(x)?;
        let mut skips = Vec::with_capacity(self.config.depth);
        let mut down = Vec::with_capacity(self.config.depth);
        let mut h = x.clone();
        for block in &self.down {
            let (d, c) = block.forward(&h)?;
            h = ops::avg_pool(&d, 2)?;
            skips.push(d);
            down.push(c);
        }
        let (mut u, bottleneck) = self.bottleneck.forward(&h)?;
        let mut up = Vec::with_capacity(self.config.depth);
        for (chain, skip) in self.up.iter().zip(skips.iter().rev()) {
            let cat = ops::concat_channels(skip, &ops::upsample_nn(&u, 2)?)?;
            let (out, c) = chain.forward(&cat)?;
            up.push(c);
            u = out;
        }
        let (y, head) = conv_act(&self.head, &u)?;
        Ok((
            y,
            GeneratorCache {
                down,
                skips,
                bottleneck,
                up,
                head,
            },
        ))
    }

    /// Accumulates parameter gradients; returns the input gradient.
    pub fn backward(&mut self, cache: &GeneratorCache<T>, output_grad: &Tensor<T>) -> Result<Tensor<T>> {
        let d = self.config.depth;
        let mut g = conv_act_backward(&mut self.head, &cache.head, output_grad)?;
        let mut skip_grads: Vec<Option<Tensor<T>>> = vec![None; d];
        for k in (0..d).rev() {
            let g_cat = self.up[k].backward(&cache.up[k], &g)?;
            let skip_index = d - 1 - k;
            let (g_skip, g_up) = ops::split_channels(&g_cat, cache.skips[skip_index].shape().c)?;
            skip_grads[skip_index] = Some(g_skip);
            g = ops::upsample_nn_backward(&g_up, 2)?;
        }
        g = self.bottleneck.backward(&cache.bottleneck, &g)?;
        for i in (0..d).rev() {
            let mut g_d = ops::avg_pool_backward(cache.skips[i].shape(), 2, &g)?;
            if let Some(s) = &skip_grads[i] {
                g_d.add_assign(s)?;
            }
            g = self.down[i].backward(&cache.down[i], &g_d)?;
        }
        Ok(g)
    }

    pub fn cast<U: Element>(&self) -> Generator<U> {
        Generator {
            config: self.config,
            down: self.down.iter().map(ResidualBlock::cast).collect(),
            bottleneck: self.bottleneck.cast(),
            up: self.up.iter().map(ConvChain::cast).collect(),
            head: self.head.cast(),
        }
    }

    /// Zeroes the three body convolutions of down block `k` (1-based).
    pub fn zero_down_body(&mut self, k: usize) {
        for p in self.down[k - 1].body.parameters_mut() {
            p.value.fill(T::from_f64(0.0));
        }
    }

    /// Output of down block `k` (1-based) before pooling.
    pub fn down_activation(&self, x: &Tensor<T>, k: usize) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for block in &self.down[..k - 1] {
            h = ops::avg_pool(&block.infer(&h)?, 2)?;
        }
        self.down[k - 1].infer(&h)
    }

    /// Output of the transition conv of down block `k`, the residual
    /// block's skip path.
    pub fn down_transition(&self, x: &Tensor<T>, k: usize) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for block in &self.down[..k - 1] {
            h = ops::avg_pool(&block.infer(&h)?, 2)?;
        }
        ops::lrelu(&self.down[k - 1].transition.forward(&h)?, slope())
    }

    /// Spatial shapes of the skip tensors `d_1..d_depth` for input `shape`.
    pub fn skip_shapes(&self, shape: Shape) -> Vec<Shape> {
        (1..=self.config.depth)
            .map(|k| Shape::new(shape.n, self.config.width(k), shape.h >> (k - 1), shape.w >> (k - 1)))
            .collect()
    }
}

impl<T: Element> Model<T> for Generator<T> {
    fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut v: Vec<&Parameter<T>> = Vec::new();
        for b in &self.down {
            v.extend(b.parameters());
        }
        v.extend(self.bottleneck.parameters());
        for c in &self.up {
            v.extend(c.parameters());
        }
        v.extend(self.head.parameters());
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v: Vec<&mut Parameter<T>> = Vec::new();
        for b in &mut self.down {
            v.extend(b.parameters_mut());
        }
        v.extend(self.bottleneck.parameters_mut());
        for c in &mut self.up {
            v.extend(c.parameters_mut());
        }
        v.extend(self.head.parameters_mut());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn input(shape: Shape) -> Tensor {
        Tensor::from_fn(shape, |n, c, y, x| ((n + 3 * c + 5 * y + 7 * x) % 13) as f32 / 12.0)
    }

    #[test]
    fn shapes_and_names() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g: Generator = Generator::new(GeneratorConfig::default(), &mut rng).unwrap();
        let names: Vec<_> = g.parameters().iter().map(|p| p.name.clone()).collect();
        assert_eq!(names.first().unwrap(), "down1.transition.weight");
        assert!(names.contains(&"bottleneck.conv3.bias".to_string()));
        assert!(names.contains(&"up4.conv1.weight".to_string()));
        assert_eq!(names.last().unwrap(), "head.bias");
        let up1 = g.parameters().into_iter().find(|p| p.name == "up1.conv1.weight").unwrap();
        assert_eq!(up1.value.shape(), Shape::new(128, 128 + 256, 3, 3));
        let skips = g.skip_shapes(Shape::new(1, 3, 256, 256));
        let sides: Vec<_> = skips.iter().map(|s| s.h).collect();
        assert_eq!(sides, [256, 128, 64, 32]);

        let small = Generator::<f32>::new(GeneratorConfig::reduced(), &mut rng).unwrap();
        let x = input(Shape::new(2, 3, 32, 48));
        assert_eq!(small.forward(&x).unwrap().shape(), x.shape());
        assert!(small.forward(&input(Shape::new(1, 3, 30, 32))).is_err());
        assert!(small.forward(&input(Shape::new(1, 1, 32, 32))).is_err());
    }

    #[test]
    fn cached_forward_matches_inference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Generator::<f32>::new(GeneratorConfig::reduced(), &mut rng).unwrap();
        let x = input(Shape::new(1, 3, 16, 16));
        let (y, _) = g.forward_cached(&x).unwrap();
        assert_eq!(y, g.forward(&x).unwrap());
        assert_eq!(y, g.forward(&x).unwrap());
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut g = Generator::<f32>::new(GeneratorConfig::reduced(), &mut rng).unwrap();
        for p in g.parameters_mut() {
            p.value.fill(0.0);
        }
        let y = g.forward(&input(Shape::new(1, 3, 8, 8))).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zeroed_body_makes_residual_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = Generator::<f32>::new(GeneratorConfig::reduced(), &mut rng).unwrap();
        let x = input(Shape::new(1, 3, 16, 16));
        for k in 1..=2 {
            g.zero_down_body(k);
            assert_eq!(g.down_activation(&x, k).unwrap(), g.down_transition(&x, k).unwrap());
        }
    }
}
