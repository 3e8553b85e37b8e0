//! Convolution + LReLU units and the residual block shared by both networks.

use rand::Rng;

use crate::error::Result;
use crate::nn::{ops, Conv2d, Element, Parameter, Tensor, LRELU_SLOPE};

pub(crate) fn slope<T: Element>() -> T {
    T::from_f64(LRELU_SLOPE)
}

/// Saved input and pre-activation of one conv + LReLU.
#[derive(Clone, Debug)]
pub(crate) struct ActCache<T: Element> {
    input: Tensor<T>,
    pre: Tensor<T>,
}

pub(crate) fn conv_act<T: Element>(conv: &Conv2d<T>, x: &Tensor<T>) -> Result<(Tensor<T>, ActCache<T>)> {
    let pre = conv.forward(x)?;
    let out = ops::lrelu(&pre, slope())?;
    Ok((
        out,
        ActCache {
            input: x.clone(),
            pre,
        },
    ))
}

pub(crate) fn conv_act_backward<T: Element>(
    conv: &mut Conv2d<T>,
    cache: &ActCache<T>,
    output_grad: &Tensor<T>,
) -> Result<Tensor<T>> {
    let g_pre = ops::lrelu_backward(&cache.pre, slope(), output_grad)?;
    conv.backward(&cache.input, &g_pre)
}

/// Input gradient only; parameters and their gradients are left alone.
pub(crate) fn conv_act_input_grad<T: Element>(
    conv: &Conv2d<T>,
    cache: &ActCache<T>,
    output_grad: &Tensor<T>,
) -> Result<Tensor<T>> {
    let g_pre = ops::lrelu_backward(&cache.pre, slope(), output_grad)?;
    Ok(ops::conv2d_backward(&cache.input, &conv.weight.value, &g_pre, conv.stride, conv.padding)?.input)
}

/// Plain stack of conv + LReLU layers.
#[derive(Clone, Debug)]
pub(crate) struct ConvChain<T: Element = f32> {
    pub convs: Vec<Conv2d<T>>,
}

impl<T: Element> ConvChain<T> {
    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<ActCache<T>>)> {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            let (out, c) = conv_act(conv, &h)?;
            caches.push(c);
            h = out;
        }
        Ok((h, caches))
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for conv in &self.convs {
            h = ops::lrelu(&conv.forward(&h)?, slope())?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, caches: &[ActCache<T>], output_grad: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = output_grad.clone();
        for (conv, cache) in self.convs.iter_mut().zip(caches).rev() {
            g = conv_act_backward(conv, cache, &g)?;
        }
        Ok(g)
    }

    pub fn input_grad(&self, caches: &[ActCache<T>], output_grad: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = output_grad.clone();
        for (conv, cache) in self.convs.iter().zip(caches).rev() {
            g = conv_act_input_grad(conv, cache, &g)?;
        }
        Ok(g)
    }

    pub fn parameters(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.convs.iter().flat_map(|c| c.parameters())
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.convs.iter_mut().flat_map(|c| c.parameters_mut())
    }

    pub fn cast<U: Element>(&self) -> ConvChain<U> {
        ConvChain {
            convs: self.convs.iter().map(Conv2d::cast).collect(),
        }
    }
}

/// `t = LReLU(conv(x))`, `out = t + body(t)` with a three-layer body that
/// keeps the channel count, so the skip is an exact identity.
#[derive(Clone, Debug)]
pub(crate) struct ResidualBlock<T: Element = f32> {
    pub transition: Conv2d<T>,
    pub body: ConvChain<T>,
}

#[derive(Clone, Debug)]
pub(crate) struct ResidualCache<T: Element> {
    transition: ActCache<T>,
    body: Vec<ActCache<T>>,
}

impl<T: Element> ResidualBlock<T> {
    pub fn new<R: Rng>(name: &str, c_in: usize, c_out: usize, rng: &mut R) -> Self {
        ResidualBlock {
            transition: Conv2d::new(&format!("{name}.transition"), c_in, c_out, 3, 1, rng),
            body: ConvChain {
                convs: (1..=3)
                    .map(|i| Conv2d::new(&format!("{name}.conv{i}"), c_out, c_out, 3, 1, rng))
                    .collect(),
            },
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ResidualCache<T>)> {
        let (t, tc) = conv_act(&self.transition, x)?;
        let (h, bc) = self.body.forward(&t)?;
        Ok((
            t.add(&h)?,
            ResidualCache {
                transition: tc,
                body: bc,
            },
        ))
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let t = ops::lrelu(&self.transition.forward(x)?, slope())?;
        let h = self.body.infer(&t)?;
        t.add(&h)
    }

    pub fn backward(&mut self, cache: &ResidualCache<T>, output_grad: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g_t = self.body.backward(&cache.body, output_grad)?;
        g_t.add_assign(output_grad)?;
        conv_act_backward(&mut self.transition, &cache.transition, &g_t)
    }

    pub fn parameters(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.transition.parameters().into_iter().chain(self.body.parameters())
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.transition.parameters_mut().into_iter().chain(self.body.parameters_mut())
    }

    pub fn cast<U: Element>(&self) -> ResidualBlock<U> {
        ResidualBlock {
            transition: self.transition.cast(),
            body: self.body.cast(),
        }
    }
}
