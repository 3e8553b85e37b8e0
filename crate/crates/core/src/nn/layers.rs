use rand::Rng;

use super::ops::{self, Padding};
use super::tensor::{Element, Shape, Tensor};
use crate::error::Result;

/// A named trainable tensor with its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Parameter<T: Element = f32> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Element> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn accumulate(&mut self, g: &Tensor<T>) -> Result<()> {
        self.grad.add_assign(g)
    }

    pub fn cast<U: Element>(&self) -> Parameter<U> {
        Parameter {
            name: self.name.clone(),
            value: self.value.cast(),
            grad: self.grad.cast(),
        }
    }
}

/// Uniform in `[-s, s]` with `s = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Element, R: Rng>(shape: Shape, fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<T> {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..shape.len())
        .map(|_| T::from_f64(rng.gen_range(-s..=s) as f32 as f64))
        .collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}

/// Convolution layer holding its weight and bias parameters.
#[derive(Clone, Debug)]
pub struct Conv2d<T: Element = f32> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
    pub stride: usize,
    pub padding: Padding,
}

impl<T: Element> Conv2d<T> {
    pub fn new<R: Rng>(
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let shape = Shape::new(c_out, c_in, kernel, kernel);
        let area = kernel * kernel;
        Conv2d {
            weight: Parameter::new(
                format!("{name}.weight"),
                glorot_uniform(shape, c_in * area, c_out * area, rng),
            ),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(Shape::new(1, c_out, 1, 1))),
            stride,
            padding: Padding::Same,
        }
    }

    pub fn c_in(&self) -> usize {
        self.weight.value.shape().c
    }

    pub fn c_out(&self) -> usize {
        self.weight.value.shape().n
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        ops::conv2d(x, &self.weight.value, &self.bias.value, self.stride, self.padding)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Tensor<T>, output_grad: &Tensor<T>) -> Result<Tensor<T>> {
        let g = ops::conv2d_backward(x, &self.weight.value, output_grad, self.stride, self.padding)?;
        self.weight.accumulate(&g.weight)?;
        self.bias.accumulate(&g.bias)?;
        Ok(g.input)
    }

    pub fn parameters(&self) -> [&Parameter<T>; 2] {
        [&self.weight, &self.bias]
    }

    pub fn parameters_mut(&mut self) -> [&mut Parameter<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn cast<U: Element>(&self) -> Conv2d<U> {
        Conv2d {
            weight: self.weight.cast(),
            bias: self.bias.cast(),
            stride: self.stride,
            padding: self.padding,
        }
    }
}

/// Fully connected layer.
#[derive(Clone, Debug)]
pub struct Dense<T: Element = f32> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
}

impl<T: Element> Dense<T> {
    pub fn new<R: Rng>(name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Dense {
            weight: Parameter::new(
                format!("{name}.weight"),
                glorot_uniform(Shape::new(fan_out, fan_in, 1, 1), fan_in, fan_out, rng),
            ),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(Shape::new(1, fan_out, 1, 1))),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        ops::dense(x, &self.weight.value, &self.bias.value)
    }

    pub fn backward(&mut self, x: &Tensor<T>, output_grad: &Tensor<T>) -> Result<Tensor<T>> {
        let g = ops::dense_backward(x, &self.weight.value, output_grad)?;
        self.weight.accumulate(&g.weight)?;
        self.bias.accumulate(&g.bias)?;
        Ok(g.input)
    }

    pub fn parameters(&self) -> [&Parameter<T>; 2] {
        [&self.weight, &self.bias]
    }

    pub fn parameters_mut(&mut self) -> [&mut Parameter<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn cast<U: Element>(&self) -> Dense<U> {
        Dense {
            weight: self.weight.cast(),
            bias: self.bias.cast(),
        }
    }
}

/// Common surface of the trainable networks.
pub trait Model<T: Element> {
    fn parameters(&self) -> Vec<&Parameter<T>>;
    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>>;

    fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.value.len()).sum()
    }

    /// Checksum over every parameter value, in declaration order.
    fn checksum(&self) -> u64 {
        self.parameters()
            .iter()
            .fold(0u64, |acc, p| acc.rotate_left(7) ^ p.value.checksum())
    }
}
