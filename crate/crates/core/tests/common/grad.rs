use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xscope_core::gan::{generator_loss_with_grad, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, LossWeights};
use xscope_core::nn::gradcheck::{random_tensor, relative_error};
use xscope_core::nn::{grad_check, ops, Differentiable, Model, Padding, Shape, Tensor, LRELU_SLOPE};

pub const OP_TOL: f64 = 1e-4;
pub const MODEL_TOL: f64 = 1e-3;
pub const EPS: f64 = 1e-5;
/// A model probe may sit within a step of some pre-activation's LReLU kink,
/// and which step that is depends on the probe. Each probe keeps its best
/// agreement across these; a wrong gradient disagrees at all of them.
pub const MODEL_EPS: [f64; 3] = [1e-5, 1e-6, 1e-7];
/// The composite loss is O(1) and sums thousands of SSIM window terms;
/// rounding swamps its smallest gradients below these steps.
pub const LOSS_EPS: [f64; 3] = [1e-5, 1e-4, 1e-3];

type R<T> = xscope_core::error::Result<T>;

pub struct Conv {
    pub stride: usize,
    pub padding: Padding,
}

impl Differentiable for Conv {
    fn forward(&self, i: &[Tensor<f64>]) -> R<Tensor<f64>> {
        ops::conv2d(&i[0], &i[1], &i[2], self.stride, self.padding)
    }
    fn backward(&self, i: &[Tensor<f64>], g: &Tensor<f64>) -> R<Vec<Tensor<f64>>> {
        let c = ops::conv2d_backward(&i[0], &i[1], g, self.stride, self.padding)?;
        Ok(vec![c.input, c.weight, c.bias])
    }
}

pub struct LRelu;

impl Differentiable for LRelu {
    fn forward(&self, i: &[Tensor<f64>]) -> R<Tensor<f64>> {
        ops::lrelu(&i[0], LRELU_SLOPE)
    }
    fn backward(&self, i: &[Tensor<f64>], g: &Tensor<f64>) -> R<Vec<Tensor<f64>>> {
        Ok(vec![ops::lrelu_backward(&i[0], LRELU_SLOPE, g)?])
    }
}

pub struct Pool(pub usize);

impl Differentiable for Pool {
    fn forward(&self, i: &[Tensor<f64>]) -> R<Tensor<f64>> {
        ops::avg_pool(&i[0], self.0)
    }
    fn backward(&self, i: &[Tensor<f64>], g: &Tensor<f64>) -> R<Vec<Tensor<f64>>> {
        Ok(vec![ops::avg_pool_backward(i[0].shape(), self.0, g)?])
    }
}

pub struct Upsample(pub usize);

impl Differentiable for Upsample {
    fn forward(&self, i: &[Tensor<f64>]) -> R<Tensor<f64>> {
        ops::upsample_nn(&i[0], self.0)
    }
    fn backward(&self, _: &[Tensor<f64>], g: &Tensor<f64>) -> R<Vec<Tensor<f64>>> {
        Ok(vec![ops::upsample_nn_backward(g, self.0)?])
    }
}

pub struct Concat;

impl Differentiable for Concat {
    fn forward(&self, i: &[Tensor<f64>]) -> R<Tensor<f64>> {
        ops::concat_channels(&i[0], &i[1])
    }
    fn backward(&self, i: &[Tensor<f64>], g: &Tensor<f64>) -> R<Vec<Tensor<f64>>> {
        let (a, b) = ops::split_channels(g, i[0].shape().c)?;
        Ok(vec![a, b])
    }
}

pub struct DenseOp;

impl Differentiable for DenseOp {
    fn forward(&self, i: &[Tensor<f64>]) -> R<Tensor<f64>> {
        ops::dense(&i[0], &i[1], &i[2])
    }
    fn backward(&self, i: &[Tensor<f64>], g: &Tensor<f64>) -> R<Vec<Tensor<f64>>> {
        let d = ops::dense_backward(&i[0], &i[1], g)?;
        Ok(vec![d.input, d.weight, d.bias])
    }
}

pub struct Sigmoid;

impl Differentiable for Sigmoid {
    fn forward(&self, i: &[Tensor<f64>]) -> R<Tensor<f64>> {
        Ok(ops::sigmoid(&i[0]))
    }
    fn backward(&self, i: &[Tensor<f64>], g: &Tensor<f64>) -> R<Vec<Tensor<f64>>> {
        Ok(vec![ops::sigmoid_backward(&i[0], g)?])
    }
}

pub fn rand_t(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    random_tensor(shape, rng)
}

/// Values at least 0.05 away from the LReLU kink.
pub fn off_kink(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| {
        let v: f64 = rng.gen_range(0.05..1.0);
        if rng.gen_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

/// Max relative error of every op configuration, by name.
pub fn op_errors(seed: u64) -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut check = |name: String, op: &dyn Differentiable, inputs: &[Tensor<f64>]| {
        out.push((name, grad_check(op, inputs, EPS).unwrap()));
    };
    let convs = [
        (Shape::new(1, 2, 5, 5), 3, 3, 1, Padding::Same),
        (Shape::new(2, 3, 6, 7), 2, 3, 2, Padding::Same),
        (Shape::new(1, 1, 7, 6), 4, 5, 1, Padding::Explicit(1)),
        (Shape::new(2, 2, 8, 8), 3, 1, 2, Padding::Explicit(0)),
    ];
    for (s, c_out, k, stride, padding) in convs {
        let inputs = [
            rand_t(s, &mut rng),
            rand_t(Shape::new(c_out, s.c, k, k), &mut rng),
            rand_t(Shape::new(1, c_out, 1, 1), &mut rng),
        ];
        check(format!("conv {s:?} k{k} s{stride}"), &Conv { stride, padding }, &inputs);
    }
    for s in [Shape::new(1, 1, 4, 4), Shape::new(2, 3, 6, 4), Shape::new(1, 5, 8, 2)] {
        check(format!("lrelu {s:?}"), &LRelu, &[off_kink(s, &mut rng)]);
        check(format!("sigmoid {s:?}"), &Sigmoid, &[rand_t(s, &mut rng).map(|v| 4.0 * v)]);
        check(format!("avg_pool 2 {s:?}"), &Pool(2), &[rand_t(s, &mut rng)]);
        check(format!("upsample 2 {s:?}"), &Upsample(2), &[rand_t(s, &mut rng)]);
        check(format!("upsample 3 {s:?}"), &Upsample(3), &[rand_t(s, &mut rng)]);
        let other = Shape::new(s.n, 2, s.h, s.w);
        check(format!("concat {s:?}"), &Concat, &[rand_t(s, &mut rng), rand_t(other, &mut rng)]);
    }
    check("avg_pool 4".into(), &Pool(4), &[rand_t(Shape::new(2, 2, 8, 8), &mut rng)]);
    for (s, n_out) in [(Shape::new(1, 4, 1, 1), 3), (Shape::new(3, 2, 2, 2), 5), (Shape::new(2, 6, 1, 1), 1)] {
        let fan_in = s.c * s.h * s.w;
        let inputs = [
            rand_t(s, &mut rng),
            rand_t(Shape::new(n_out, fan_in, 1, 1), &mut rng),
            rand_t(Shape::new(1, n_out, 1, 1), &mut rng),
        ];
        check(format!("dense {s:?} -> {n_out}"), &DenseOp, &inputs);
    }
    out
}

/// Flattened (parameter, element) coordinates, sampled.
pub fn sample_coords(sizes: &[usize], count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let mut c: Vec<usize> = (0..count.min(total)).map(|_| rng.gen_range(0..total)).collect();
    c.sort_unstable();
    c.dedup();
    c
}

pub fn locate(sizes: &[usize], mut i: usize) -> (usize, usize) {
    for (k, &s) in sizes.iter().enumerate() {
        if i < s {
            return (k, i);
        }
        i -= s;
    }
    unreachable!("coordinate out of range")
}

pub fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Checks parameter and input gradients of `objective = <proj, f(x)>`.
pub fn check_model<M: Model<f64>>(
    model: &mut M,
    x: &Tensor<f64>,
    forward: impl Fn(&M, &Tensor<f64>) -> f64,
    analytic: impl Fn(&mut M, &Tensor<f64>) -> Tensor<f64>,
    probes: usize,
    steps: &[f64],
    rng: &mut ChaCha8Rng,
) -> f64 {
    model.zero_grad();
    let gx = analytic(model, x);
    let mut sizes: Vec<usize> = model.parameters().iter().map(|p| p.value.len()).collect();
    sizes.push(x.len());
    let coords = sample_coords(&sizes, probes, rng);
    let grads: Vec<f64> = coords
        .iter()
        .map(|&i| match locate(&sizes, i) {
            (k, j) if k + 1 == sizes.len() => gx.data()[j],
            (k, j) => model.parameters()[k].grad.data()[j],
        })
        .collect();
    let mut xw = x.clone();
    let mut eval = |i: usize, delta: f64| -> Result<f64, ()> {
        let (k, j) = locate(&sizes, i);
        if k + 1 == sizes.len() {
            let orig = xw.data()[j];
            xw.data_mut()[j] = orig + delta;
            let v = forward(model, &xw);
            xw.data_mut()[j] = orig;
            Ok(v)
        } else {
            let orig = model.parameters()[k].value.data()[j];
            model.parameters_mut()[k].value.data_mut()[j] = orig + delta;
            let v = forward(model, &xw);
            model.parameters_mut()[k].value.data_mut()[j] = orig;
            Ok(v)
        }
    };
    let base = eval(0, 0.0).unwrap();
    assert_eq!(base.to_bits(), eval(0, 0.0).unwrap().to_bits(), "forward is not deterministic");
    let mut worst = 0.0f64;
    for (&i, &a) in coords.iter().zip(&grads) {
        let mut best = f64::INFINITY;
        for &eps in steps {
            let numeric = (eval(i, eps).unwrap() - eval(i, -eps).unwrap()) / (2.0 * eps);
            best = best.min(relative_error(a, numeric));
            if best < 1e-6 {
                break;
            }
        }
        worst = worst.max(best);
    }
    worst
}

pub fn image(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(0.0..1.0))
}

/// Reduced generator under a random output projection.
pub fn generator_error(seed: u64, probes: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Generator::<f32>::new(GeneratorConfig::reduced(), &mut rng).unwrap().cast::<f64>();
    let x = image(Shape::new(1, 3, 32, 32), &mut rng);
    let proj = rand_t(Shape::new(1, 3, 32, 32), &mut rng);
    check_model(
        &mut g,
        &x,
        |g, x| dot(&g.forward(x).unwrap(), &proj),
        |g, x| {
            let (_, cache) = g.forward_cached(x).unwrap();
            g.backward(&cache, &proj).unwrap()
        },
        probes,
        &MODEL_EPS,
        &mut rng,
    )
}

/// Reduced discriminator on a batch of two.
pub fn discriminator_error(seed: u64, probes: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = Discriminator::<f32>::new(DiscriminatorConfig::reduced(), &mut rng).unwrap().cast::<f64>();
    let x = image(Shape::new(2, 3, 32, 32), &mut rng);
    let proj = rand_t(Shape::new(2, 1, 1, 1), &mut rng);
    check_model(
        &mut d,
        &x,
        |d, x| dot(&d.forward(x).unwrap(), &proj),
        |d, x| {
            let (_, cache) = d.forward_cached(x).unwrap();
            d.backward(&cache, &proj).unwrap()
        },
        probes,
        &MODEL_EPS,
        &mut rng,
    )
}

/// Composite generator loss through a frozen discriminator, with respect to
/// the generator parameters and input.
pub fn generator_loss_error(seed: u64, probes_per_mille: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Generator::<f32>::new(GeneratorConfig::reduced(), &mut rng).unwrap().cast::<f64>();
    let d = Discriminator::<f32>::new(DiscriminatorConfig::reduced(), &mut rng).unwrap().cast::<f64>();
    let x = image(Shape::new(1, 3, 32, 32), &mut rng);
    let y = image(Shape::new(1, 3, 32, 32), &mut rng);
    let w = LossWeights::default();
    let real: Vec<f64> = d.forward(&y).unwrap().data().to_vec();
    let loss = |g: &Generator<f64>, x: &Tensor<f64>| {
        let gx = g.forward(x).unwrap();
        let fake: Vec<f64> = d.forward(&gx).unwrap().data().to_vec();
        generator_loss_with_grad(&gx, &y, &fake, &real, &w).unwrap().0.total
    };
    let analytic = |g: &mut Generator<f64>, x: &Tensor<f64>| {
        let (gx, cache) = g.forward_cached(x).unwrap();
        let (fake, fcache) = d.forward_cached(&gx).unwrap();
        let (_, grad) = generator_loss_with_grad(&gx, &y, fake.data(), &real, &w).unwrap();
        let dfake = Tensor::from_vec(Shape::new(1, 1, 1, 1), grad.d_fake.clone()).unwrap();
        let mut total = grad.gx;
        total.add_assign(&d.input_grad(&fcache, &dfake).unwrap()).unwrap();
        g.backward(&cache, &total).unwrap()
    };
    let n_params: usize = g.parameters().iter().map(|p| p.value.len()).sum();
    check_model(&mut g, &x, loss, analytic, n_params * probes_per_mille / 1000, &LOSS_EPS, &mut rng)
}
