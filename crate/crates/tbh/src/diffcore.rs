//! Minimal dense numeric core: matrices, dense layer forward/backward,
//! Adam updates, and a finite-difference gradient checker.
//!
//! Everything is generic over [`Scalar`] so the same code runs in `f32`
//! for training and in `f64` for gradient verification.

use ndarray::{Array2, Axis};
use rand::distributions::uniform::SampleUniform;
use rand::distributions::Uniform;
use rand::Rng;

use crate::error::{Error, Result};

/// Row-major dense matrix. Shape invariants are carried by `ndarray`;
/// finiteness is checked explicitly via [`ensure_finite`].
pub type Mat<F> = Array2<F>;

/// Floating-point element type usable throughout the numeric core.
pub trait Scalar: ndarray::NdFloat + SampleUniform {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Hard error if any entry is NaN or infinite.
pub fn ensure_finite<F: Scalar>(name: &str, m: &Mat<F>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite values in {name}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply<F: Scalar>(self, pre: &Mat<F>) -> Mat<F> {
        match self {
            Activation::Relu => pre.mapv(|v| if v > F::zero() { v } else { F::zero() }),
            Activation::Sigmoid => pre.mapv(sigmoid),
            Activation::Identity => pre.clone(),
        }
    }

    /// Derivative at the cached pre-activation. ReLU uses sub-gradient 0 at 0.
    pub fn derivative<F: Scalar>(self, pre: &Mat<F>) -> Mat<F> {
        match self {
            Activation::Relu => pre.mapv(|v| if v > F::zero() { F::one() } else { F::zero() }),
            Activation::Sigmoid => pre.mapv(|v| {
                let s = sigmoid(v);
                s * (F::one() - s)
            }),
            Activation::Identity => Mat::ones(pre.raw_dim()),
        }
    }
}

pub fn sigmoid<F: Scalar>(v: F) -> F {
    F::one() / (F::one() + (-v).exp())
}

/// A named trainable tensor with its gradient and Adam moment buffers.
///
/// All four matrices share one shape; the optimizer step counter lives in
/// [`AdamScope`] so it is shared across every tensor of one scope.
#[derive(Debug, Clone)]
pub struct ParameterTensor<F: Scalar> {
    pub name: String,
    pub value: Mat<F>,
    pub grad: Mat<F>,
    pub adam_m: Mat<F>,
    pub adam_v: Mat<F>,
}

impl<F: Scalar> ParameterTensor<F> {
    pub fn new(name: impl Into<String>, value: Mat<F>) -> Self {
        let shape = value.raw_dim();
        ParameterTensor {
            name: name.into(),
            value,
            grad: Mat::zeros(shape),
            adam_m: Mat::zeros(shape),
            adam_v: Mat::zeros(shape),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::zero());
    }
}

/// Glorot/Xavier uniform initialization in
/// `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`.
pub fn glorot_uniform<F: Scalar, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Mat<F> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new(F::from_f64(-limit), F::from_f64(limit));
    Mat::from_shape_simple_fn((rows, cols), || rng.sample(&dist))
}

/// One Adam optimizer scope: a shared step counter plus hyper-parameters.
/// beta1 = 0.9, beta2 = 0.999 (Adam defaults), epsilon = 1e-8, with bias
/// correction.
#[derive(Debug, Clone)]
pub struct AdamScope {
    pub step_count: u64,
}

impl AdamScope {
    pub fn new() -> Self {
        AdamScope { step_count: 0 }
    }

    /// Applies one Adam update to every tensor, then zeroes the gradients
    /// and increments the shared step counter.
    pub fn step<F: Scalar>(&mut self, params: &mut [&mut ParameterTensor<F>], learning_rate: F) {
        self.step_count += 1;
        let t = self.step_count as f64;
        let beta1 = F::from_f64(0.9);
        let beta2 = F::from_f64(0.999);
        let eps = F::from_f64(1e-8);
        let corr1 = F::from_f64(1.0 - 0.9f64.powi(t as i32));
        let corr2 = F::from_f64(1.0 - 0.999f64.powi(t as i32));
        for p in params.iter_mut() {
            ndarray::Zip::from(&mut p.adam_m)
                .and(&p.grad)
                .for_each(|m, &g| *m = beta1 * *m + (F::one() - beta1) * g);
            ndarray::Zip::from(&mut p.adam_v)
                .and(&p.grad)
                .for_each(|v, &g| *v = beta2 * *v + (F::one() - beta2) * g * g);
            ndarray::Zip::from(&mut p.value)
                .and(&p.adam_m)
                .and(&p.adam_v)
                .for_each(|w, &m, &v| {
                    let m_hat = m / corr1;
                    let v_hat = v / corr2;
                    *w = *w - learning_rate * m_hat / (v_hat.sqrt() + eps);
                });
            p.zero_grad();
        }
    }
}

impl Default for AdamScope {
    fn default() -> Self {
        Self::new()
    }
}

/// Cached forward state of a dense layer, needed by the backward pass.
#[derive(Debug, Clone)]
pub struct DenseCache<F: Scalar> {
    pub input: Mat<F>,
    pub pre_activation: Mat<F>,
}

/// A dense affine layer `activation(input . weight + bias)`.
///
/// `weight` has shape `(in_dim, out_dim)`; `bias` is a single row.
#[derive(Debug, Clone)]
pub struct DenseLayer<F: Scalar> {
    pub weight: ParameterTensor<F>,
    pub bias: ParameterTensor<F>,
    pub activation: Activation,
}

impl<F: Scalar> DenseLayer<F> {
    pub fn new<R: Rng>(
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        DenseLayer {
            weight: ParameterTensor::new(format!("{name}.w"), glorot_uniform(in_dim, out_dim, rng)),
            bias: ParameterTensor::new(format!("{name}.b"), Mat::zeros((1, out_dim))),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.ncols()
    }

    pub fn forward(&self, input: &Mat<F>) -> Result<(Mat<F>, DenseCache<F>)> {
        if input.ncols() != self.in_dim() {
            return Err(Error::Dimension(format!(
                "{}: input has {} cols, expected {}",
                self.weight.name,
                input.ncols(),
                self.in_dim()
            )));
        }
        let mut pre = input.dot(&self.weight.value);
        pre += &self.bias.value;
        let out = self.activation.apply(&pre);
        ensure_finite(&self.weight.name, &out)?;
        Ok((
            out,
            DenseCache {
                input: input.clone(),
                pre_activation: pre,
            },
        ))
    }

    /// Accumulates weight/bias gradients and returns the gradient w.r.t.
    /// the layer input.
    pub fn backward(&mut self, upstream: &Mat<F>, cache: &DenseCache<F>) -> Mat<F> {
        let d_pre = self.d_pre(upstream, cache);
        self.weight.grad += &cache.input.t().dot(&d_pre);
        self.bias.grad += &d_pre.sum_axis(Axis(0)).insert_axis(Axis(0));
        d_pre.dot(&self.weight.value.t())
    }

    /// Backward pass that only propagates to the input, leaving the layer's
    /// own gradients untouched. Used when a loss flows *through* a network
    /// whose parameters belong to the other optimizer scope.
    pub fn backward_input_only(&self, upstream: &Mat<F>, cache: &DenseCache<F>) -> Mat<F> {
        let d_pre = self.d_pre(upstream, cache);
        d_pre.dot(&self.weight.value.t())
    }

    fn d_pre(&self, upstream: &Mat<F>, cache: &DenseCache<F>) -> Mat<F> {
        assert_eq!(
            upstream.raw_dim(),
            cache.pre_activation.raw_dim(),
            "{}: upstream gradient shape mismatch",
            self.weight.name
        );
        upstream * &self.activation.derivative(&cache.pre_activation)
    }
}

/// Anything exposing a flat, stably ordered list of parameter tensors.
pub trait HasParameters<F: Scalar> {
    fn parameters_mut(&mut self) -> Vec<&mut ParameterTensor<F>>;
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub entries_checked: usize,
}

/// Central finite differences vs the analytic gradients already stored in
/// each tensor's `grad` buffer.
///
/// `loss` must recompute the (deterministic) loss from the current parameter
/// values. Above `max_entries` total entries a seeded random subsample is
/// checked instead of every entry.
pub fn gradient_check<M, L>(
    model: &mut M,
    mut loss: L,
    h: f64,
    max_entries: usize,
    seed: u64,
) -> GradCheckReport
where
    M: HasParameters<f64>,
    L: FnMut(&mut M) -> f64,
{
    // Snapshot analytic grads and shapes first; perturbation happens after.
    let analytic: Vec<Mat<f64>> = model
        .parameters_mut()
        .iter()
        .map(|p| p.grad.clone())
        .collect();
    let mut coords: Vec<(usize, usize)> = Vec::new();
    for (ti, g) in analytic.iter().enumerate() {
        for ei in 0..g.len() {
            coords.push((ti, ei));
        }
    }
    if coords.len() > max_entries {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        coords.shuffle(&mut rng);
        coords.truncate(max_entries);
    }

    let mut max_rel = 0.0f64;
    for &(ti, ei) in &coords {
        let perturb = |m: &mut M, delta: f64| {
            let mut params = m.parameters_mut();
            let v = params[ti].value.as_slice_mut().expect("contiguous");
            v[ei] += delta;
        };
        perturb(model, h);
        let plus = loss(model);
        perturb(model, -2.0 * h);
        let minus = loss(model);
        perturb(model, h);
        let fd = (plus - minus) / (2.0 * h);
        let a = analytic[ti].as_slice().expect("contiguous")[ei];
        let denom = a.abs().max(fd.abs());
        let rel = if denom < 1e-10 {
            (a - fd).abs()
        } else {
            (a - fd).abs() / denom
        };
        max_rel = max_rel.max(rel);
    }
    GradCheckReport {
        max_rel_error: max_rel,
        entries_checked: coords.len(),
    }
}
