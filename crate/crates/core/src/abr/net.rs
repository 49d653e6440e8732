//! The actor and critic network, written out by hand with analytic gradients.
//!
//! Each history vector passes through its own 1-D convolution (stride 1, no
//! padding) and each scalar feature through its own dense layer; all of those
//! ReLU outputs are concatenated and fed to a single dense output layer. The
//! actor reads the output as softmax logits, the critic as a value.
//!
//! The element type is generic so the same code trains in `f32` and is
//! gradient-checked in `f64`.

use std::fmt::Debug;

use num_traits::{Float, NumAssign};
use rand::Rng;

use crate::error::{input_err, Result};

pub trait Real: Float + NumAssign + Default + Debug + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Layer sizes of one network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetShape {
    pub n_hist: usize,
    pub hist_len: usize,
    pub filters: usize,
    pub kernel: usize,
    pub n_scalars: usize,
    pub scalar_units: usize,
    pub outputs: usize,
}

impl NetShape {
    /// Five length-8 histories, 128 filters of width 3, four scalar heads of
    /// 128 units.
    pub fn standard(outputs: usize) -> Self {
        NetShape {
            n_hist: 5,
            hist_len: super::HISTORY_LEN,
            filters: 128,
            kernel: 3,
            n_scalars: 4,
            scalar_units: 128,
            outputs,
        }
    }

    pub fn conv_out(&self) -> usize {
        self.hist_len + 1 - self.kernel
    }

    /// Width of the concatenated hidden layer.
    pub fn hidden(&self) -> usize {
        self.n_hist * self.filters * self.conv_out() + self.n_scalars * self.scalar_units
    }

    fn validate(&self) -> Result<()> {
        if self.n_hist == 0 || self.filters == 0 || self.kernel == 0 || self.outputs == 0 {
            return Err(input_err!("network dimensions must be positive: {self:?}"));
        }
        if self.kernel > self.hist_len {
            return Err(input_err!("kernel {} longer than history {}", self.kernel, self.hist_len));
        }
        Ok(())
    }

    /// `(name, dims)` of every parameter tensor, in storage order.
    pub fn tensors(&self) -> [(&'static str, Vec<usize>); 6] {
        [
            ("conv_w", vec![self.n_hist, self.filters, self.kernel]),
            ("conv_b", vec![self.n_hist, self.filters]),
            ("scalar_w", vec![self.n_scalars, self.scalar_units]),
            ("scalar_b", vec![self.n_scalars, self.scalar_units]),
            ("out_w", vec![self.outputs, self.hidden()]),
            ("out_b", vec![self.outputs]),
        ]
    }

    /// Rebuilds a shape from the six tensor shapes written by [`Self::tensors`].
    pub fn from_tensors(dims: &[Vec<usize>]) -> Result<Self> {
        let bad = || input_err!("tensor shapes do not describe a policy network: {dims:?}");
        if dims.len() != 6 {
            return Err(bad());
        }
        let (conv, scal, out) = (&dims[0], &dims[2], &dims[4]);
        if conv.len() != 3 || scal.len() != 2 || out.len() != 2 {
            return Err(bad());
        }
        let (n_hist, filters, kernel) = (conv[0], conv[1], conv[2]);
        let (n_scalars, scalar_units) = (scal[0], scal[1]);
        let (outputs, hidden) = (out[0], out[1]);
        let conv_part = hidden.checked_sub(n_scalars * scalar_units).ok_or_else(bad)?;
        if n_hist * filters == 0 || conv_part % (n_hist * filters) != 0 {
            return Err(bad());
        }
        let hist_len = conv_part / (n_hist * filters) + kernel - 1;
        let shape = NetShape { n_hist, hist_len, filters, kernel, n_scalars, scalar_units, outputs };
        shape.validate()?;
        let expect = shape.tensors();
        if expect.iter().zip(dims).any(|((_, e), d)| e != d) {
            return Err(bad());
        }
        Ok(shape)
    }
}

/// Offsets of each tensor inside the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    conv_w: usize,
    conv_b: usize,
    scal_w: usize,
    scal_b: usize,
    out_w: usize,
    out_b: usize,
    total: usize,
}

impl Layout {
    fn of(s: &NetShape) -> Self {
        let conv_w = 0;
        let conv_b = conv_w + s.n_hist * s.filters * s.kernel;
        let scal_w = conv_b + s.n_hist * s.filters;
        let scal_b = scal_w + s.n_scalars * s.scalar_units;
        let out_w = scal_b + s.n_scalars * s.scalar_units;
        let out_b = out_w + s.outputs * s.hidden();
        let total = out_b + s.outputs;
        Layout { conv_w, conv_b, scal_w, scal_b, out_w, out_b, total }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<F> {
    shape: NetShape,
    params: Vec<F>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache<F> {
    hist: Vec<F>,
    scalars: Vec<F>,
    hidden: Vec<F>,
    pub outputs: Vec<F>,
}

impl<F: Real> Network<F> {
    /// Fan-in scaled uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(shape: NetShape, rng: &mut R) -> Result<Self> {
        shape.validate()?;
        let lay = Layout::of(&shape);
        let mut params = vec![F::zero(); lay.total];
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut params[range] {
                *p = F::from_f64(rng.random_range(-bound..bound));
            }
        };
        fill(lay.conv_w..lay.conv_b, shape.kernel);
        fill(lay.scal_w..lay.scal_b, 1);
        fill(lay.out_w..lay.out_b, shape.hidden());
        Ok(Network { shape, params })
    }

    pub fn from_params(shape: NetShape, params: Vec<F>) -> Result<Self> {
        shape.validate()?;
        if params.len() != Layout::of(&shape).total {
            return Err(input_err!("expected {} parameters, got {}", Layout::of(&shape).total, params.len()));
        }
        Ok(Network { shape, params })
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn params(&self) -> &[F] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [F] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Zeroes the output layer, making every output equal (and 0).
    pub fn zero_output_layer(&mut self) {
        let lay = Layout::of(&self.shape);
        self.params[lay.out_w..].fill(F::zero());
    }

    /// Same network with its parameters converted to another float type.
    pub fn cast<G: Real>(&self) -> Network<G> {
        Network { shape: self.shape, params: self.params.iter().map(|p| G::from_f64(p.as_f64())).collect() }
    }

    pub fn forward(&self, hist: &[f64], scalars: &[f64]) -> Result<Cache<F>> {
        let s = &self.shape;
        if hist.len() != s.n_hist * s.hist_len || scalars.len() != s.n_scalars {
            return Err(input_err!(
                "network expects {} history and {} scalar inputs, got {} and {}",
                s.n_hist * s.hist_len,
                s.n_scalars,
                hist.len(),
                scalars.len()
            ));
        }
        if hist.iter().chain(scalars).any(|v| !v.is_finite()) {
            return Err(input_err!("network input contains non-finite values"));
        }
        let hist: Vec<F> = hist.iter().map(|&v| F::from_f64(v)).collect();
        let scalars: Vec<F> = scalars.iter().map(|&v| F::from_f64(v)).collect();
        let lay = Layout::of(s);
        let p = &self.params;
        let co = s.conv_out();
        let mut hidden = Vec::with_capacity(s.hidden());
        for h in 0..s.n_hist {
            let x = &hist[h * s.hist_len..(h + 1) * s.hist_len];
            for f in 0..s.filters {
                let w = &p[lay.conv_w + (h * s.filters + f) * s.kernel..][..s.kernel];
                let b = p[lay.conv_b + h * s.filters + f];
                for pos in 0..co {
                    let mut z = b;
                    for k in 0..s.kernel {
                        z += w[k] * x[pos + k];
                    }
                    hidden.push(z.max(F::zero()));
                }
            }
        }
        for (i, &x) in scalars.iter().enumerate() {
            for u in 0..s.scalar_units {
                let z = p[lay.scal_w + i * s.scalar_units + u] * x + p[lay.scal_b + i * s.scalar_units + u];
                hidden.push(z.max(F::zero()));
            }
        }
        let nh = hidden.len();
        let outputs = (0..s.outputs).map(|o| p[lay.out_b + o] + dot(&p[lay.out_w + o * nh..][..nh], &hidden)).collect();
        Ok(Cache { hist, scalars, hidden, outputs })
    }

    /// Accumulates `d loss / d params` into `grads` given `d loss / d outputs`.
    pub fn backward(&self, cache: &Cache<F>, d_out: &[F], grads: &mut [F]) {
        let s = &self.shape;
        let lay = Layout::of(s);
        let p = &self.params;
        let nh = cache.hidden.len();
        debug_assert_eq!(grads.len(), p.len());
        let mut d_hidden = vec![F::zero(); nh];
        for (o, &g) in d_out.iter().enumerate() {
            if g == F::zero() {
                continue;
            }
            grads[lay.out_b + o] += g;
            axpy(g, &cache.hidden, &mut grads[lay.out_w + o * nh..][..nh]);
            axpy(g, &p[lay.out_w + o * nh..][..nh], &mut d_hidden);
        }
        // ReLU: only units that fired pass gradient back
        for (d, &h) in d_hidden.iter_mut().zip(&cache.hidden) {
            if h <= F::zero() {
                *d = F::zero();
            }
        }
        let co = s.conv_out();
        let mut idx = 0;
        for h in 0..s.n_hist {
            let x = &cache.hist[h * s.hist_len..(h + 1) * s.hist_len];
            for f in 0..s.filters {
                let wi = lay.conv_w + (h * s.filters + f) * s.kernel;
                let bi = lay.conv_b + h * s.filters + f;
                for pos in 0..co {
                    let g = d_hidden[idx];
                    idx += 1;
                    if g == F::zero() {
                        continue;
                    }
                    grads[bi] += g;
                    for k in 0..s.kernel {
                        grads[wi + k] += g * x[pos + k];
                    }
                }
            }
        }
        for (i, &x) in cache.scalars.iter().enumerate() {
            for u in 0..s.scalar_units {
                let g = d_hidden[idx];
                idx += 1;
                grads[lay.scal_w + i * s.scalar_units + u] += g * x;
                grads[lay.scal_b + i * s.scalar_units + u] += g;
            }
        }
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
#[inline]
fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    let mut acc = [F::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: F = ca.remainder().iter().zip(cb.remainder()).fold(F::zero(), |s, (&x, &y)| s + x * y);
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

#[inline]
fn axpy<F: Real>(alpha: F, x: &[F], y: &mut [F]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Softmax with the usual max shift.
pub fn softmax<F: Real>(logits: &[F]) -> Vec<F> {
    let m = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = logits.iter().map(|&z| (z - m).exp()).collect();
    let sum = exps.iter().copied().fold(F::zero(), |a, b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}
