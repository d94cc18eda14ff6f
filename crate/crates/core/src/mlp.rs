//! Fully connected tanh network with a softmax output, cross-entropy loss,
//! exact backpropagation, and Hessian-vector products by forward-mode
//! differentiation of the backward pass.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::LabeledSample;
use crate::rng;

/// Default layer sizes: 15 inputs, two hidden layers of 32, two classes.
pub const DEFAULT_ARCHITECTURE: [usize; 4] = [15, 32, 32, 2];

/// Numeric type the network is evaluated in: plain `f64`, or [`Dual`] for
/// directional derivatives.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    fn cst(v: f64) -> Self;
    fn re(self) -> f64;
    fn tanh(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn re(self) -> f64 {
        self
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
}

/// First-order dual number `re + eps·ε`, ε² = 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual {
    pub re: f64,
    pub eps: f64,
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual {
            re: self.re + o.re,
            eps: self.eps + o.eps,
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual {
            re: self.re - o.re,
            eps: self.eps - o.eps,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            re: self.re * o.re,
            eps: self.re * o.eps + self.eps * o.re,
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual {
            re: self.re / o.re,
            eps: (self.eps * o.re - self.re * o.eps) / (o.re * o.re),
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            re: -self.re,
            eps: -self.eps,
        }
    }
}

impl AddAssign for Dual {
    fn add_assign(&mut self, o: Dual) {
        self.re += o.re;
        self.eps += o.eps;
    }
}

impl Scalar for Dual {
    fn cst(v: f64) -> Self {
        Dual { re: v, eps: 0.0 }
    }
    fn re(self) -> f64 {
        self.re
    }
    fn tanh(self) -> Self {
        let t = self.re.tanh();
        Dual {
            re: t,
            eps: self.eps * (1.0 - t * t),
        }
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual { re: e, eps: self.eps * e }
    }
    fn ln(self) -> Self {
        Dual {
            re: self.re.ln(),
            eps: self.eps / self.re,
        }
    }
}

/// A standardized input row and its class.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: Vec<f64>,
    pub y: usize,
}

/// Per-dimension standardization fitted on training inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population mean/std per column; constant columns get std 1.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::InvalidInput("cannot standardize zero rows".into()));
        };
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                // Treat rounding-level spread as a constant column.
                if sd.is_finite() && sd > 1e-12 * m.abs().max(1.0) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn fit_samples(samples: &[LabeledSample]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = samples.iter().map(|s| s.features.model_input().to_vec()).collect();
        Self::fit(&rows)
    }

    pub fn identity(d: usize) -> Self {
        Standardizer {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn examples(&self, samples: &[LabeledSample]) -> Vec<Example> {
        samples
            .iter()
            .map(|s| Example {
                x: self.apply(&s.features.model_input()),
                y: s.label.class_index(),
            })
            .collect()
    }
}

/// Network weights, flattened: per layer a row-major (out × in) weight
/// matrix followed by the bias vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub sizes: Vec<usize>,
    pub theta: Vec<f64>,
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl MlpParams {
    pub fn zeros(sizes: &[usize]) -> Self {
        MlpParams {
            sizes: sizes.to_vec(),
            theta: vec![0.0; param_count(sizes)],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(sizes: &[usize], seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let mut theta = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
            theta.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-lim..=lim)));
            theta.extend(std::iter::repeat_n(0.0, fan_out));
        }
        MlpParams {
            sizes: sizes.to_vec(),
            theta,
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
    }

    /// Class probabilities for one standardized input.
    pub fn class_probs(&self, x: &[f64]) -> Vec<f64> {
        let logits = logits(&self.sizes, &self.theta, x);
        softmax(&logits)
    }

    /// Probability of the landslide class for a standardized input.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_inputs() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("MLP input must be finite and match the input width".into()));
        }
        Ok(self.class_probs(x)[1])
    }

    pub fn loss_and_grad(&self, batch: &[Example]) -> (f64, Vec<f64>) {
        loss_and_grad(&self.sizes, &self.theta, batch)
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn logits(sizes: &[usize], theta: &[f64], x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    let mut off = 0;
    let n_layers = sizes.len() - 1;
    for l in 0..n_layers {
        let (fi, fo) = (sizes[l], sizes[l + 1]);
        let w = &theta[off..off + fi * fo];
        let b = &theta[off + fi * fo..off + fi * fo + fo];
        off += fi * fo + fo;
        let mut z: Vec<f64> = b.to_vec();
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &w[o * fi..(o + 1) * fi];
            *zo += row.iter().zip(&a).map(|(p, q)| p * q).sum::<f64>();
        }
        if l + 1 < n_layers {
            z.iter_mut().for_each(|v| *v = v.tanh());
        }
        a = z;
    }
    a
}

/// Mean cross-entropy over `batch` and its exact gradient, evaluated in any
/// [`Scalar`] type.
pub fn loss_and_grad_generic<T: Scalar>(sizes: &[usize], theta: &[T], batch: &[Example]) -> (T, Vec<T>) {
    let n_layers = sizes.len() - 1;
    let mut offsets = Vec::with_capacity(n_layers);
    let mut off = 0;
    for l in 0..n_layers {
        offsets.push(off);
        off += sizes[l] * sizes[l + 1] + sizes[l + 1];
    }
    let zero = T::cst(0.0);
    let mut grad = vec![zero; theta.len()];
    let mut loss = zero;
    let mut acts: Vec<Vec<T>> = Vec::with_capacity(n_layers + 1);

    for ex in batch {
        acts.clear();
        acts.push(ex.x.iter().map(|&v| T::cst(v)).collect());
        for l in 0..n_layers {
            let (fi, fo, o0) = (sizes[l], sizes[l + 1], offsets[l]);
            let a = &acts[l];
            let mut z = Vec::with_capacity(fo);
            for o in 0..fo {
                let row = &theta[o0 + o * fi..o0 + (o + 1) * fi];
                let mut s = theta[o0 + fi * fo + o];
                for (p, q) in row.iter().zip(a) {
                    s += *p * *q;
                }
                z.push(if l + 1 < n_layers { s.tanh() } else { s });
            }
            acts.push(z);
        }
        let z = &acts[n_layers];
        let m = z.iter().map(|v| v.re()).fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<T> = z.iter().map(|&v| (v - T::cst(m)).exp()).collect();
        let mut se = zero;
        for &v in &e {
            se += v;
        }
        loss += se.ln() + T::cst(m) - z[ex.y];

        let mut delta: Vec<T> = e.iter().map(|&v| v / se).collect();
        delta[ex.y] = delta[ex.y] - T::cst(1.0);
        for l in (0..n_layers).rev() {
            let (fi, fo, o0) = (sizes[l], sizes[l + 1], offsets[l]);
            let a = &acts[l];
            for o in 0..fo {
                let d = delta[o];
                let g = &mut grad[o0 + o * fi..o0 + (o + 1) * fi];
                for (gv, q) in g.iter_mut().zip(a) {
                    *gv += d * *q;
                }
                grad[o0 + fi * fo + o] += d;
            }
            if l > 0 {
                let mut prev = vec![zero; fi];
                for o in 0..fo {
                    let d = delta[o];
                    let row = &theta[o0 + o * fi..o0 + (o + 1) * fi];
                    for (pv, w) in prev.iter_mut().zip(row) {
                        *pv += *w * d;
                    }
                }
                for (pv, av) in prev.iter_mut().zip(a) {
                    *pv = *pv * (T::cst(1.0) - *av * *av);
                }
                delta = prev;
            }
        }
    }
    let inv = T::cst(1.0 / batch.len().max(1) as f64);
    (loss * inv, grad.into_iter().map(|g| g * inv).collect())
}

pub fn loss_and_grad(sizes: &[usize], theta: &[f64], batch: &[Example]) -> (f64, Vec<f64>) {
    loss_and_grad_generic(sizes, theta, batch)
}

pub fn loss(sizes: &[usize], theta: &[f64], batch: &[Example]) -> f64 {
    let mut total = 0.0;
    for ex in batch {
        let z = logits(sizes, theta, &ex.x);
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - z[ex.y];
    }
    total / batch.len().max(1) as f64
}

/// Gradient and Hessian-vector product `H·v` of the batch loss at `theta`.
pub fn grad_and_hvp(sizes: &[usize], theta: &[f64], batch: &[Example], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let dual: Vec<Dual> = theta.iter().zip(v).map(|(&re, &eps)| Dual { re, eps }).collect();
    let (_, g) = loss_and_grad_generic(sizes, &dual, batch);
    g.into_iter().map(|d| (d.re, d.eps)).unzip()
}

pub fn accuracy(sizes: &[usize], theta: &[f64], batch: &[Example]) -> f64 {
    if batch.is_empty() {
        return f64::NAN;
    }
    let correct = batch
        .iter()
        .filter(|ex| {
            let z = logits(sizes, theta, &ex.x);
            let pred = usize::from(z[1] > z[0]);
            pred == ex.y
        })
        .count();
    correct as f64 / batch.len() as f64
}
