//! Two-layer fully connected network shared by the federated task model and
//! the Q-networks.
//!
//! Parameters live in one contiguous vector laid out as
//! `[W1 (hidden x input) | b1 (hidden) | W2 (output x hidden) | b2 (output)]`,
//! row-major, so aggregation and SGD can treat them as a flat vector.

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Layer sizes of an `input x hidden x output` network with a rectifier hidden layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Architecture {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl Architecture {
    pub fn new(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            input,
            hidden,
            output,
        }
    }

    pub fn param_count(&self) -> usize {
        self.hidden * self.input + self.hidden + self.output * self.hidden + self.output
    }

    fn offsets(&self) -> [usize; 4] {
        let w1 = 0;
        let b1 = w1 + self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.output * self.hidden;
        [w1, b1, w2, b2]
    }
}

/// Intermediate values of a forward pass over a batch.
#[derive(Debug, Clone)]
pub struct Activations {
    /// Hidden pre-activations, `n x hidden`.
    pub pre_hidden: Array2<f64>,
    /// Rectified hidden outputs, `n x hidden`.
    pub hidden: Array2<f64>,
    /// Output layer (logits or Q-values), `n x output`.
    pub output: Array2<f64>,
}

/// Weights and biases of a network, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    arch: Architecture,
    flat: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(arch: Architecture) -> Self {
        Self {
            arch,
            flat: vec![0.0; arch.param_count()],
        }
    }

    pub fn from_flat(arch: Architecture, flat: Vec<f64>) -> Result<Self> {
        if flat.len() != arch.param_count() {
            return Err(Error::LengthMismatch {
                expected: arch.param_count(),
                actual: flat.len(),
            });
        }
        Ok(Self { arch, flat })
    }

    /// He-initialised hidden layer, Xavier-initialised output layer, zero biases.
    pub fn random<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch);
        let [w1, b1, w2, b2] = arch.offsets();
        let he = Normal::new(0.0, (2.0 / arch.input as f64).sqrt()).expect("finite std");
        for v in &mut p.flat[w1..b1] {
            *v = he.sample(rng);
        }
        let xavier = Normal::new(0.0, (1.0 / arch.hidden as f64).sqrt()).expect("finite std");
        for v in &mut p.flat[w2..b2] {
            *v = xavier.sample(rng);
        }
        p
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn flat_view(&self) -> &[f64] {
        &self.flat
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.flat
    }

    pub fn is_finite(&self) -> bool {
        self.flat.iter().all(|v| v.is_finite())
    }

    pub fn w1(&self) -> ArrayView2<'_, f64> {
        let [w1, b1, _, _] = self.arch.offsets();
        ArrayView2::from_shape((self.arch.hidden, self.arch.input), &self.flat[w1..b1]).expect("layout")
    }

    pub fn b1(&self) -> ArrayView1<'_, f64> {
        let [_, b1, w2, _] = self.arch.offsets();
        ArrayView1::from(&self.flat[b1..w2])
    }

    pub fn w2(&self) -> ArrayView2<'_, f64> {
        let [_, _, w2, b2] = self.arch.offsets();
        ArrayView2::from_shape((self.arch.output, self.arch.hidden), &self.flat[w2..b2]).expect("layout")
    }

    pub fn b2(&self) -> ArrayView1<'_, f64> {
        let [_, _, _, b2] = self.arch.offsets();
        ArrayView1::from(&self.flat[b2..])
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Activations {
        debug_assert_eq!(x.ncols(), self.arch.input);
        let mut pre_hidden = x.dot(&self.w1().t());
        pre_hidden += &self.b1();
        let hidden = pre_hidden.mapv(|v| v.max(0.0));
        let mut output = hidden.dot(&self.w2().t());
        output += &self.b2();
        Activations {
            pre_hidden,
            hidden,
            output,
        }
    }

    /// Output layer only.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.forward(x).output
    }

    /// Back-propagates `d_output` (gradient of the loss w.r.t. the output
    /// layer, `n x output`) into a flat parameter gradient.
    pub fn backward(&self, x: ArrayView2<'_, f64>, acts: &Activations, d_output: ArrayView2<'_, f64>) -> Vec<f64> {
        let arch = self.arch;
        let [w1, b1, w2, b2] = arch.offsets();
        let mut grad = vec![0.0; arch.param_count()];

        let d_w2 = d_output.t().dot(&acts.hidden);
        let d_b2 = d_output.sum_axis(Axis(0));
        let mut d_hidden = d_output.dot(&self.w2());
        ndarray::Zip::from(&mut d_hidden)
            .and(&acts.pre_hidden)
            .for_each(|d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
        let d_w1 = d_hidden.t().dot(&x);
        let d_b1 = d_hidden.sum_axis(Axis(0));

        copy_into(&mut grad[w1..b1], d_w1.iter());
        copy_into(&mut grad[b1..w2], d_b1.iter());
        copy_into(&mut grad[w2..b2], d_w2.iter());
        copy_into(&mut grad[b2..], d_b2.iter());
        grad
    }

    /// `self += scale * direction`.
    pub fn add_scaled(&mut self, scale: f64, direction: &[f64]) {
        debug_assert_eq!(direction.len(), self.flat.len());
        for (p, d) in self.flat.iter_mut().zip(direction) {
            *p += scale * d;
        }
    }

    /// Copies layer `rows` of W1 from a row-major slice; test helper for hand-built nets.
    pub fn set_w1_row(&mut self, row: usize, values: &[f64]) {
        let [w1, _, _, _] = self.arch.offsets();
        let start = w1 + row * self.arch.input;
        self.flat[start..start + self.arch.input].copy_from_slice(values);
    }

    pub fn set_b2(&mut self, values: &[f64]) {
        let [_, _, _, b2] = self.arch.offsets();
        self.flat[b2..].copy_from_slice(values);
    }

    /// Mutable view of the hidden pre-activation slice range of W2 (`output x hidden`).
    pub fn w2_mut(&mut self) -> ndarray::ArrayViewMut2<'_, f64> {
        let [_, _, w2, b2] = self.arch.offsets();
        let (h, o) = (self.arch.hidden, self.arch.output);
        ndarray::ArrayViewMut2::from_shape((o, h), &mut self.flat[w2..b2]).expect("layout")
    }

    pub fn b1_mut(&mut self) -> &mut [f64] {
        let [_, b1, w2, _] = self.arch.offsets();
        &mut self.flat[b1..w2]
    }
}

fn copy_into<'a>(dst: &mut [f64], src: impl Iterator<Item = &'a f64>) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = *s;
    }
}

/// Mean of the rectified hidden outputs over all samples and units.
pub fn hidden_mean(acts: &Activations) -> f64 {
    acts.hidden.mean().unwrap_or(0.0)
}

/// Rows `range` of a matrix as a view, used for mini-batching.
pub fn rows(x: &Array2<f64>, start: usize, end: usize) -> ArrayView2<'_, f64> {
    x.slice(s![start..end, ..])
}
