//! Small deterministic numeric kernel.
//!
//! Everything is `f64` and row-major. The network has a fixed topology, so
//! instead of a general autodiff graph every forward kernel has a matching
//! `*_backward` function that accumulates (`+=`) into caller-owned gradient
//! buffers.

mod gradcheck;
mod optim;

pub use gradcheck::{grad_check, relative_error, GradCheckReport, Parameterized};
pub use optim::{adam_step, AdamConfig, Param, ParamGroup, ParamId};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clipped into `[PROB_CLIP, 1 - PROB_CLIP]` before any log.
pub const PROB_CLIP: f64 = 1e-12;

/// Dense tensor of rank 1 or 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        assert!(
            !shape.is_empty() && shape.len() <= 2,
            "tensor rank must be 1 or 2"
        );
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 2 {
            return Err(Error::Input(format!("unsupported tensor rank {}", shape.len())));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::dim(
                "Tensor::from_vec",
                format!("shape {shape:?}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_vec(&[rows, cols], data)
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Rows of a matrix, or the length of a vector.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Columns of a matrix; 1 for a vector.
    pub fn cols(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    /// Xavier/Glorot uniform: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
    pub fn xavier_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let mut t = Tensor::zeros(&[rows, cols]);
        let fan = (rows + cols) as f64;
        if fan > 0.0 {
            let a = (6.0 / fan).sqrt();
            for v in t.data.iter_mut() {
                *v = rng.random_range(-a..a);
            }
        }
        t
    }

    fn shape_str(&self) -> String {
        format!("{:?}", self.shape)
    }
}

// ---------------------------------------------------------------------------
// slice kernels used on the hot path

/// `out = W x` for a row-major `rows x cols` matrix.
#[inline]
pub fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols.max(1))) {
        *o = dot(row, x);
    }
    if cols == 0 {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
}

/// `dx += W^T dy`.
#[inline]
pub fn matvec_t_acc(w: &[f64], rows: usize, cols: usize, dy: &[f64], dx: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(dy.len(), rows);
    debug_assert_eq!(dx.len(), cols);
    if cols == 0 {
        return;
    }
    for (&g, row) in dy.iter().zip(w.chunks_exact(cols)) {
        if g != 0.0 {
            axpy(g, row, dx);
        }
    }
}

/// `dw += dy x^T`.
#[inline]
pub fn outer_acc(dw: &mut [f64], dy: &[f64], x: &[f64]) {
    let cols = x.len();
    debug_assert_eq!(dw.len(), dy.len() * cols);
    if cols == 0 {
        return;
    }
    for (&g, row) in dy.iter().zip(dw.chunks_exact_mut(cols)) {
        if g != 0.0 {
            axpy(g, x, row);
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a x`.
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn add_assign(y: &mut [f64], x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi;
    }
}

// ---------------------------------------------------------------------------
// shape-checked operations

/// `y = W x + b`.
pub fn linear_forward(w: &Tensor, b: &Tensor, x: &[f64]) -> Result<Vec<f64>> {
    if w.shape.len() != 2 || w.cols() != x.len() {
        return Err(Error::dim(
            "linear_forward",
            format!("W {}", w.shape_str()),
            format!("x [{}]", x.len()),
        ));
    }
    if b.len() != w.rows() {
        return Err(Error::dim(
            "linear_forward",
            format!("W {}", w.shape_str()),
            format!("b {}", b.shape_str()),
        ));
    }
    let mut y = vec![0.0; w.rows()];
    matvec(&w.data, w.rows(), w.cols(), x, &mut y);
    add_assign(&mut y, &b.data);
    Ok(y)
}

/// Accumulates the gradients of `y = W x + b` given `dy`.
pub fn linear_backward(
    w: &Tensor,
    x: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    outer_acc(dw, dy, x);
    add_assign(db, dy);
    if let Some(dx) = dx {
        matvec_t_acc(&w.data, w.rows(), w.cols(), dy, dx);
    }
}

/// Output of a low-rank affine map along with its rank-`r` bottleneck.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraOutput {
    pub y: Vec<f64>,
    pub hidden: Vec<f64>,
}

/// `y = B (A x) + b`, never materializing `BA`.
pub fn lora_forward(b_mat: &Tensor, a_mat: &Tensor, bias: &Tensor, x: &[f64]) -> Result<LoraOutput> {
    if a_mat.shape.len() != 2 || b_mat.shape.len() != 2 {
        return Err(Error::dim(
            "lora_forward",
            format!("A {}", a_mat.shape_str()),
            format!("B {}", b_mat.shape_str()),
        ));
    }
    if a_mat.cols() != x.len() {
        return Err(Error::dim(
            "lora_forward",
            format!("A {}", a_mat.shape_str()),
            format!("x [{}]", x.len()),
        ));
    }
    if b_mat.cols() != a_mat.rows() {
        return Err(Error::dim(
            "lora_forward",
            format!("B {}", b_mat.shape_str()),
            format!("A {} (rank mismatch)", a_mat.shape_str()),
        ));
    }
    if bias.len() != b_mat.rows() {
        return Err(Error::dim(
            "lora_forward",
            format!("B {}", b_mat.shape_str()),
            format!("b {}", bias.shape_str()),
        ));
    }
    let mut hidden = vec![0.0; a_mat.rows()];
    matvec(&a_mat.data, a_mat.rows(), a_mat.cols(), x, &mut hidden);
    let mut y = vec![0.0; b_mat.rows()];
    matvec(&b_mat.data, b_mat.rows(), b_mat.cols(), &hidden, &mut y);
    add_assign(&mut y, &bias.data);
    Ok(LoraOutput { y, hidden })
}

/// Gradient buffers for one low-rank affine map.
pub struct LoraGrads<'a> {
    pub db_mat: &'a mut [f64],
    pub da_mat: &'a mut [f64],
    pub dbias: &'a mut [f64],
}

/// Accumulates the gradients of `y = B (A x) + b`. `hidden` must be `A x`.
pub fn lora_backward(
    b_mat: &Tensor,
    a_mat: &Tensor,
    x: &[f64],
    hidden: &[f64],
    dy: &[f64],
    grads: LoraGrads<'_>,
    dx: Option<&mut [f64]>,
) {
    let rank = a_mat.rows();
    outer_acc(grads.db_mat, dy, hidden);
    add_assign(grads.dbias, dy);
    let mut dh = vec![0.0; rank];
    matvec_t_acc(&b_mat.data, b_mat.rows(), rank, dy, &mut dh);
    outer_acc(grads.da_mat, &dh, x);
    if let Some(dx) = dx {
        matvec_t_acc(&a_mat.data, rank, a_mat.cols(), &dh, dx);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative given the pre-activation `x` and the output `y`.
    ///
    /// ReLU takes the subgradient 1 at exactly zero. A low-rank unit starts with
    /// `B = 0` and a zero bias, so all its pre-activations are exactly 0 at
    /// initialization; with the other convention it would never receive a gradient.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }

    pub fn forward(self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.apply(v)).collect()
    }

    /// Gradient w.r.t. the pre-activation given upstream `dy`.
    pub fn backward(self, x: &[f64], y: &[f64], dy: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(y)
            .zip(dy)
            .map(|((&xi, &yi), &g)| g * self.derivative(xi, yi))
            .collect()
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Input(format!("unknown activation `{other}`"))),
        }
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn clip_prob(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

/// Binary cross-entropy of one prediction.
pub fn bce_loss(p: f64, y: f64) -> Result<f64> {
    if y != 0.0 && y != 1.0 {
        return Err(Error::Input(format!("label must be 0 or 1, got {y}")));
    }
    let p = clip_prob(p);
    Ok(-(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
}

/// `d bce / d p` evaluated at the clipped probability.
pub fn bce_grad(p: f64, y: f64) -> f64 {
    let p = clip_prob(p);
    (p - y) / (p * (1.0 - p))
}

/// `d bce(sigmoid(z), y) / d z` given `p = sigmoid(z)`.
///
/// Equals `p - y` whenever clipping is inactive.
#[inline]
pub fn bce_logit_grad(p: f64, y: f64) -> f64 {
    let pc = clip_prob(p);
    if pc == p {
        p - y
    } else {
        bce_grad(p, y) * p * (1.0 - p)
    }
}
