use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// Index of a parameter inside its [`ParamGroup`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// A named tensor with its gradient buffer and Adam moments.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Vec<f64>,
    /// Whether the L2 term applies (weights yes; biases and gate heads no).
    pub decay: bool,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Param {
    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }
}

/// Owns a set of parameters plus optimizer state.
#[derive(Debug, Clone, Default)]
pub struct ParamGroup {
    params: Vec<Param>,
    step: u64,
}

impl ParamGroup {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor, decay: bool) -> ParamId {
        let n = value.len();
        self.params.push(Param {
            name: name.into(),
            value,
            grad: vec![0.0; n],
            decay,
            m: vec![0.0; n],
            v: vec![0.0; n],
        });
        ParamId(self.params.len() - 1)
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    #[inline]
    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Adam step counter `t`.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Zeroes gradients; moments are left untouched.
    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Drops all Adam state (moments and step counter).
    pub fn reset_optimizer(&mut self) {
        self.step = 0;
        for p in &mut self.params {
            p.m.iter_mut().for_each(|x| *x = 0.0);
            p.v.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Copies parameter values from `other`, which must have identical names and shapes.
    pub fn copy_values_from(&mut self, other: &ParamGroup) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::dim(
                "ParamGroup::copy_values_from",
                format!("{} tensors", self.params.len()),
                format!("{} tensors", other.params.len()),
            ));
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if dst.name != src.name || dst.value.shape() != src.value.shape() {
                return Err(Error::dim(
                    "ParamGroup::copy_values_from",
                    format!("{} {:?}", dst.name, dst.value.shape()),
                    format!("{} {:?}", src.name, src.value.shape()),
                ));
            }
            dst.value = src.value.clone();
        }
        Ok(())
    }

    /// Bitwise equality of parameter names, shapes, and values.
    pub fn values_equal(&self, other: &ParamGroup) -> bool {
        self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| {
                a.name == b.name
                    && a.value.shape() == b.value.shape()
                    && a.value
                        .data()
                        .iter()
                        .zip(b.value.data())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub l2_coefficient: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            l2_coefficient: 0.0,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| b > 0.0 && b < 1.0;
        if !in_unit(self.beta1) || !in_unit(self.beta2) {
            return Err(Error::Config(format!(
                "adam betas must lie in (0, 1), got {} and {}",
                self.beta1, self.beta2
            )));
        }
        // lr = 0 is allowed so that frozen runs still advance the moments.
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("adam epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.l2_coefficient >= 0.0) {
            return Err(Error::Config(format!(
                "l2 coefficient must be >= 0, got {}",
                self.l2_coefficient
            )));
        }
        Ok(())
    }
}

/// One Adam update with bias correction and (coupled) L2 regularization.
///
/// Gradient buffers are read but not modified. A non-finite gradient aborts the
/// step before any state changes.
pub fn adam_step(group: &mut ParamGroup, cfg: &AdamConfig) -> Result<()> {
    if let Some(p) = group
        .params
        .iter()
        .find(|p| p.grad.iter().any(|g| !g.is_finite()))
    {
        return Err(Error::Numeric(format!("non-finite gradient in `{}`", p.name)));
    }

    group.step += 1;
    let t = group.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let l2 = cfg.l2_coefficient;

    for p in &mut group.params {
        let decay = p.decay && l2 > 0.0;
        let values = p.value.data_mut();
        for i in 0..values.len() {
            let mut g = p.grad[i];
            if decay {
                g += l2 * values[i];
            }
            let m = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
            let v = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
            p.m[i] = m;
            p.v[i] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            values[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
        if !p.value.is_finite() {
            return Err(Error::Numeric(format!(
                "parameter `{}` became non-finite after step {}",
                p.name, group.step
            )));
        }
    }
    Ok(())
}
