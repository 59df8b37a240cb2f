//! Task-aware flow selection: an MLP over the (detached) embedding, one head
//! per task emitting four flow weights, and the gates derived from them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GateRow, NUM_FLOWS};
use crate::tensor::{add_assign, matvec, matvec_t_acc, outer_acc, sigmoid, Activation, ParamGroup, ParamId, Tensor};

/// Annealing temperature `tau = gamma^(p / P)`.
pub fn temperature(epoch: usize, total_epochs: usize, gamma: f64) -> Result<f64> {
    if !(gamma >= 1.0) || !gamma.is_finite() {
        return Err(Error::Config(format!("gamma must be >= 1, got {gamma}")));
    }
    if total_epochs == 0 || epoch > total_epochs {
        return Err(Error::Config(format!(
            "epoch {epoch} outside 0..={total_epochs} (total epochs must be >= 1)"
        )));
    }
    if epoch == 0 {
        return Ok(1.0);
    }
    if epoch == total_epochs {
        return Ok(gamma);
    }
    Ok(gamma.powf(epoch as f64 / total_epochs as f64))
}

#[inline]
pub fn continuous_gate(w: f64, tau: f64) -> f64 {
    sigmoid(w * tau)
}

/// Unit step with the boundary `w <= 0 -> 0`.
#[inline]
pub fn unit_step(w: f64) -> f64 {
    if w > 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn continuous_gates(weights: &[GateRow], tau: f64) -> Vec<GateRow> {
    weights.iter().map(|row| row.map(|w| continuous_gate(w, tau))).collect()
}

pub fn hard_gates(weights: &[GateRow]) -> Vec<GateRow> {
    weights.iter().map(|row| row.map(unit_step)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateMode {
    Continuous,
    Hard,
}

/// Gates for one instance together with the weights they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct GateMatrix {
    pub mode: GateMode,
    pub weights: Vec<GateRow>,
    pub values: Vec<GateRow>,
}

impl GateMatrix {
    pub fn continuous(weights: Vec<GateRow>, tau: f64) -> Self {
        let values = continuous_gates(&weights, tau);
        GateMatrix {
            mode: GateMode::Continuous,
            weights,
            values,
        }
    }

    pub fn hard(weights: Vec<GateRow>) -> Self {
        let values = hard_gates(&weights);
        GateMatrix {
            mode: GateMode::Hard,
            weights,
            values,
        }
    }
}

#[derive(Debug, Clone)]
struct Layer {
    weight: ParamId,
    bias: ParamId,
    inputs: usize,
    outputs: usize,
}

/// Intermediate activations of one selector forward pass.
#[derive(Debug, Clone, Default)]
pub struct SelectorCache {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    /// post-ReLU activations per hidden layer
    hidden: Vec<Vec<f64>>,
    weights: Vec<GateRow>,
    grad_hidden: Vec<Vec<f64>>,
}

impl SelectorCache {
    pub fn weights(&self) -> &[GateRow] {
        &self.weights
    }

    /// Pre-activations of every hidden unit, for kink checks.
    pub fn hidden_preactivations(&self) -> impl Iterator<Item = f64> + '_ {
        self.pre.iter().flatten().copied()
    }
}

#[derive(Debug, Clone)]
pub struct FlowSelector {
    input_dim: usize,
    widths: Vec<usize>,
    num_tasks: usize,
    group: ParamGroup,
    layers: Vec<Layer>,
    heads: Vec<Layer>,
}

impl FlowSelector {
    /// Hidden layers and heads use Xavier-uniform weights; hidden biases start
    /// at zero and head biases at `head_bias_init`. Heads are exempt from L2.
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        widths: &[usize],
        num_tasks: usize,
        head_bias_init: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.is_empty() || widths.contains(&0) {
            return Err(Error::Config(format!(
                "selector needs at least one hidden layer of positive width, got {widths:?}"
            )));
        }
        if input_dim == 0 || num_tasks == 0 {
            return Err(Error::Config("selector input width and task count must be positive".into()));
        }
        let mut group = ParamGroup::new();
        let mut layers = Vec::new();
        let mut inputs = input_dim;
        for (l, &outputs) in widths.iter().enumerate() {
            let weight = group.add(
                format!("selector.layer.{l}.weight"),
                Tensor::xavier_uniform(outputs, inputs, rng),
                true,
            );
            let bias = group.add(format!("selector.layer.{l}.bias"), Tensor::zeros(&[outputs]), false);
            layers.push(Layer {
                weight,
                bias,
                inputs,
                outputs,
            });
            inputs = outputs;
        }
        let mut heads = Vec::new();
        for m in 0..num_tasks {
            let weight = group.add(
                format!("selector.head.{m}.weight"),
                Tensor::xavier_uniform(NUM_FLOWS, inputs, rng),
                false,
            );
            let bias = group.add(
                format!("selector.head.{m}.bias"),
                Tensor::vector(vec![head_bias_init; NUM_FLOWS]),
                false,
            );
            heads.push(Layer {
                weight,
                bias,
                inputs,
                outputs: NUM_FLOWS,
            });
        }
        Ok(FlowSelector {
            input_dim,
            widths: widths.to_vec(),
            num_tasks,
            group,
            layers,
            heads,
        })
    }

    /// `sum_l (in_l * out_l + out_l) + M * (4 * last + 4)`.
    pub fn param_count(input_dim: usize, widths: &[usize], num_tasks: usize) -> usize {
        let mut inputs = input_dim;
        let mut total = 0;
        for &w in widths {
            total += inputs * w + w;
            inputs = w;
        }
        total + num_tasks * (NUM_FLOWS * inputs + NUM_FLOWS)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn num_tasks(&self) -> usize {
        self.num_tasks
    }

    pub fn params(&self) -> &ParamGroup {
        &self.group
    }

    pub fn params_mut(&mut self) -> &mut ParamGroup {
        &mut self.group
    }

    /// Head parameter ids of task `m`: `(weight, bias)`.
    pub fn head(&self, m: usize) -> (ParamId, ParamId) {
        (self.heads[m].weight, self.heads[m].bias)
    }

    pub fn new_cache(&self) -> SelectorCache {
        SelectorCache {
            input: vec![0.0; self.input_dim],
            pre: self.widths.iter().map(|&w| vec![0.0; w]).collect(),
            hidden: self.widths.iter().map(|&w| vec![0.0; w]).collect(),
            weights: vec![[0.0; NUM_FLOWS]; self.num_tasks],
            grad_hidden: self.widths.iter().map(|&w| vec![0.0; w]).collect(),
        }
    }

    /// Flow weights `w[m][j]` for the embedding `e`.
    ///
    /// `e` is copied in; nothing computed here ever flows back into it.
    pub fn forward(&self, e: &[f64], cache: &mut SelectorCache) -> Result<()> {
        if e.len() != self.input_dim {
            return Err(Error::dim(
                "selector_forward",
                format!("e [{}]", e.len()),
                format!("input width {}", self.input_dim),
            ));
        }
        cache.input.copy_from_slice(e);
        for (l, layer) in self.layers.iter().enumerate() {
            let (before, rest) = cache.hidden.split_at_mut(l);
            let x = if l == 0 { &cache.input } else { &before[l - 1] };
            let out = &mut rest[0];
            matvec(self.group.value(layer.weight).data(), layer.outputs, layer.inputs, x, out);
            add_assign(out, self.group.value(layer.bias).data());
            cache.pre[l].copy_from_slice(out);
            out.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        let last = cache.hidden.last().expect("at least one layer");
        for (head, w) in self.heads.iter().zip(cache.weights.iter_mut()) {
            matvec(self.group.value(head.weight).data(), NUM_FLOWS, head.inputs, last, w);
            add_assign(w, self.group.value(head.bias).data());
        }
        Ok(())
    }

    pub fn weights(&self, e: &[f64]) -> Result<Vec<GateRow>> {
        let mut cache = self.new_cache();
        self.forward(e, &mut cache)?;
        Ok(cache.weights)
    }

    /// Accumulates parameter gradients given `d loss / d w[m][j]`.
    pub fn backward(&mut self, cache: &mut SelectorCache, dw: &[GateRow]) {
        let last = self.layers.len() - 1;
        cache.grad_hidden.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
        for (head, d) in self.heads.iter().zip(dw) {
            if d.iter().all(|&v| v == 0.0) {
                continue;
            }
            let p = self.group.get_mut(head.weight);
            outer_acc(&mut p.grad, d, &cache.hidden[last]);
            matvec_t_acc(p.value.data(), NUM_FLOWS, head.inputs, d, &mut cache.grad_hidden[last]);
            add_assign(&mut self.group.get_mut(head.bias).grad, d);
        }
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (lower, upper) = cache.grad_hidden.split_at_mut(l);
            let dy = &mut upper[0];
            for (g, &x) in dy.iter_mut().zip(&cache.pre[l]) {
                *g *= Activation::Relu.derivative(x, x.max(0.0));
            }
            let x = if l == 0 { &cache.input } else { &cache.hidden[l - 1] };
            let p = self.group.get_mut(layer.weight);
            outer_acc(&mut p.grad, dy, x);
            if l > 0 {
                matvec_t_acc(p.value.data(), layer.outputs, layer.inputs, dy, &mut lower[l - 1]);
            }
            add_assign(&mut self.group.get_mut(layer.bias).grad, dy);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::tensor::{grad_check, Parameterized};

    #[test]
    fn temperature_examples() {
        assert_eq!(temperature(0, 10, 100.0).unwrap(), 1.0);
        assert!((temperature(5, 10, 100.0).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(temperature(7, 7, 5000.0).unwrap(), 5000.0);
        assert!(temperature(1, 10, 0.5).is_err());
        assert!(temperature(11, 10, 100.0).is_err());
    }

    #[test]
    fn temperature_is_monotone() {
        for &gamma in &[1.0, 50.0, 10000.0] {
            let taus: Vec<f64> = (0..=20).map(|p| temperature(p, 20, gamma).unwrap()).collect();
            assert!(taus.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn hard_gate_boundary() {
        assert_eq!(hard_gates(&[[-0.3, 0.0, 0.7, 2.1]]), vec![[0.0, 0.0, 1.0, 1.0]]);
        assert_eq!(hard_gates(&[[-1.0; 4]]), vec![[0.0; 4]]);
        assert_eq!(continuous_gate(0.0, 1e4), 0.5);
    }

    #[test]
    fn sharp_gate_value() {
        let g = continuous_gate(1e-3, 1e4);
        assert!((g - 0.999_954_602_131_297_6).abs() < 1e-15);
    }

    #[test]
    fn gates_move_away_from_half_as_tau_grows() {
        for &w in &[-0.7, -0.01, 0.02, 1.3] {
            let mut prev = (continuous_gate(w, 1.0) - 0.5).abs();
            for tau in [2.0, 4.0, 8.0, 16.0] {
                let now = (continuous_gate(w, tau) - 0.5).abs();
                assert!(now >= prev);
                prev = now;
            }
        }
    }

    fn selector(seed: u64) -> FlowSelector {
        FlowSelector::new(6, &[5, 3], 2, -0.5, &mut stream_rng(seed, 0)).unwrap()
    }

    #[test]
    fn zero_selector_gives_half_gates() {
        let mut s = selector(1);
        for p in s.params_mut().params_mut() {
            p.value.fill(0.0);
        }
        let w = s.weights(&[0.3; 6]).unwrap();
        for tau in [1.0, 100.0] {
            assert!(continuous_gates(&w, tau).iter().flatten().all(|&g| g == 0.5));
        }
    }

    #[test]
    fn head_bias_init_applies() {
        let s = selector(2);
        let (_, b) = s.head(1);
        assert_eq!(s.params().value(b).data(), &[-0.5; 4]);
        assert!(!s.params().get(b).decay);
    }

    #[test]
    fn width_mismatch() {
        assert!(selector(0).weights(&[0.0; 5]).is_err());
    }

    #[test]
    fn param_count_matches_allocation() {
        let s = selector(3);
        assert_eq!(FlowSelector::param_count(6, &[5, 3], 2), s.params().num_scalars());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut s = selector(4);
        let e = [0.4, -0.2, 0.9, 0.1, -0.6, 0.3];
        let coef: Vec<GateRow> = vec![[0.3, -1.0, 0.5, 0.2], [0.7, 0.1, -0.4, 1.1]];
        let loss = |s: &FlowSelector| {
            let w = s.weights(&e).unwrap();
            w.iter()
                .zip(&coef)
                .map(|(r, c)| r.iter().zip(c).map(|(a, b)| a * b).sum::<f64>())
                .sum::<f64>()
        };
        let mut cache = s.new_cache();
        s.forward(&e, &mut cache).unwrap();
        assert!(cache.hidden_preactivations().all(|v| v.abs() > 1e-4));
        s.backward(&mut cache, &coef);

        struct Wrap(FlowSelector);
        impl Parameterized for Wrap {
            fn param_groups(&self) -> Vec<&ParamGroup> {
                vec![self.0.params()]
            }
            fn param_groups_mut(&mut self) -> Vec<&mut ParamGroup> {
                vec![self.0.params_mut()]
            }
        }
        let mut w = Wrap(s);
        let report = grad_check(&mut w, 1e-6, |w| loss(&w.0));
        assert!(report.max_relative_error < 1e-6, "{report:?}");
    }
}
