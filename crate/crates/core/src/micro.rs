//! A tiny end-to-end network for gradient checking.
//!
//! Two fields with five values each, `d = 2`, `d_h = 4`, `K = 2`, `M = 2`,
//! `r = 1`, selector widths `[4, 3]`. Every parameter (including the `B`
//! factors) is drawn at random, and the seed is advanced until no ReLU
//! pre-activation lies within `KINK_MARGIN` of zero.

use rand::Rng;

use crate::config::RunConfig;
use crate::data::Instance;
use crate::error::{Error, Result};
use crate::model::ModelDims;
use crate::rng::stream_rng;
use crate::tensor::{grad_check, GradCheckReport, Parameterized};
use crate::train::{accumulate_batch, batch_objective, forward_instance, AutoIfs, BatchOptions, GatePolicy, Scratch};

pub const KINK_MARGIN: f64 = 1e-3;
pub const MICRO_TAU: f64 = 2.5;
pub const MICRO_LAMBDA: f64 = 0.1;
const BATCH: usize = 8;

#[derive(Debug, Clone)]
pub struct MicroModel {
    pub net: AutoIfs,
    pub batch: Vec<Instance>,
    pub opts: BatchOptions,
    /// seed actually used after skipping draws with near-kink points
    pub seed: u64,
}

pub fn micro_dims() -> ModelDims {
    ModelDims {
        vocab_sizes: vec![5, 5],
        embed_dim: 2,
        hidden_dim: 4,
        rank: 1,
        num_scenarios: 2,
        num_tasks: 2,
    }
}

fn micro_config(seed: u64) -> RunConfig {
    RunConfig {
        seed,
        embedding_dim: 2,
        hidden_dim: 4,
        rank: 1,
        selector_hidden: vec![4, 3],
        allow_off_grid: true,
        ..Default::default()
    }
}

fn draw(seed: u64) -> Result<MicroModel> {
    let cfg = micro_config(seed);
    let mut net = AutoIfs::new(micro_dims(), &cfg)?;
    let mut rng = stream_rng(seed, 0x4d49_4352);
    for group in net.param_groups_mut() {
        for p in group.params_mut() {
            p.value
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
    }
    let batch = (0..BATCH)
        .map(|i| Instance {
            field_ids: vec![rng.random_range(0..5), rng.random_range(0..5)],
            scenario: i % 2,
            labels: vec![u8::from(rng.random_bool(0.5)), u8::from(rng.random_bool(0.5))],
        })
        .collect();
    Ok(MicroModel {
        net,
        batch,
        opts: BatchOptions {
            policy: GatePolicy::Continuous { tau: MICRO_TAU },
            lambda: MICRO_LAMBDA,
            train_selector: true,
        },
        seed,
    })
}

impl MicroModel {
    /// First draw at or after `seed` whose ReLU inputs all clear the kink margin.
    pub fn new(seed: u64) -> Result<Self> {
        for s in seed..seed + 1000 {
            let micro = draw(s)?;
            if micro.min_abs_preactivation()? >= KINK_MARGIN {
                return Ok(micro);
            }
        }
        Err(Error::Numeric(format!(
            "no kink-free micro-model within 1000 seeds of {seed}"
        )))
    }

    /// Smallest `|pre-activation|` over every ReLU the batch passes through.
    pub fn min_abs_preactivation(&self) -> Result<f64> {
        let mut scratch = Scratch::new(&self.net);
        let mut rng = stream_rng(0, 0);
        let mut min = f64::INFINITY;
        for inst in &self.batch {
            forward_instance(&self.net, inst, self.opts.policy, &mut rng, &mut scratch, None)?;
            let model = scratch.forward_cache().scenario_preactivations();
            let selector = scratch.selector_cache().hidden_preactivations();
            for v in model.chain(selector) {
                min = min.min(v.abs());
            }
        }
        Ok(min)
    }

    /// Embeddings of the batch at the current parameters.
    pub fn embeddings(&self) -> Result<Vec<Vec<f64>>> {
        self.batch.iter().map(|i| self.net.model.embed(&i.field_ids)).collect()
    }

    /// Fills both gradient groups with the analytic gradient of the stage-1 objective.
    pub fn analytic_gradients(&mut self, opts: &BatchOptions) -> Result<()> {
        for g in self.net.param_groups_mut() {
            g.zero_grad();
        }
        let mut scratch = Scratch::new(&self.net);
        let batch: Vec<Instance> = self.batch.clone();
        let refs: Vec<&Instance> = batch.iter().collect();
        accumulate_batch(&mut self.net, &refs, opts, &mut stream_rng(0, 0), &mut scratch)?;
        Ok(())
    }

    /// Central-difference check of every parameter.
    ///
    /// The selector sees the embedding through a stop-gradient, so while
    /// perturbing the embedding table its input is held at the unperturbed value.
    pub fn grad_check(&mut self, eps: f64) -> Result<GradCheckReport> {
        let opts = self.opts;
        self.analytic_gradients(&opts)?;
        let frozen = self.embeddings()?;
        let batch = self.batch.clone();
        let refs: Vec<&Instance> = batch.iter().collect();
        let mut failure = None;
        let report = grad_check(&mut self.net, eps, |net| {
            batch_objective(net, &refs, &opts, Some(&frozen)).unwrap_or_else(|e| {
                failure.get_or_insert(e);
                f64::NAN
            })
        });
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(report)
    }
}
