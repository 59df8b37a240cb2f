//! Two-stage optimization.
//!
//! Stage 1 trains the model and the selector jointly with annealed continuous
//! gates under `L + lambda * L_sp`. The reuse stage freezes the selector,
//! switches to hard gates and retrains the model under `L` alone.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ReuseMode, RunConfig};
use crate::data::{Dataset, Instance};
use crate::error::{Error, Result};
use crate::metrics::{cell_report, fmt_opt, EvalReport};
use crate::model::{prune_into, ForwardCache, GateRow, ModelDims, MsmtModel, NUM_FLOWS};
use crate::rng::stream_rng;
use crate::selector::{continuous_gate, temperature, unit_step, FlowSelector, SelectorCache};
use crate::tensor::{adam_step, bce_logit_grad, bce_loss, sigmoid, ParamGroup, Parameterized};

pub const MODEL_INIT_STREAM: u64 = 1;
pub const SELECTOR_INIT_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 0x5348_0000;
const REUSE_SHUFFLE_STREAM: u64 = 0x5253_0000;
const TRAIN_GATE_STREAM: u64 = 0x4754_0000;
pub const EVAL_GATE_STREAM: u64 = 0x4745_0000;

/// The backbone together with its flow selector.
#[derive(Debug, Clone)]
pub struct AutoIfs {
    pub model: MsmtModel,
    pub selector: FlowSelector,
}

impl AutoIfs {
    /// Model and selector are initialized from independent streams of `cfg.seed`,
    /// so a fresh model for reuse reproduces the stage-1 initialization.
    pub fn new(dims: ModelDims, cfg: &RunConfig) -> Result<Self> {
        let input_dim = dims.input_dim();
        let num_tasks = dims.num_tasks;
        let model = Self::fresh_model(dims, cfg)?;
        let selector = FlowSelector::new(
            input_dim,
            &cfg.selector_hidden,
            num_tasks,
            cfg.head_bias_init,
            &mut stream_rng(cfg.seed, SELECTOR_INIT_STREAM),
        )?;
        Ok(AutoIfs { model, selector })
    }

    pub fn fresh_model(dims: ModelDims, cfg: &RunConfig) -> Result<MsmtModel> {
        MsmtModel::new(dims, cfg.activation, &mut stream_rng(cfg.seed, MODEL_INIT_STREAM))
    }

    pub fn dims(&self) -> &ModelDims {
        self.model.dims()
    }
}

impl Parameterized for AutoIfs {
    fn param_groups(&self) -> Vec<&ParamGroup> {
        vec![self.model.params(), self.selector.params()]
    }

    fn param_groups_mut(&mut self) -> Vec<&mut ParamGroup> {
        vec![self.model.params_mut(), self.selector.params_mut()]
    }
}

/// How the `M x 4` gates of an instance are produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GatePolicy {
    /// `sigmoid(w * tau)` from the selector
    Continuous { tau: f64 },
    /// unit step of the selector weights
    Hard,
    /// every gate 0: nothing pruned
    Off,
    /// each gate independently 1 with probability `prob`
    Random { prob: f64 },
}

impl GatePolicy {
    pub fn uses_selector(self) -> bool {
        matches!(self, GatePolicy::Continuous { .. } | GatePolicy::Hard)
    }

    pub fn tau(self) -> Option<f64> {
        match self {
            GatePolicy::Continuous { tau } => Some(tau),
            _ => None,
        }
    }
}

/// Gates used while training stage-1 epoch `p` (0-based).
pub fn stage1_policy(cfg: &RunConfig, epoch: usize) -> Result<GatePolicy> {
    Ok(if cfg.no_selection {
        GatePolicy::Off
    } else if cfg.random_selection {
        GatePolicy::Random {
            prob: cfg.random_selection_prob,
        }
    } else {
        GatePolicy::Continuous {
            tau: temperature(epoch, cfg.epochs, cfg.gamma)?,
        }
    })
}

/// Gates used by the reuse stage and for final evaluation.
pub fn final_policy(cfg: &RunConfig) -> GatePolicy {
    if cfg.no_selection {
        GatePolicy::Off
    } else if cfg.random_selection {
        GatePolicy::Random {
            prob: cfg.random_selection_prob,
        }
    } else if cfg.no_discretize {
        GatePolicy::Continuous { tau: cfg.gamma }
    } else {
        GatePolicy::Hard
    }
}

/// `sum_i sum_m bce(p, y) / batch_size`.
pub fn multi_task_loss(predictions: &[Vec<f64>], labels: &[Vec<u8>], batch_size: usize) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} prediction rows for {} label rows",
            predictions.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (p, y) in predictions.iter().zip(labels) {
        if p.len() != y.len() {
            return Err(Error::Input(format!("{} predictions for {} labels", p.len(), y.len())));
        }
        for (&p, &y) in p.iter().zip(y) {
            total += bce_loss(p, f64::from(y))?;
        }
    }
    Ok(total / batch_size as f64)
}

/// `sum_i sum_m ||g_i^m||_1 / batch_size`.
pub fn sparsity_loss(gates: &[Vec<GateRow>], batch_size: usize) -> f64 {
    gates.iter().flatten().flatten().sum::<f64>() / batch_size as f64
}

pub fn total_loss(prediction_loss: f64, sparsity: f64, lambda: f64) -> f64 {
    prediction_loss + lambda * sparsity
}

/// Reusable per-instance buffers.
#[derive(Debug, Clone)]
pub struct Scratch {
    fcache: ForwardCache,
    scache: SelectorCache,
    gates: Vec<GateRow>,
    dgates: Vec<GateRow>,
    dweights: Vec<GateRow>,
    logits: Vec<f64>,
    probs: Vec<f64>,
    dlogit: Vec<f64>,
}

impl Scratch {
    pub fn new(net: &AutoIfs) -> Self {
        let m = net.dims().num_tasks;
        Scratch {
            fcache: ForwardCache::new(net.dims()),
            scache: net.selector.new_cache(),
            gates: vec![[0.0; NUM_FLOWS]; m],
            dgates: vec![[0.0; NUM_FLOWS]; m],
            dweights: vec![[0.0; NUM_FLOWS]; m],
            logits: vec![0.0; m],
            probs: vec![0.0; m],
            dlogit: vec![0.0; m],
        }
    }

    pub fn gates(&self) -> &[GateRow] {
        &self.gates
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn forward_cache(&self) -> &ForwardCache {
        &self.fcache
    }

    pub fn selector_cache(&self) -> &SelectorCache {
        &self.scache
    }
}

/// Forward pass for one instance: flows, gates, pruned logits, probabilities.
///
/// `selector_input` replaces the embedding fed to the selector; used to hold
/// the selector input fixed while the embedding is perturbed.
pub fn forward_instance<R: Rng + ?Sized>(
    net: &AutoIfs,
    inst: &Instance,
    policy: GatePolicy,
    rng: &mut R,
    scratch: &mut Scratch,
    selector_input: Option<&[f64]>,
) -> Result<()> {
    net.model.forward(inst, &mut scratch.fcache)?;
    if policy.uses_selector() {
        let e = selector_input.unwrap_or(scratch.fcache.embedding());
        net.selector.forward(e, &mut scratch.scache)?;
    }
    let weights = scratch.scache.weights();
    for (m, row) in scratch.gates.iter_mut().enumerate() {
        for (j, g) in row.iter_mut().enumerate() {
            *g = match policy {
                GatePolicy::Continuous { tau } => continuous_gate(weights[m][j], tau),
                GatePolicy::Hard => unit_step(weights[m][j]),
                GatePolicy::Off => 0.0,
                GatePolicy::Random { prob } => f64::from(u8::from(rng.random_bool(prob))),
            };
        }
    }
    prune_into(scratch.fcache.flows(), &scratch.gates, &mut scratch.logits);
    for (p, &z) in scratch.probs.iter_mut().zip(&scratch.logits) {
        *p = sigmoid(z);
    }
    Ok(())
}

/// What one batch contributes, before any parameter update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchOptions {
    pub policy: GatePolicy,
    /// Sparsity weight; only effective with continuous gates and a trained selector.
    pub lambda: f64,
    pub train_selector: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchStats {
    /// `multi_task_loss` of the batch
    pub loss: f64,
    /// `sparsity_loss` of the batch
    pub sparsity: f64,
    /// `loss + lambda * sparsity` as optimized
    pub objective: f64,
    /// gate sums per flow over instances and tasks
    pub gate_sums: [f64; NUM_FLOWS],
    pub instances: usize,
}

fn sparsity_active(opts: &BatchOptions) -> bool {
    opts.train_selector && matches!(opts.policy, GatePolicy::Continuous { .. })
}

/// Accumulates the gradients of the batch objective into both parameter groups.
pub fn accumulate_batch<R: Rng + ?Sized>(
    net: &mut AutoIfs,
    batch: &[&Instance],
    opts: &BatchOptions,
    rng: &mut R,
    scratch: &mut Scratch,
) -> Result<BatchStats> {
    let scale = 1.0 / batch.len().max(1) as f64;
    let lambda = if sparsity_active(opts) { opts.lambda } else { 0.0 };
    let mut stats = BatchStats {
        instances: batch.len(),
        ..Default::default()
    };
    for inst in batch {
        forward_instance(net, inst, opts.policy, rng, scratch, None)?;
        for m in 0..scratch.probs.len() {
            let (p, y) = (scratch.probs[m], f64::from(inst.labels[m]));
            stats.loss += bce_loss(p, y)?;
            scratch.dlogit[m] = bce_logit_grad(p, y) * scale;
            for j in 0..NUM_FLOWS {
                stats.gate_sums[j] += scratch.gates[m][j];
            }
        }
        stats.sparsity += scratch.gates.iter().flatten().sum::<f64>();

        if let (true, GatePolicy::Continuous { tau }) = (opts.train_selector, opts.policy) {
            scratch.dgates.iter_mut().for_each(|r| *r = [0.0; NUM_FLOWS]);
            net.model.backward(
                &mut scratch.fcache,
                &scratch.dlogit,
                &scratch.gates,
                Some(&mut scratch.dgates),
            );
            for m in 0..scratch.gates.len() {
                for j in 0..NUM_FLOWS {
                    let g = scratch.gates[m][j];
                    let dg = scratch.dgates[m][j] + lambda * scale;
                    scratch.dweights[m][j] = dg * tau * g * (1.0 - g);
                }
            }
            net.selector.backward(&mut scratch.scache, &scratch.dweights);
        } else {
            net.model
                .backward(&mut scratch.fcache, &scratch.dlogit, &scratch.gates, None);
        }
    }
    stats.loss *= scale;
    stats.sparsity *= scale;
    stats.objective = total_loss(stats.loss, stats.sparsity, lambda);
    Ok(stats)
}

/// The batch objective without touching gradients.
///
/// `selector_inputs[i]`, when given, replaces instance `i`'s selector input.
pub fn batch_objective(
    net: &AutoIfs,
    batch: &[&Instance],
    opts: &BatchOptions,
    selector_inputs: Option<&[Vec<f64>]>,
) -> Result<f64> {
    let mut scratch = Scratch::new(net);
    let mut rng = stream_rng(0, TRAIN_GATE_STREAM);
    let scale = 1.0 / batch.len().max(1) as f64;
    let lambda = if sparsity_active(opts) { opts.lambda } else { 0.0 };
    let (mut loss, mut sparsity) = (0.0, 0.0);
    for (i, inst) in batch.iter().enumerate() {
        let fixed = selector_inputs.map(|s| s[i].as_slice());
        forward_instance(net, inst, opts.policy, &mut rng, &mut scratch, fixed)?;
        for (m, &p) in scratch.probs.iter().enumerate() {
            loss += bce_loss(p, f64::from(inst.labels[m]))?;
        }
        sparsity += scratch.gates.iter().flatten().sum::<f64>();
    }
    Ok(total_loss(loss * scale, sparsity * scale, lambda))
}

/// Gradient accumulation followed by one Adam step on the model and, when
/// `opts.train_selector`, on the selector. Gradients are cleared afterwards.
pub fn train_batch<R: Rng + ?Sized>(
    net: &mut AutoIfs,
    batch: &[&Instance],
    opts: &BatchOptions,
    adam: &crate::tensor::AdamConfig,
    rng: &mut R,
    scratch: &mut Scratch,
) -> Result<BatchStats> {
    let stats = accumulate_batch(net, batch, opts, rng, scratch);
    let stats = match stats {
        Ok(s) if s.objective.is_finite() => s,
        Ok(s) => {
            net.model.params_mut().zero_grad();
            net.selector.params_mut().zero_grad();
            return Err(Error::Numeric(format!("non-finite loss {}", s.objective)));
        }
        Err(e) => {
            net.model.params_mut().zero_grad();
            net.selector.params_mut().zero_grad();
            return Err(e);
        }
    };
    let result = adam_step(net.model.params_mut(), adam).and_then(|()| {
        if opts.train_selector {
            adam_step(net.selector.params_mut(), adam)
        } else {
            Ok(())
        }
    });
    net.model.params_mut().zero_grad();
    net.selector.params_mut().zero_grad();
    result.map(|()| stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Stage1,
    Reuse,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Stage1 => "stage1",
            Stage::Reuse => "reuse",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub stage: Stage,
    /// 0-based epoch index; reuse after a rewind continues the stage-1 count
    pub epoch: usize,
    /// temperature of continuous gates, if any
    pub tau: Option<f64>,
    /// mean multi-task loss per training instance
    pub train_loss: f64,
    /// mean gate sum per training instance
    pub sparsity_loss: f64,
    pub validation: Option<EvalReport>,
    /// mean gate value per flow over training instances and tasks
    pub mean_gates: [f64; NUM_FLOWS],
}

/// Predictions and gates for every instance of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub predictions: Vec<Vec<f64>>,
    pub gates: Vec<Vec<GateRow>>,
}

/// Runs the network over `data`. Random gates draw from a fixed stream of `seed`.
pub fn evaluate(net: &AutoIfs, data: &Dataset, policy: GatePolicy, seed: u64) -> Result<Evaluation> {
    let mut scratch = Scratch::new(net);
    let mut rng = stream_rng(seed, EVAL_GATE_STREAM);
    let mut out = Evaluation {
        predictions: Vec::with_capacity(data.len()),
        gates: Vec::with_capacity(data.len()),
    };
    for inst in &data.instances {
        forward_instance(net, inst, policy, &mut rng, &mut scratch, None)?;
        out.predictions.push(scratch.probs.clone());
        out.gates.push(scratch.gates.clone());
    }
    Ok(out)
}

pub fn evaluate_report(net: &AutoIfs, data: &Dataset, policy: GatePolicy, seed: u64) -> Result<EvalReport> {
    cell_report(&evaluate(net, data, policy, seed)?.predictions, data)
}

struct EpochPlan<'a> {
    stage: Stage,
    epoch: usize,
    shuffle_stream: u64,
    opts: BatchOptions,
    adam: crate::tensor::AdamConfig,
    val: Option<&'a Dataset>,
}

fn run_epoch(net: &mut AutoIfs, train: &Dataset, cfg: &RunConfig, plan: &EpochPlan) -> Result<EpochLog> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut stream_rng(cfg.seed, plan.shuffle_stream + plan.epoch as u64));
    let mut gate_rng: ChaCha8Rng = stream_rng(cfg.seed, TRAIN_GATE_STREAM + plan.shuffle_stream + plan.epoch as u64);
    let mut scratch = Scratch::new(net);
    let mut batch: Vec<&Instance> = Vec::with_capacity(cfg.batch_size);
    let (mut loss, mut sparsity) = (0.0, 0.0);
    let mut gate_sums = [0.0; NUM_FLOWS];
    for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
        batch.clear();
        batch.extend(chunk.iter().map(|&i| &train.instances[i]));
        let stats = train_batch(net, &batch, &plan.opts, &plan.adam, &mut gate_rng, &mut scratch)
            .map_err(|e| match e {
                Error::Numeric(msg) => Error::Numeric(format!(
                    "{} epoch {} batch {b}: {msg}",
                    plan.stage.name(),
                    plan.epoch
                )),
                other => other,
            })?;
        loss += stats.loss * batch.len() as f64;
        sparsity += stats.sparsity * batch.len() as f64;
        for j in 0..NUM_FLOWS {
            gate_sums[j] += stats.gate_sums[j];
        }
    }
    let n = train.len().max(1) as f64;
    let per_gate = (train.len() * train.num_tasks).max(1) as f64;
    let validation = match plan.val {
        Some(v) if !v.is_empty() => Some(evaluate_report(net, v, plan.opts.policy, cfg.seed)?),
        _ => None,
    };
    Ok(EpochLog {
        stage: plan.stage,
        epoch: plan.epoch,
        tau: plan.opts.policy.tau(),
        train_loss: loss / n,
        sparsity_loss: sparsity / n,
        validation,
        mean_gates: gate_sums.map(|s| s / per_gate),
    })
}

fn check_train_set(train: &Dataset, net: &AutoIfs) -> Result<()> {
    if train.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    if train.num_tasks != net.dims().num_tasks || train.num_scenarios != net.dims().num_scenarios {
        return Err(Error::Input(format!(
            "dataset has K={} M={} but the model expects K={} M={}",
            train.num_scenarios,
            train.num_tasks,
            net.dims().num_scenarios,
            net.dims().num_tasks
        )));
    }
    Ok(())
}

/// Stage 1: `cfg.epochs` epochs of joint training. `on_epoch` sees the log and
/// the network after every completed epoch (checkpointing hooks in here).
pub fn train_stage<F>(
    net: &mut AutoIfs,
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &RunConfig,
    mut on_epoch: F,
) -> Result<Vec<EpochLog>>
where
    F: FnMut(&EpochLog, &AutoIfs) -> Result<()>,
{
    cfg.validate()?;
    check_train_set(train, net)?;
    let adam = cfg.adam(false);
    let mut logs = Vec::with_capacity(cfg.epochs);
    for p in 0..cfg.epochs {
        let policy = stage1_policy(cfg, p)?;
        let plan = EpochPlan {
            stage: Stage::Stage1,
            epoch: p,
            shuffle_stream: SHUFFLE_STREAM,
            opts: BatchOptions {
                policy,
                lambda: cfg.lambda,
                train_selector: cfg.uses_selector(),
            },
            adam,
            val,
        };
        let log = run_epoch(net, train, cfg, &plan)?;
        log::info!(
            "stage1 epoch {p}: tau={} loss={} sparsity={} val_auc={}",
            fmt_opt(log.tau),
            log.train_loss,
            log.sparsity_loss,
            fmt_opt(log.validation.as_ref().and_then(|v| v.macro_auc))
        );
        on_epoch(&log, net)?;
        logs.push(log);
    }
    Ok(logs)
}

/// Number of reuse epochs and the epoch index they start from.
pub fn reuse_schedule(cfg: &RunConfig) -> (usize, usize) {
    match cfg.reuse_mode {
        ReuseMode::Fresh => (0, cfg.rewind_epoch),
        ReuseMode::Rewind => (cfg.rewind_epoch, cfg.epochs - cfg.rewind_epoch),
    }
}

/// Reuse stage. `selector_source` supplies the frozen selector; `rewind` is the
/// stage-1 network after `rewind_epoch` epochs (required in rewind mode).
pub fn reuse_stage<F>(
    selector_source: &AutoIfs,
    rewind: Option<&AutoIfs>,
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &RunConfig,
    mut on_epoch: F,
) -> Result<(AutoIfs, Vec<EpochLog>)>
where
    F: FnMut(&EpochLog, &AutoIfs) -> Result<()>,
{
    cfg.validate()?;
    let model = match cfg.reuse_mode {
        ReuseMode::Fresh => AutoIfs::fresh_model(selector_source.dims().clone(), cfg)?,
        ReuseMode::Rewind => {
            let source = rewind.ok_or_else(|| {
                Error::Config(format!(
                    "rewind mode needs the stage-1 checkpoint after epoch {}",
                    cfg.rewind_epoch
                ))
            })?;
            let mut model = source.model.clone();
            model.params_mut().reset_optimizer();
            model
        }
    };
    log::info!(
        "reuse mode {:?}: {} epochs",
        cfg.reuse_mode,
        reuse_schedule(cfg).1
    );
    let mut net = AutoIfs {
        model,
        selector: selector_source.selector.clone(),
    };
    check_train_set(train, &net)?;
    let adam = cfg.adam(true);
    let policy = final_policy(cfg);
    let (start, count) = reuse_schedule(cfg);
    let mut logs = Vec::with_capacity(count);
    for epoch in start..start + count {
        let plan = EpochPlan {
            stage: Stage::Reuse,
            epoch,
            shuffle_stream: REUSE_SHUFFLE_STREAM,
            opts: BatchOptions {
                policy,
                lambda: 0.0,
                train_selector: false,
            },
            adam,
            val,
        };
        let log = run_epoch(&mut net, train, cfg, &plan)?;
        log::info!(
            "reuse epoch {epoch}: loss={} val_auc={}",
            log.train_loss,
            fmt_opt(log.validation.as_ref().and_then(|v| v.macro_auc))
        );
        on_epoch(&log, &net)?;
        logs.push(log);
    }
    Ok((net, logs))
}

/// Everything produced by both stages.
#[derive(Debug, Clone)]
pub struct TwoStageOutput {
    pub stage1_logs: Vec<EpochLog>,
    pub reuse_logs: Vec<EpochLog>,
    /// stage-1 network after `selector_epoch` epochs
    pub stage1: AutoIfs,
    /// network to evaluate with [`final_policy`]
    pub net: AutoIfs,
}

/// Stage 1 followed by reuse (unless `no_reuse`), keeping only the snapshots reuse needs.
pub fn run_two_stage(
    dims: ModelDims,
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &RunConfig,
) -> Result<TwoStageOutput> {
    let mut net = AutoIfs::new(dims, cfg)?;
    let selector_epoch = cfg.selector_epoch();
    let mut selector_snapshot = None;
    let mut rewind_snapshot = None;
    let stage1_logs = train_stage(&mut net, train, val, cfg, |log, n| {
        let done = log.epoch + 1;
        if done == selector_epoch {
            selector_snapshot = Some(n.clone());
        }
        if done == cfg.rewind_epoch && cfg.reuse_mode == ReuseMode::Rewind {
            rewind_snapshot = Some(n.clone());
        }
        Ok(())
    })?;
    let stage1 = selector_snapshot.expect("selector epoch within stage 1");
    if cfg.no_reuse {
        return Ok(TwoStageOutput {
            stage1_logs,
            reuse_logs: Vec::new(),
            net: stage1.clone(),
            stage1,
        });
    }
    let (final_net, reuse_logs) =
        reuse_stage(&stage1, rewind_snapshot.as_ref(), train, val, cfg, |_, _| Ok(()))?;
    Ok(TwoStageOutput {
        stage1_logs,
        reuse_logs,
        stage1,
        net: final_net,
    })
}

/// One CSV row per epoch.
pub fn epochs_csv(logs: &[EpochLog], num_scenarios: usize, num_tasks: usize) -> String {
    let mut out = String::from(
        "stage,epoch,tau,train_loss,sparsity_loss,val_macro_auc,val_pooled_auc,val_macro_logloss,\
         gate_sh_sh,gate_sh_m,gate_k_sh,gate_k_m",
    );
    for k in 0..num_scenarios {
        for m in 0..num_tasks {
            let _ = write!(out, ",val_auc_k{k}_m{m},val_logloss_k{k}_m{m}");
        }
    }
    out.push('\n');
    for log in logs {
        let v = log.validation.as_ref();
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{}",
            log.stage.name(),
            log.epoch,
            fmt_opt(log.tau),
            log.train_loss,
            log.sparsity_loss,
            fmt_opt(v.and_then(|v| v.macro_auc)),
            fmt_opt(v.and_then(|v| v.pooled_auc)),
            fmt_opt(v.and_then(|v| v.macro_logloss)),
        );
        for g in log.mean_gates {
            let _ = write!(out, ",{g}");
        }
        for k in 0..num_scenarios {
            for m in 0..num_tasks {
                let cell = v.and_then(|v| v.cell(k, m));
                let _ = write!(
                    out,
                    ",{},{}",
                    fmt_opt(cell.and_then(|c| c.auc)),
                    fmt_opt(cell.and_then(|c| c.logloss))
                );
            }
        }
        out.push('\n');
    }
    out
}
