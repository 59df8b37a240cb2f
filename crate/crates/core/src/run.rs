//! File-system level commands. Each run lives in one directory holding the
//! echoed config, vocabulary, checkpoints, epoch logs and reports.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::checkpoint::{self, Checkpoint};
use crate::config::{ReuseMode, RunConfig};
use crate::data::{
    encode_table, gen_synthetic, ingest, load_movielens_dir, split, AgeBuckets, Dataset, RawTable,
    Rejection, Schema, SplitSpec, SynthSpec, Vocab,
};
use crate::error::{Error, Result};
use crate::metrics::{cell_report, mask_report, EvalReport, MaskReport};
use crate::micro::MicroModel;
use crate::model::{param_count, ModelDims, ParamCounts};
use crate::selector::FlowSelector;
use crate::tensor::GradCheckReport;
use crate::train::{
    epochs_csv, evaluate, final_policy, reuse_schedule, reuse_stage, train_stage, AutoIfs, EpochLog, GatePolicy,
};

pub const CONFIG_FILE: &str = "config.json";
pub const VOCAB_FILE: &str = "vocab.json";
pub const EPOCHS_FILE: &str = "epochs.csv";
pub const REUSE_EPOCHS_FILE: &str = "epochs_reuse.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const CELL_REPORT_FILE: &str = "cell_report.csv";
pub const MASK_REPORT_FILE: &str = "mask_report.csv";
pub const TRAIN_LOG: &str = "train.log";

pub fn stage1_checkpoint_name(epoch: usize) -> String {
    format!("stage1_epoch_{epoch:03}.ckpt")
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Appends timing lines; the only place wall-clock data is written.
struct TimingLog {
    path: PathBuf,
}

impl TimingLog {
    fn line(&self, text: &str) -> Result<()> {
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        writeln!(f, "{text}").map_err(|e| Error::io(&self.path, e))
    }
}

/// Which instances an evaluation runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Val,
    Test,
    All,
}

impl std::str::FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            "all" => Ok(SplitName::All),
            other => Err(Error::Config(format!(
                "unknown split `{other}` (expected train, val, test or all)"
            ))),
        }
    }
}

/// Gate choice for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateChoice {
    /// whatever the run's configuration evaluates with
    Auto,
    Hard,
    /// continuous gates at `tau = gamma`
    Soft,
    Off,
}

impl std::str::FromStr for GateChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(GateChoice::Auto),
            "hard" => Ok(GateChoice::Hard),
            "soft" => Ok(GateChoice::Soft),
            "off" => Ok(GateChoice::Off),
            other => Err(Error::Config(format!(
                "unknown gate mode `{other}` (expected auto, hard, soft or off)"
            ))),
        }
    }
}

impl GateChoice {
    pub fn policy(self, cfg: &RunConfig) -> GatePolicy {
        match self {
            GateChoice::Auto => final_policy(cfg),
            GateChoice::Hard => GatePolicy::Hard,
            GateChoice::Soft => GatePolicy::Continuous { tau: cfg.gamma },
            GateChoice::Off => GatePolicy::Off,
        }
    }
}

/// A dataset split three ways.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl Splits {
    pub fn new(data: &Dataset, cfg: &RunConfig) -> Result<Self> {
        let spec = SplitSpec::new(cfg.split_ratios, cfg.split_seed);
        let idx = split(&data.instances, data.num_scenarios, &spec)?;
        Ok(Splits {
            train: data.subset(&idx.train),
            val: data.subset(&idx.val),
            test: data.subset(&idx.test),
        })
    }

    pub fn get(&self, name: SplitName, all: &Dataset) -> Dataset {
        match name {
            SplitName::Train => self.train.clone(),
            SplitName::Val => self.val.clone(),
            SplitName::Test => self.test.clone(),
            SplitName::All => all.clone(),
        }
    }
}

pub fn model_dims(data: &Dataset, cfg: &RunConfig) -> ModelDims {
    ModelDims {
        vocab_sizes: data.vocab_sizes.clone(),
        embed_dim: cfg.embedding_dim,
        hidden_dim: cfg.hidden_dim,
        rank: cfg.rank,
        num_scenarios: data.num_scenarios,
        num_tasks: data.num_tasks,
    }
}

/// Exact parameter counts of the configured network on `dims`.
pub fn network_param_count(dims: &ModelDims, cfg: &RunConfig) -> ParamCounts {
    param_count(
        dims.num_fields(),
        dims.embed_dim,
        dims.hidden_dim,
        dims.rank,
        dims.num_scenarios,
        dims.num_tasks,
        dims.total_vocab(),
        FlowSelector::param_count(dims.input_dim(), &cfg.selector_hidden, dims.num_tasks),
    )
}

fn rejections_csv(rejections: &[Rejection]) -> String {
    let mut out = String::from("line,reason\n");
    for r in rejections {
        let _ = writeln!(out, "{},\"{}\"", r.line, r.reason.replace('"', "'"));
    }
    out
}

fn report_rejections(rejections: &[Rejection], out_dir: Option<&Path>) -> Result<()> {
    if rejections.is_empty() {
        return Ok(());
    }
    log::warn!(
        "{} rows rejected (first: line {}: {})",
        rejections.len(),
        rejections[0].line,
        rejections[0].reason
    );
    if let Some(dir) = out_dir {
        write_file(&dir.join("rejections.csv"), rejections_csv(rejections))?;
    }
    Ok(())
}

/// Summary of a stage-1 run.
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub logs: Vec<EpochLog>,
    pub counts: ParamCounts,
    pub instances: usize,
    pub rejected: usize,
}

/// Stage 1 on `data`: writes the config echo, vocabulary, one checkpoint per
/// epoch, `epochs.csv` and `train.log` into `out`.
pub fn train(cfg: &RunConfig, data: &Path, out: &Path) -> Result<TrainSummary> {
    cfg.validate()?;
    create_dir(out)?;
    let mut cfg = cfg.clone();
    cfg.data = Some(data.display().to_string());
    cfg.save(&out.join(CONFIG_FILE))?;

    let table = RawTable::read_csv(data)?;
    let (vocab, encoded) = ingest(&table, cfg.min_frequency)?;
    report_rejections(&encoded.rejections, Some(out))?;
    vocab.save(&out.join(VOCAB_FILE))?;
    let dataset = encoded.dataset;
    let splits = Splits::new(&dataset, &cfg)?;
    let dims = model_dims(&dataset, &cfg);
    let counts = network_param_count(&dims, &cfg);
    log::info!(
        "{} instances ({} train / {} val / {} test), K={} M={} F={}, {} parameters",
        dataset.len(),
        splits.train.len(),
        splits.val.len(),
        splits.test.len(),
        dataset.num_scenarios,
        dataset.num_tasks,
        dims.num_fields(),
        counts.total()
    );

    let timing = TimingLog {
        path: out.join(TRAIN_LOG),
    };
    timing.line(&format!("stage1 start: {} training instances", splits.train.len()))?;
    let mut net = AutoIfs::new(dims, &cfg)?;
    let mut clock = Instant::now();
    let val = (!splits.val.is_empty()).then_some(&splits.val);
    let logs = train_stage(&mut net, &splits.train, val, &cfg, |log, n| {
        let secs = clock.elapsed().as_secs_f64();
        timing.line(&format!("stage1 epoch {} took {secs:.3}s", log.epoch))?;
        let path = out.join(stage1_checkpoint_name(log.epoch + 1));
        checkpoint::save(&path, n, &cfg, "stage1", log.epoch + 1, Some(&vocab))?;
        clock = Instant::now();
        Ok(())
    })?;
    write_file(
        &out.join(EPOCHS_FILE),
        epochs_csv(&logs, dataset.num_scenarios, dataset.num_tasks),
    )?;
    Ok(TrainSummary {
        logs,
        counts,
        instances: dataset.len(),
        rejected: encoded.rejections.len(),
    })
}

/// Encodes `data` with the checkpoint's vocabulary and scenario count.
pub fn load_for_checkpoint(ck: &Checkpoint, data: &Path) -> Result<Dataset> {
    let vocab = ck
        .vocab()?
        .ok_or_else(|| Error::Checkpoint("checkpoint carries no vocabulary".into()))?;
    let table = RawTable::read_csv(data)?;
    let encoded = encode_table(&table, &vocab, Some(ck.net.dims().num_scenarios))?;
    report_rejections(&encoded.rejections, None)?;
    let d = encoded.dataset;
    if d.num_tasks != ck.net.dims().num_tasks {
        return Err(Error::Schema(format!(
            "data has {} tasks but the checkpoint was trained on {}",
            d.num_tasks,
            ck.net.dims().num_tasks
        )));
    }
    Ok(d)
}

fn resolve_data(cli: Option<&Path>, cfg: &RunConfig) -> Result<PathBuf> {
    cli.map(Path::to_path_buf)
        .or_else(|| cfg.data.as_ref().map(PathBuf::from))
        .ok_or_else(|| Error::Config("no data path: pass --data or set `data` in the config".into()))
}

fn load_stage1(dir: &Path, epoch: usize) -> Result<Checkpoint> {
    let path = dir.join(stage1_checkpoint_name(epoch));
    if !path.exists() {
        return Err(Error::Config(format!(
            "missing stage-1 checkpoint {} (was stage 1 run with at least {epoch} epochs?)",
            path.display()
        )));
    }
    checkpoint::load(&path)
}

#[derive(Debug, Clone)]
pub struct ReuseSummary {
    pub logs: Vec<EpochLog>,
    pub final_checkpoint: PathBuf,
}

/// Reuse stage from the stage-1 checkpoints in `dir`; writes `final.ckpt`.
///
/// `cfg` defaults to the config echoed into `dir`. Architecture always comes
/// from the checkpoints; `cfg` supplies the reuse settings.
pub fn reuse(cfg: Option<&RunConfig>, dir: &Path, data: Option<&Path>) -> Result<ReuseSummary> {
    let cfg = match cfg {
        Some(c) => c.clone(),
        None => RunConfig::load(&dir.join(CONFIG_FILE))?,
    };
    cfg.validate()?;
    let source = load_stage1(dir, cfg.selector_epoch())?;
    let vocab = source.vocab()?;
    let final_path = dir.join(FINAL_CHECKPOINT);
    if cfg.no_reuse {
        log::info!("no_reuse: stage-1 network after epoch {} is final", cfg.selector_epoch());
        checkpoint::save(&final_path, &source.net, &cfg, "final", cfg.selector_epoch(), vocab.as_ref())?;
        return Ok(ReuseSummary {
            logs: Vec::new(),
            final_checkpoint: final_path,
        });
    }
    let data_path = resolve_data(data, &cfg)?;
    let dataset = load_for_checkpoint(&source, &data_path)?;
    let splits = Splits::new(&dataset, &cfg)?;
    let rewind = match cfg.reuse_mode {
        ReuseMode::Rewind => Some(load_stage1(dir, cfg.rewind_epoch)?),
        ReuseMode::Fresh => None,
    };
    log::info!(
        "reuse mode {:?} ({} epochs); stage-1 selector from epoch {}",
        cfg.reuse_mode,
        reuse_schedule(&cfg).1,
        cfg.selector_epoch()
    );
    let timing = TimingLog {
        path: dir.join(TRAIN_LOG),
    };
    let mut clock = Instant::now();
    let val = (!splits.val.is_empty()).then_some(&splits.val);
    let (net, logs) = reuse_stage(
        &source.net,
        rewind.as_ref().map(|c| &c.net),
        &splits.train,
        val,
        &cfg,
        |log, _| {
            timing.line(&format!(
                "reuse epoch {} took {:.3}s",
                log.epoch,
                clock.elapsed().as_secs_f64()
            ))?;
            clock = Instant::now();
            Ok(())
        },
    )?;
    let epochs_done = reuse_schedule(&cfg).0 + logs.len();
    checkpoint::save(&final_path, &net, &cfg, "final", epochs_done, vocab.as_ref())?;
    write_file(
        &dir.join(REUSE_EPOCHS_FILE),
        epochs_csv(&logs, dataset.num_scenarios, dataset.num_tasks),
    )?;
    Ok(ReuseSummary {
        logs,
        final_checkpoint: final_path,
    })
}

/// Evaluates a checkpoint; writes `cell_report.csv` into `out`.
pub fn eval(ckpt: &Path, data: &Path, split: SplitName, gates: GateChoice, out: &Path) -> Result<EvalReport> {
    let ck = checkpoint::load(ckpt)?;
    let all = load_for_checkpoint(&ck, data)?;
    let subset = Splits::new(&all, ck.config())?.get(split, &all);
    let policy = gates.policy(ck.config());
    let report = cell_report(&evaluate(&ck.net, &subset, policy, ck.config().seed)?.predictions, &subset)?;
    create_dir(out)?;
    report.write_csv(&out.join(CELL_REPORT_FILE))?;
    Ok(report)
}

/// Pruning ratios of a checkpoint's gates; writes `mask_report.csv` into `out`.
pub fn report_masks(ckpt: &Path, data: &Path, split: SplitName, gates: GateChoice, out: &Path) -> Result<MaskReport> {
    let ck = checkpoint::load(ckpt)?;
    let all = load_for_checkpoint(&ck, data)?;
    let subset = Splits::new(&all, ck.config())?.get(split, &all);
    let policy = gates.policy(ck.config());
    let report = mask_report(&evaluate(&ck.net, &subset, policy, ck.config().seed)?.gates, &subset)?;
    create_dir(out)?;
    report.write_csv(&out.join(MASK_REPORT_FILE))?;
    Ok(report)
}

/// Worst relative error tolerated by the `gradcheck` command.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

pub fn gradcheck(eps: f64, seed: u64) -> Result<GradCheckReport> {
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(Error::Config(format!("eps must lie in [1e-6, 1e-3], got {eps}")));
    }
    MicroModel::new(seed)?.grad_check(eps)
}

/// Writes `data.csv` and `truth.json` into `out`.
pub fn gen_synth(spec: &SynthSpec, out: &Path) -> Result<usize> {
    let synth = gen_synthetic(spec)?;
    create_dir(out)?;
    synth.table.write_csv(&out.join("data.csv"))?;
    let truth = serde_json::to_string_pretty(&synth.truth)?;
    write_file(&out.join("truth.json"), truth + "\n")?;
    Ok(synth.table.rows.len())
}

pub fn build_vocab_file(data: &Path, min_frequency: usize, out: &Path) -> Result<Vocab> {
    let table = RawTable::read_csv(data)?;
    let schema = Schema::from_header(&table.header)?;
    let vocab = crate::data::build_vocab(&table, &schema.field_names, min_frequency)?;
    vocab.save(out)?;
    Ok(vocab)
}

/// Converts an extracted MovieLens-1M directory into the canonical CSV.
pub fn prep_movielens(dir: &Path, buckets: &AgeBuckets, out: &Path) -> Result<(usize, Vec<usize>)> {
    let (table, rejections) = load_movielens_dir(dir, buckets)?;
    report_rejections(&rejections, None)?;
    let mut counts = vec![0usize; buckets.num_scenarios()];
    for row in &table.rows {
        if let Ok(k) = row.values[0].parse::<usize>() {
            counts[k] += 1;
        }
    }
    table.write_csv(out)?;
    Ok((table.rows.len(), counts))
}

/// Stage 1, reuse and a test-split evaluation in one directory.
pub fn run_all(cfg: &RunConfig, data: &Path, out: &Path) -> Result<EvalReport> {
    train(cfg, data, out)?;
    let mut echoed = RunConfig::load(&out.join(CONFIG_FILE))?;
    echoed.data = Some(data.display().to_string());
    let summary = reuse(Some(&echoed), out, Some(data))?;
    eval(&summary.final_checkpoint, data, SplitName::Test, GateChoice::Auto, out)
}
