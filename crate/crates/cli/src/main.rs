use std::path::{Path, PathBuf};
use std::process::ExitCode;

use autoifs::config::RunConfig;
use autoifs::data::{AgeBuckets, SynthSpec};
use autoifs::error::{Error, ErrorKind};
use autoifs::run::{self, GateChoice, SplitName};
use clap::{Parser, Subcommand};

/// Multi-scenario multi-task recommender with learned information-flow pruning.
#[derive(Debug, Parser)]
#[command(name = "autoifs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset (data.csv + truth.json).
    GenSynth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        scenarios: usize,
        #[arg(long, default_value_t = 2)]
        tasks: usize,
        /// Rows per scenario.
        #[arg(long, default_value_t = 10_000)]
        rows: usize,
        #[arg(long, default_value_t = 6)]
        fields: usize,
        #[arg(long)]
        conflict: bool,
    },
    /// Convert an extracted MovieLens-1M directory into the canonical CSV.
    PrepMovielens {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Age codes per scenario, e.g. "1,18;25;35,45,50,56".
        #[arg(long)]
        age_buckets: Option<String>,
    },
    /// Build a vocabulary file from a CSV.
    BuildVocab {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        min_frequency: usize,
    },
    /// Stage 1: joint training with annealed continuous gates.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reuse stage: retrain the model under the frozen selector's hard gates.
    Reuse {
        /// Defaults to the config echoed into the checkpoint directory.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        ckpt_dir: PathBuf,
        /// Defaults to the `data` entry of the config.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Stage 1, reuse and test evaluation in one go.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-cell AUC and logloss of a checkpoint.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// train, val, test or all.
        #[arg(long, default_value = "test")]
        split: String,
        /// hard, soft, off, or auto (the run's own evaluation gates).
        #[arg(long, default_value = "auto")]
        gates: String,
        /// Directory for cell_report.csv; defaults to the checkpoint's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pruning ratio per scenario, task and flow.
    ReportMasks {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value = "auto")]
        gates: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of every gradient on a micro-model.
    Gradcheck {
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Error> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn out_dir(out: Option<PathBuf>, ckpt: &Path) -> PathBuf {
    out.unwrap_or_else(|| {
        ckpt.parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    })
}

fn execute(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::GenSynth {
            out,
            seed,
            scenarios,
            tasks,
            rows,
            fields,
            conflict,
        } => {
            let spec = SynthSpec {
                fields,
                ..SynthSpec::new(scenarios, tasks, rows, conflict, seed)
            };
            let n = run::gen_synth(&spec, &out)?;
            println!("wrote {n} rows to {}", out.join("data.csv").display());
        }
        Command::PrepMovielens { dir, out, age_buckets } => {
            let buckets = match age_buckets {
                Some(text) => AgeBuckets::parse(&text)?,
                None => AgeBuckets::default(),
            };
            let (n, counts) = run::prep_movielens(&dir, &buckets, &out)?;
            println!("wrote {n} rows to {}", out.display());
            for (k, c) in counts.iter().enumerate() {
                println!("scenario {k}: {c} rows ({:.2}%)", 100.0 * *c as f64 / n.max(1) as f64);
            }
        }
        Command::BuildVocab {
            data,
            out,
            min_frequency,
        } => {
            let vocab = run::build_vocab_file(&data, min_frequency, &out)?;
            println!("vocabulary sizes {:?} written to {}", vocab.sizes(), out.display());
        }
        Command::Train { config, data, out } => {
            let cfg = load_config(config.as_deref())?;
            let summary = run::train(&cfg, &data, &out)?;
            if let Some(last) = summary.logs.last() {
                println!(
                    "stage1 done: {} epochs, final train loss {}, {} parameters",
                    summary.logs.len(),
                    last.train_loss,
                    summary.counts.total()
                );
            }
        }
        Command::Reuse { config, ckpt_dir, data } => {
            let cfg = config.as_deref().map(RunConfig::load).transpose()?;
            let summary = run::reuse(cfg.as_ref(), &ckpt_dir, data.as_deref())?;
            println!("wrote {}", summary.final_checkpoint.display());
        }
        Command::Run { config, data, out } => {
            let cfg = load_config(config.as_deref())?;
            let report = run::run_all(&cfg, &data, &out)?;
            println!("{}", report.summary_line());
        }
        Command::Eval {
            ckpt,
            data,
            split,
            gates,
            out,
        } => {
            let split: SplitName = split.parse()?;
            let gates: GateChoice = gates.parse()?;
            let out = out_dir(out, &ckpt);
            let report = run::eval(&ckpt, &data, split, gates, &out)?;
            print!("{}", report.to_csv());
            println!("{}", report.summary_line());
        }
        Command::ReportMasks {
            ckpt,
            data,
            split,
            gates,
            out,
        } => {
            let split: SplitName = split.parse()?;
            let gates: GateChoice = gates.parse()?;
            let out = out_dir(out, &ckpt);
            let report = run::report_masks(&ckpt, &data, split, gates, &out)?;
            print!("{}", report.to_csv());
        }
        Command::Gradcheck { eps, seed } => {
            let report = run::gradcheck(eps, seed)?;
            let pass = report.max_relative_error <= run::GRADCHECK_TOLERANCE;
            println!(
                "{} worst relative error {:e} at {}[{}] over {} parameters (tolerance {:e})",
                if pass { "PASS" } else { "FAIL" },
                report.max_relative_error,
                report.worst_param,
                report.worst_index,
                report.checked,
                run::GRADCHECK_TOLERANCE
            );
            if !pass {
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numeric => 3,
            })
        }
    }
}
