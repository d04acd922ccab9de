use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mudas_core::commands::{
    cmd_adapt, cmd_eval, cmd_gen, cmd_stream_sim, cmd_train_supervised, data_paths, load_labeled, load_unlabeled,
    resolve_config, AdaptInputs, StreamInputs,
};
use mudas_core::config::RunConfig;
use mudas_core::data::load_embeddings;
use mudas_core::model::load_model;
use mudas_core::{MudasError, Result};

#[derive(Parser)]
#[command(name = "mudas", version, about = "Unsupervised domain adaptation for multi-label embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Extra key=value overrides, applied after --config
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        resolve_config(self.config.as_deref(), &self.overrides, self.seed)
    }
}

/// Input files. `--data` points at a `gen` output directory; explicit
/// paths take precedence.
#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    source_labels: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    /// Held-out target labels, used for evaluation only
    #[arg(long)]
    target_labels: Option<PathBuf>,
}

impl DataArgs {
    fn pick(&self, explicit: &Option<PathBuf>, slot: usize, what: &str) -> Result<PathBuf> {
        if let Some(p) = explicit {
            return Ok(p.clone());
        }
        match &self.data {
            Some(dir) => Ok(data_paths(dir)[slot].clone()),
            None => Err(MudasError::InvalidConfig(format!("missing --{what} (or --data)"))),
        }
    }

    fn source(&self) -> Result<mudas_core::data::LabeledSet> {
        load_labeled(
            &self.pick(&self.source, 0, "source")?,
            &self.pick(&self.source_labels, 1, "source-labels")?,
        )
    }

    fn target_path(&self) -> Result<PathBuf> {
        self.pick(&self.target, 2, "target")
    }

    fn target_labeled(&self) -> Result<mudas_core::data::LabeledSet> {
        load_labeled(&self.target_path()?, &self.pick(&self.target_labels, 3, "target-labels")?)
    }

    /// Target labels for evaluation, when given or present under `--data`.
    fn target_eval(&self) -> Result<Option<mudas_core::data::LabeledSet>> {
        let labels = match (&self.target_labels, &self.data) {
            (Some(p), _) => p.clone(),
            (None, Some(dir)) if data_paths(dir)[3].exists() => data_paths(dir)[3].clone(),
            _ => return Ok(None),
        };
        let Ok(target) = self.target_path() else {
            return Ok(None);
        };
        load_labeled(&target, &labels).map(Some)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic source/target benchmark
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Train on labeled source data only (lower bound)
    TrainSource {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Train and test on labeled target data (upper bound)
    TrainUpper {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Adapt a model to unlabeled target data
    Adapt {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Model to start from, typically a train-source output
        #[arg(long)]
        init: Option<PathBuf>,
        /// Adapt on only the N highest-scoring target rows
        #[arg(long, value_name = "N")]
        select_buffer: Option<usize>,
    },
    /// Evaluate a model on labeled embeddings
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Write per-class PR points as CSV
        #[arg(long, value_name = "PATH")]
        emit_pr_curve: Option<PathBuf>,
        /// Also write metrics.txt into this directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay target rows through the selection buffer with periodic retraining
    StreamSim {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        /// Buffer capacity
        #[arg(long, value_name = "N", default_value_t = 250)]
        select_buffer: usize,
        /// Retrain after this many accepted rows
        #[arg(long, value_name = "R", default_value_t = 100)]
        trigger_every: usize,
    },
}

fn check_out(out: &Path) -> Result<()> {
    if out.as_os_str().is_empty() {
        return Err(MudasError::InvalidConfig("--out must not be empty".into()));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Gen { common } => {
            check_out(&common.out)?;
            cmd_gen(&common.resolve()?, &common.out)
        }
        Command::TrainSource { common, data } => {
            let cfg = common.resolve()?;
            let source = data.source()?;
            let eval = data.target_eval()?;
            cmd_train_supervised("train-source", &cfg, &source, eval.as_ref(), &common.out)
        }
        Command::TrainUpper { common, data } => {
            let cfg = common.resolve()?;
            let target = data.target_labeled()?;
            cmd_train_supervised("train-upper", &cfg, &target, Some(&target), &common.out)
        }
        Command::Adapt {
            common,
            data,
            init,
            select_buffer,
        } => {
            let cfg = common.resolve()?;
            let source = data.source()?;
            let target = load_unlabeled(&data.target_path()?)?;
            let eval = data.target_eval()?;
            let init = init.map(load_model).transpose()?;
            let inputs = AdaptInputs {
                source: &source,
                target: &target,
                init,
                eval: eval.as_ref(),
                select_buffer,
            };
            cmd_adapt(&cfg, inputs, &common.out)
        }
        Command::Eval {
            model,
            embeddings,
            labels,
            emit_pr_curve,
            out,
        } => {
            let model = load_model(model)?;
            let set = load_labeled(&embeddings, &labels)?;
            cmd_eval(&model, &set, emit_pr_curve.as_deref(), out.as_deref())
        }
        Command::StreamSim {
            common,
            data,
            model,
            select_buffer,
            trigger_every,
        } => {
            let cfg = common.resolve()?;
            let source = data.source()?;
            let stream = load_embeddings(data.target_path()?, None)?;
            let eval = data.target_eval()?;
            let inputs = StreamInputs {
                model: load_model(model)?,
                source: &source,
                stream: &stream,
                eval: eval.as_ref(),
                capacity: select_buffer,
                trigger_every,
            };
            Ok(cmd_stream_sim(&cfg, inputs, &common.out)?.report)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
