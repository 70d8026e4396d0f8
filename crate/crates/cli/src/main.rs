//! `mocap-lift`: synthesize data, train the denoiser, lift 2D motion to 3D
//! and evaluate the result.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 I/O or parse
//! failure, 3 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mocap_lift::diffusion::ScheduleKind;
use mocap_lift::Error;

use config::PipelineConfig;

#[derive(Parser, Debug)]
#[command(name = "mocap-lift", version, about = "Multi-view diffusion lifting of 2D motion to 3D")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum StageArg {
    Pretrain,
    Finetune,
}

/// Flags shared by every subcommand; they override the config file.
#[derive(Args, Debug, Default)]
struct Common {
    /// TOML pipeline configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    views: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    schedule: Option<ScheduleKind>,
    #[arg(long, value_enum)]
    pointmaps: Option<Switch>,
    /// Disentangled (on) or direct pixel (off) motion representation.
    #[arg(long, value_enum)]
    decouple: Option<Switch>,
    /// Camera rig file.
    #[arg(long)]
    rig: Option<PathBuf>,
    /// Output directory (file for `eval`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic multi-view dataset.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Train a denoiser checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "finetune")]
        stage: StageArg,
        /// Dataset directory written by `synth`.
        #[arg(long)]
        data: PathBuf,
        /// Pretrained checkpoint to start fine-tuning from.
        #[arg(long)]
        init_from: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Lift a primary-view 2D motion file to 3D.
    Lift {
        #[command(flatten)]
        common: Common,
        /// Primary-view 2D motion file.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Ground-truth 3D motion used as an exact denoiser.
        #[arg(long)]
        oracle: Option<PathBuf>,
        /// Also write a bone-length refined motion.
        #[arg(long)]
        fit: bool,
    },
    /// Compare predicted and ground-truth 3D motion files or directories.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Check a dataset's stored arrays for self-consistency.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
}

/// Failure of a subcommand together with its exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Lib(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Check(_) => 3,
            Failure::Lib(e) if e.is_numerical() => 3,
            Failure::Lib(Error::Io { .. } | Error::Parse { .. } | Error::Checkpoint(_)) => 2,
            Failure::Lib(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Check(m) => f.write_str(m),
            Failure::Lib(e) => write!(f, "{e}"),
        }
    }
}

fn resolve(common: &Common) -> Result<PipelineConfig, Failure> {
    let mut c = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = common.seed {
        c.seed = v;
    }
    if let Some(v) = common.count {
        c.dataset.count = v;
    }
    if let Some(v) = common.frames {
        c.dataset.frames = v;
    }
    if let Some(v) = common.views {
        c.views = v;
    }
    if let Some(v) = common.steps {
        c.diffusion.steps = v;
    }
    if let Some(v) = common.schedule {
        c.diffusion.schedule = v;
    }
    if let Some(v) = common.pointmaps {
        c.diffusion.pointmaps = v.on();
    }
    if let Some(v) = common.decouple {
        c.diffusion.decouple = v.on();
    }
    if let Some(v) = &common.rig {
        c.rig = Some(v.clone());
    }
    if let Some(v) = &common.out {
        c.out = v.clone();
    }
    c.validate()?;
    Ok(c)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth { common } => commands::synth(&resolve(&common)?),
        Command::Train {
            common,
            stage,
            data,
            init_from,
            epochs,
        } => {
            let mut c = resolve(&common)?;
            if let Some(e) = epochs {
                c.train.epochs = e;
            }
            c.validate()?;
            commands::train(&c, stage == StageArg::Pretrain, &data, init_from.as_deref())
        }
        Command::Lift {
            common,
            input,
            checkpoint,
            oracle,
            fit,
        } => {
            let c = resolve(&common)?;
            let source = match (checkpoint, oracle) {
                (Some(p), None) => commands::Source::Checkpoint(p),
                (None, Some(p)) => commands::Source::Oracle(p),
                _ => return Err(Failure::Usage("lift needs exactly one of --checkpoint or --oracle".into())),
            };
            commands::lift(&c, &input, &source, fit)
        }
        Command::Eval { common, pred, gt } => {
            let c = resolve(&common)?;
            commands::eval(&c, &pred, &gt, common.out.as_deref())
        }
        Command::Verify { common, data } => {
            resolve(&common)?;
            commands::verify(&data)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
