use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mavit::cmd::{self, Failure, Outcome};
use mavit::run_config::{
    ConfigFile, CrossEvalOptions, EvalOptions, GenOptions, GradCheckOptions, MaskOptions, TrainOptions,
};

/// Multi-modal face anti-spoofing with a modality-agnostic vision transformer.
#[derive(Parser)]
#[command(name = "mavit", version)]
struct Cli {
    /// TOML file with a section per command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the report as JSON instead of `key=value` lines.
    #[arg(long, global = true)]
    json_style: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic paired dataset.
    Gen(GenOptions),
    /// Train a model on a dataset directory.
    Train(TrainOptions),
    /// Score dev and test splits and report metrics per output path.
    Eval(EvalOptions),
    /// Threshold on one dataset's dev split, report HTER on another's test split.
    CrossEval(CrossEvalOptions),
    /// Write attention mask grids of one block as PGM files.
    DumpMasks(MaskOptions),
    /// Compare analytic and finite-difference gradients of a small model.
    GradCheck {
        #[command(flatten)]
        opts: GradCheckOptions,
        #[arg(long, hide = true)]
        corrupt_backward: bool,
    },
}

fn dispatch(cli: Cli) -> Result<Outcome, Failure> {
    let file = match &cli.config {
        Some(p) => ConfigFile::read(p).map_err(|e| Failure::Usage(e.to_string()))?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Gen(o) => cmd::gen::run(o, &file),
        Command::Train(o) => cmd::train::run(o, &file),
        Command::Eval(o) => cmd::eval::run(o, &file),
        Command::CrossEval(o) => cmd::eval::run_cross(o, &file),
        Command::DumpMasks(o) => cmd::masks::run(o, &file),
        Command::GradCheck { opts, corrupt_backward } => cmd::grad_check::run(opts, corrupt_backward, &file),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json_style;
    match dispatch(cli) {
        Ok(out) => {
            print!("{}", out.report.render(json));
            ExitCode::from(out.exit_code)
        }
        Err(f) => {
            eprintln!("mavit: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
