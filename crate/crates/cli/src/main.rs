//! `halluc` — train, decode, and evaluate transcript hallucination models.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cli::{
    cmd_augment, cmd_decode, cmd_evaluate, cmd_finetune, cmd_preprocess, cmd_synthcorpus,
    cmd_train, CliError, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "halluc",
    version,
    about = "Sequence-to-sequence transcript hallucination",
    after_help = "Each subcommand is configured by key=value pairs, read from --config FILE \
                  first and then overridden by positional KEY=VALUE arguments."
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize a raw corpus, derive phoneme sequences, and build vocabularies
    Preprocess(Run),
    /// Fit a model from random initialization
    Train(Run),
    /// Continue training from a saved checkpoint
    Finetune(Run),
    /// Produce N-best hypothesis lists from a trained model
    Decode(Run),
    /// Score hypothesis lists against reference errors
    Evaluate(Run),
    /// Rewrite a corpus by substituting model hypotheses for some transcripts
    Augment(Run),
    /// Generate a synthetic parallel corpus from a noise-channel file
    Synthcorpus(Run),
}

#[derive(clap::Args)]
struct Run {
    /// Configuration file of key=value lines
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides applied after the file, e.g. `seed=7`
    #[arg(value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl Run {
    fn into_config(self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::new(),
        };
        for pair in &self.sets {
            cfg.set_pair(pair)?;
        }
        Ok(cfg)
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Preprocess(run) => cmd_preprocess(&run.into_config()?),
        Command::Train(run) => cmd_train(&run.into_config()?),
        Command::Finetune(run) => cmd_finetune(&run.into_config()?),
        Command::Decode(run) => cmd_decode(&run.into_config()?),
        Command::Evaluate(run) => cmd_evaluate(&run.into_config()?),
        Command::Augment(run) => cmd_augment(&run.into_config()?),
        Command::Synthcorpus(run) => cmd_synthcorpus(&run.into_config()?),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match dispatch(args.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
