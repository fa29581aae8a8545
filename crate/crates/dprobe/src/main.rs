use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dprobe::{run, Command, Config, Overrides};

#[derive(Parser)]
#[command(name = "dprobe", version, about = "Train dialogue models and probe what their encoders capture.")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate an annotated synthetic corpus (one file per split).
    Synth(Overrides),
    /// Train every (model, seed) pair and save checkpoints.
    Train(Overrides),
    /// Fit probes on checkpoint encodings and write the probe report.
    Probe(Overrides),
    /// Difficulty grading, per-grade aggregates and evolution curves.
    Report(Overrides),
    /// Bootstrap tie fractions of pairwise human annotations.
    Humaneval(Overrides),
    /// Two-component PCA of context encodings per checkpoint.
    Pca(Overrides),
    /// Information-distribution histograms of a corpus.
    Distributions(Overrides),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (command, flags) = match cli.command {
        Cmd::Synth(o) => (Command::Synth, o),
        Cmd::Train(o) => (Command::Train, o),
        Cmd::Probe(o) => (Command::Probe, o),
        Cmd::Report(o) => (Command::Report, o),
        Cmd::Humaneval(o) => (Command::HumanEval, o),
        Cmd::Pca(o) => (Command::Pca, o),
        Cmd::Distributions(o) => (Command::Distributions, o),
    };
    let outcome = Config::resolve(&flags).and_then(|cfg| run(command, &cfg));
    match outcome {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
