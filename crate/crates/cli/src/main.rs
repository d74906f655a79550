mod commands;
mod config;
mod run;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{InputFormat, RunConfig, SourceSetting};
use run::{CheckFailed, Run};

#[derive(Debug, Parser)]
#[command(name = "structgen", version, about = "Chord-conditioned melody models and structure analysis")]
struct Cli {
    /// Seed for every random choice in the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML file with run settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for artifacts (default: runs/<unix-time>-s<seed>).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert text scores or MIDI files into frame CSVs.
    Ingest(IngestArgs),
    /// Train a model on a frame-CSV corpus.
    Train(TrainArgs),
    /// Continue a prime with a trained checkpoint.
    Generate(GenerateArgs),
    /// Threshold sweep and motif discovery on one piece.
    Analyze(AnalyzeArgs),
    /// ANOVA and pairwise t-tests on listener ratings.
    Evaluate(EvaluateArgs),
    /// Finite-difference check of every model's gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Files or directories.
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<InputFormat>,
    #[arg(long)]
    melody_track: Option<usize>,
    #[arg(long)]
    chord_track: Option<usize>,
    /// Write all 12 transpositions of each song.
    #[arg(long)]
    augment: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Directory of frame CSVs.
    corpus: Option<PathBuf>,
    /// uni, bi or tcn.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    train_count: Option<usize>,
    #[arg(long)]
    augment: bool,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    checkpoint: Option<PathBuf>,
    /// Score or frame CSV whose melody primes the model and whose chords
    /// cover prime and continuation.
    prime: Option<PathBuf>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    prime_beats: Option<usize>,
    #[arg(long)]
    generate_beats: Option<usize>,
    /// Also write a Standard MIDI File.
    #[arg(long)]
    smf: bool,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    source: Option<SourceSetting>,
    /// Comma-separated thresholds instead of the data-derived grid.
    #[arg(long, value_delimiter = ',')]
    theta: Option<Vec<f64>>,
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    min_len: Option<usize>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// CSV with `sample_id,model_name,rating`.
    ratings: Option<PathBuf>,
    /// Unequal-variance t-tests.
    #[arg(long)]
    welch: bool,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Restrict to these models.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    #[arg(long)]
    frames: Option<usize>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl Command {
    fn apply(&self, cfg: &mut RunConfig) {
        match self {
            Command::Ingest(a) => {
                let s = &mut cfg.ingest;
                if !a.inputs.is_empty() {
                    s.inputs = a.inputs.clone();
                }
                set(&mut s.format, a.format);
                set(&mut s.melody_track, a.melody_track);
                if a.chord_track.is_some() {
                    s.chord_track = a.chord_track;
                }
                s.augment |= a.augment;
            }
            Command::Train(a) => {
                let s = &mut cfg.train;
                if a.corpus.is_some() {
                    s.corpus = a.corpus.clone();
                }
                set(&mut cfg.model.kind, a.model.clone());
                set(&mut s.epochs, a.epochs);
                set(&mut s.lr, a.lr);
                if a.max_steps.is_some() {
                    s.max_steps = a.max_steps;
                }
                if a.train_count.is_some() {
                    s.train_count = a.train_count;
                }
                s.augment |= a.augment;
            }
            Command::Generate(a) => {
                let s = &mut cfg.generate;
                if a.checkpoint.is_some() {
                    s.checkpoint = a.checkpoint.clone();
                }
                if a.prime.is_some() {
                    s.prime = a.prime.clone();
                }
                set(&mut s.temperature, a.temperature);
                set(&mut s.prime_beats, a.prime_beats);
                set(&mut s.generate_beats, a.generate_beats);
                s.smf |= a.smf;
            }
            Command::Analyze(a) => {
                let s = &mut cfg.analyze;
                if a.input.is_some() {
                    s.input = a.input.clone();
                }
                set(&mut s.source, a.source);
                if a.theta.is_some() {
                    s.theta_grid = a.theta.clone();
                }
                set(&mut s.grid_size, a.grid_size);
                set(&mut s.min_len, a.min_len);
            }
            Command::Evaluate(a) => {
                if a.ratings.is_some() {
                    cfg.evaluate.ratings = a.ratings.clone();
                }
                cfg.evaluate.welch |= a.welch;
            }
            Command::Gradcheck(a) => {
                set(&mut cfg.gradcheck.models, a.models.clone());
                set(&mut cfg.gradcheck.frames, a.frames);
            }
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Train(_) => "train",
            Command::Generate(_) => "generate",
            Command::Analyze(_) => "analyze",
            Command::Evaluate(_) => "evaluate",
            Command::Gradcheck(_) => "gradcheck",
        }
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    set(&mut cfg.jobs, cli.jobs);
    cli.command.apply(&mut cfg);
    cfg.validate()?;

    let mut run = Run::create(cli.out_dir.as_deref(), cfg, cli.command.name())?;
    match cli.command {
        Command::Ingest(_) => commands::ingest(&mut run),
        Command::Train(_) => commands::train(&mut run),
        Command::Generate(_) => commands::generate(&mut run),
        Command::Analyze(_) => commands::analyze(&mut run),
        Command::Evaluate(_) => commands::evaluate(&mut run),
        Command::Gradcheck(_) => commands::gradcheck(&mut run),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<CheckFailed>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
