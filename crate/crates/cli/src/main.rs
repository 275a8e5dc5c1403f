use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use speechedit::sequence::PromptMode;
use speechedit_cli::commands::{self, EditArgs, EvaluateArgs, MosFiles};
use speechedit_cli::models::Stage;
use speechedit_cli::{ablation, CliResult, RunConfig};

/// Speech editing: dataset construction, training, editing and evaluation.
#[derive(Parser)]
#[command(name = "speechedit", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration; module defaults apply without one.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Mode {
    ZeroShot,
    OneShot,
}

impl From<Mode> for PromptMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::ZeroShot => PromptMode::ZeroShot,
            Mode::OneShot => PromptMode::OneShot,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Writes the synthetic tone corpus.
    Synth {
        /// Defaults to the configured corpus path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Builds edit pairs and their manifest from the corpus.
    BuildDataset {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trains models into the checkpoint directory.
    Train {
        #[arg(long, value_enum, default_value = "both")]
        stage: Stage,
        /// Continue from the checkpoints of an interrupted run.
        #[arg(long)]
        resume: bool,
    },
    /// Edits one recording, or every pair of a manifest with --pairs. The
    /// output is a mel spectrogram; no vocoder is included.
    Edit {
        #[arg(long)]
        original: Option<PathBuf>,
        #[arg(long)]
        original_text: Option<String>,
        #[arg(long)]
        target_text: Option<String>,
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also record the decoded semantic tokens.
        #[arg(long)]
        dump_tokens: bool,
    },
    /// Scores an evaluation list (JSONL) and writes a report.
    Evaluate {
        #[arg(long)]
        pairs: PathBuf,
        /// Paste unedited original regions into waveform hypotheses first.
        #[arg(long)]
        replace: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// External MOS scores as NAME=GENERATED.jsonl,REFERENCE.jsonl.
        #[arg(long)]
        mos: Vec<MosFiles>,
    },
    /// Trains every stage and compares the four training/prompt
    /// configurations on the dataset.
    Ablate {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = RunConfig::load(cli.global.config.as_deref())?;
    if let Some(s) = cli.global.seed {
        cfg.seed = s;
    }
    match cli.command {
        Command::Synth { out } => {
            let dir = commands::synth(&cfg, out.as_deref())?;
            println!("corpus written to {}", dir.display());
        }
        Command::BuildDataset { corpus, out } => {
            if let Some(c) = corpus {
                cfg.paths.corpus = std::path::absolute(c)?;
            }
            if let Some(o) = out {
                cfg.paths.dataset = std::path::absolute(o)?;
            }
            let r = commands::build_dataset(&cfg)?;
            println!("pairs: {}  utterances: {}", r.summary.n_pairs, r.summary.n_utterances);
            for (task, n) in &r.summary.per_task {
                println!("  {task:<10} {n:>5}  (skipped {})", r.summary.skipped[task]);
            }
            println!("manifest sha256 {}", r.manifest_sha256);
        }
        Command::Train { stage, resume } => {
            for r in commands::train(&cfg, stage, resume)? {
                println!(
                    "{}: {} examples, {} steps, final loss {}",
                    r.name,
                    r.examples,
                    r.steps,
                    r.final_loss.map_or("-".into(), |l| format!("{l:.4}"))
                );
            }
        }
        Command::Edit {
            original,
            original_text,
            target_text,
            pairs,
            mode,
            out,
            dump_tokens,
        } => {
            if let Some(m) = mode {
                cfg.inference.mode = m.into();
            }
            let args = EditArgs {
                original,
                original_text,
                target_text,
                pairs,
                out,
                dump_tokens,
            };
            for m in commands::edit(&cfg, &args)? {
                println!("{}: {} -> {} tokens, {} frames ({:?})", m.id, m.orig_tokens, m.decoded_tokens, m.mel_frames, m.status);
            }
        }
        Command::Evaluate { pairs, replace, out, mos } => {
            let r = commands::evaluate(&cfg, &EvaluateArgs { pairs, replace, out, mos })?;
            print!("{}", r.to_table());
        }
        Command::Ablate { out } => {
            let out = out.unwrap_or_else(|| cfg.output_dir().join("ablation"));
            let r = ablation::ablate(&cfg, &out)?;
            print!("{}", r.table);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level)),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

