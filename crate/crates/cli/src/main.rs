use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nextsum_core::pipeline::{
    stage_build_oracle, stage_evaluate, stage_generate, stage_ingest, stage_report,
    stage_train, stage_train_cm, stage_train_importance, PipelineConfig, SystemKind,
};
use nextsum_core::synth::{generate_corpus, sidecar_path, write_corpus, SynthSpec};
use nextsum_core::Error;

/// Extractive summarization by next-sentence prediction.
#[derive(Parser)]
#[command(
    name = "nextsum",
    version,
    after_help = "Flags override the matching config values; everything else \
                  comes from the --config file."
)]
struct Cli {
    /// JSON pipeline config; required by every subcommand except `synth`.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split the corpus into train/dev/test files under the models directory.
    Ingest {
        /// Override the shuffle seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a planted-topic synthetic corpus plus its ground-truth sidecar.
    Synth {
        /// Planted topic count (1 to 16).
        #[arg(long)]
        topics: usize,
        /// Article-abstract pairs to generate.
        #[arg(long)]
        pairs: usize,
        #[arg(long)]
        seed: u64,
        /// Corpus file to write; the `.gold.jsonl` sidecar lands next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Align each abstract to source sentences, writing gold extracts.
    BuildOracle,
    /// Train the content model, picking the topic count on dev likelihood.
    TrainCm {
        /// Override the initialization seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the word-importance scorer on the train-split gold extracts.
    TrainImportance {
        /// Override the training seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the next-sentence predictor and write the model bundle.
    Train {
        /// Override the training seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize the test split with one system.
    Generate {
        /// nextsum, nextsum-l, lead, chmm, transition, or chmm-t.
        #[arg(long)]
        system: Option<String>,
        /// Word budget; required by every system except `nextsum`.
        #[arg(long)]
        length: Option<usize>,
        /// Override the sampling seed (used by `chmm`).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score one system's summaries against the reference abstracts.
    Evaluate {
        /// Defaults to the config's generation.system.
        #[arg(long)]
        system: Option<String>,
    },
    /// Aggregate all evaluations in the outputs directory into report.txt.
    Report,
}

fn load_config(path: Option<PathBuf>) -> Result<PipelineConfig, Error> {
    let path = path.ok_or_else(|| {
        Error::InvalidInput("this subcommand needs --config <FILE>".into())
    })?;
    PipelineConfig::from_file(&path)
}

fn resolve_system(cfg: &PipelineConfig, flag: Option<String>) -> Result<SystemKind, Error> {
    match flag {
        Some(s) => SystemKind::parse(&s),
        None => Ok(cfg.generation.system),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Synth {
            topics,
            pairs,
            seed,
            out,
        } => {
            let spec = SynthSpec::canonical(topics, seed);
            let generated = generate_corpus(&spec, pairs)?;
            write_corpus(&generated, &out)?;
            println!(
                "wrote {} pairs -> {} (sidecar {})",
                generated.len(),
                out.display(),
                sidecar_path(&out).display()
            );
        }
        Command::Ingest { seed } => {
            let mut cfg = load_config(cli.config)?;
            if let Some(s) = seed {
                cfg.split.seed = s;
            }
            let r = stage_ingest(&cfg)?;
            println!(
                "split {} pairs: {} train / {} dev / {} test -> {}",
                r.train + r.dev + r.test,
                r.train,
                r.dev,
                r.test,
                cfg.paths.models.display()
            );
        }
        Command::BuildOracle => {
            let cfg = load_config(cli.config)?;
            let r = stage_build_oracle(&cfg)?;
            println!(
                "aligned gold extracts: {} train / {} dev / {} test",
                r.train, r.dev, r.test
            );
        }
        Command::TrainCm { seed } => {
            let mut cfg = load_config(cli.config)?;
            if let Some(s) = seed {
                cfg.content_model.seed = s;
            }
            let artifact = stage_train_cm(&cfg)?;
            for score in &artifact.scores {
                println!(
                    "  {} topics: dev log-likelihood {:.3}",
                    score.num_topics, score.dev_log_likelihood
                );
            }
            println!(
                "kept {} topics -> {}",
                artifact.model.num_topics(),
                cfg.content_model_path().display()
            );
        }
        Command::TrainImportance { seed } => {
            let mut cfg = load_config(cli.config)?;
            if let Some(s) = seed {
                cfg.importance.seed = s;
            }
            let artifact = stage_train_importance(&cfg)?;
            println!(
                "trained importance scorer (embedding dim {}) -> {}",
                artifact.embed_dim,
                cfg.importance_path().display()
            );
        }
        Command::Train { seed } => {
            let mut cfg = load_config(cli.config)?;
            if let Some(s) = seed {
                cfg.predictor.seed = s;
            }
            let artifact = stage_train(&cfg)?;
            println!(
                "trained predictor: best dev accuracy {:.4} at epoch {}; window K={} covers \
                 {:.3} of gold timesteps -> {}",
                artifact.metrics.best_dev_accuracy,
                artifact.metrics.best_epoch,
                artifact.window,
                artifact.coverage.coverage(),
                cfg.model_path().display()
            );
        }
        Command::Generate {
            system,
            length,
            seed,
        } => {
            let mut cfg = load_config(cli.config)?;
            if let Some(l) = length {
                cfg.generation.length = Some(l);
            }
            if let Some(s) = seed {
                cfg.generation.seed = s;
            }
            let system = resolve_system(&cfg, system)?;
            let summaries = stage_generate(&cfg, system)?;
            println!(
                "wrote {} summaries -> {}",
                summaries.len(),
                cfg.summaries_path(system).display()
            );
        }
        Command::Evaluate { system } => {
            let cfg = load_config(cli.config)?;
            let system = resolve_system(&cfg, system)?;
            let artifact = stage_evaluate(&cfg, system)?;
            println!(
                "{}: rouge-1 f {:.4}, rouge-2 f {:.4} over {} summaries -> {}",
                system,
                artifact.rouge_1.f_score,
                artifact.rouge_2.f_score,
                artifact.summaries,
                cfg.eval_path(system).display()
            );
            if let Some(ns) = &artifact.next_sentence {
                println!(
                    "next-sentence: 1-of-K {:.4}, binary balanced {:.4}, binary natural {:.4} \
                     over {} timesteps",
                    ns.one_of_k_accuracy,
                    ns.binary_accuracy_balanced,
                    ns.binary_accuracy_natural,
                    ns.timesteps
                );
            }
        }
        Command::Report => {
            let cfg = load_config(cli.config)?;
            let text = stage_report(&cfg)?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
