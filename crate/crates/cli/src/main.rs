//! Command-line front end for the laboratory.
//!
//! Every command reads one TOML experiment config; `--set section.key=value`
//! overrides single fields. Commands that draw random numbers require `--seed`.
//! Exit codes: 0 success, 1 configuration error, 2 stage failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use babel_core::estimator::{plan_target_tokens, ScoreSeries};
use babel_core::harness::config::ScheduleKeyword;
use babel_core::harness::run::elicit_language;
use babel_core::harness::{self, ExperimentConfig, ExperimentKind, HarnessError, ProbeAssets, ProbeSchedule};
use babel_core::model::{Checkpoint, LossTrace};
use babel_core::probes::{knowledge_transfer_proportion, lape_scores, select_transfer_neurons, worklang_proportion};
use babel_core::toylang::corpus::{write_corpus_text, write_token_file};
use babel_core::toylang::{build_vocabulary, evaluate, generate_corpus, generate_parallel_suites, Vocabulary};
use babel_core::util::derive_seed;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "babel", version, about = "Toy-language laboratory for working-language dynamics in code models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override a config field, e.g. `--set train.steps=500`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct Seeded {
    #[command(flatten)]
    config: ConfigArgs,
    /// Master seed; replaces the config's `seed`.
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    seeded: Seeded,
    /// Run directory; replaces the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckpointArgs {
    #[command(flatten)]
    seeded: Seeded,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a corpus for one language and write it as a token file.
    GenCorpus {
        #[command(flatten)]
        seeded: Seeded,
        #[arg(long)]
        lang: String,
        #[arg(long)]
        tokens: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the rendered text next to the token file.
        #[arg(long)]
        text: bool,
    },
    /// Train only: the config's run with probes and the estimator switched off.
    Train(RunArgs),
    /// Evaluate a checkpoint on freshly generated suites.
    Eval {
        #[command(flatten)]
        target: CheckpointArgs,
        /// Languages to evaluate; defaults to every language in the family.
        #[arg(long)]
        lang: Vec<String>,
    },
    /// Run one probe on a checkpoint.
    Probe {
        #[arg(value_enum)]
        kind: ProbeKind,
        #[command(flatten)]
        target: CheckpointArgs,
    },
    /// Plan the target-language budget from a loss trace and score series.
    Estimate {
        /// Run directory holding trace.jsonl and scores.jsonl.
        #[arg(long, conflicts_with_all = ["trace", "scores"])]
        run: Option<PathBuf>,
        #[arg(long, requires = "scores")]
        trace: Option<PathBuf>,
        #[arg(long, requires = "trace")]
        scores: Option<PathBuf>,
        /// Dominant-language token budget η_dominant.
        #[arg(long)]
        eta_dominant: f64,
        #[arg(long, default_value_t = 5)]
        width: usize,
        /// Initial window for α as `first,last` steps.
        #[arg(long, default_value = "90,100", value_parser = parse_window)]
        window: (u64, u64),
        #[arg(long, default_value = "A")]
        dominant: String,
        #[arg(long, default_value = "B")]
        target: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a mixture sweep config.
    Sweep(RunArgs),
    /// Regenerate the figure data of a finished run.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Run a config end to end: train, probe, estimate and report.
    Run(RunArgs),
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ProbeKind {
    Worklang,
    Neurons,
    Transfer,
}

fn parse_window(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s.split_once(',').ok_or("expected first,last")?;
    let a = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((a, b))
}

fn config_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(e.to_string())
}

fn load(seeded: &Seeded) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::load_with(&seeded.config.config, &seeded.config.overrides)?;
    cfg.seed = seeded.seed;
    Ok(cfg)
}

fn family_and_vocab(cfg: &ExperimentConfig) -> Result<(babel_core::toylang::Family, Vocabulary), HarnessError> {
    let family = cfg.validate()?;
    let vocab = build_vocabulary(&family.languages)?;
    Ok((family, vocab))
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).expect("json serializes");
    match out {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| HarnessError::io(p, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("json serializes")
}

fn execute(cfg: ExperimentConfig, out: Option<PathBuf>) -> Result<(), HarnessError> {
    let mut cfg = cfg;
    if out.is_some() {
        cfg.output_dir = out;
    }
    let m = harness::run(&cfg)?;
    let dir = cfg.output_dir.as_deref().expect("run checked output_dir");
    log::info!("{} run in {} ({})", if m.cached { "cached" } else { "completed" }, dir.display(), m.config_hash);
    println!("{}", dir.join(harness::manifest::MANIFEST_FILE).display());
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, HarnessError> {
    Ok(Checkpoint::load(path)?)
}

fn dispatch(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::GenCorpus { seeded, lang, tokens, out, text } => {
            let cfg = load(&seeded)?;
            let (family, vocab) = family_and_vocab(&cfg)?;
            let corpus = generate_corpus(&vocab, &family, &lang, derive_seed(cfg.seed, &format!("corpus/{lang}")), tokens)?;
            write_token_file(&out, &corpus.tokens, &vocab.content_hash()).map_err(|e| HarnessError::io(&out, e))?;
            if text {
                let path = out.with_extension("txt");
                let f = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
                let mut w = BufWriter::new(f);
                write_corpus_text(&mut w, &vocab, &corpus.tokens)
                    .and_then(|_| w.flush())
                    .map_err(|e| HarnessError::io(&path, e))?;
            }
            println!("{} tokens, {} documents -> {}", corpus.tokens.len(), corpus.documents, out.display());
            Ok(())
        }
        Command::Train(args) => {
            let mut cfg = load(&args.seeded)?;
            cfg.probes.schedule = ProbeSchedule::Keyword(ScheduleKeyword::None);
            cfg.probes.last = None;
            cfg.estimator.enabled = false;
            if cfg.kind == ExperimentKind::MixtureSweep {
                return Err(config_err("use `sweep` for mixture-sweep configs"));
            }
            execute(cfg, args.out)
        }
        Command::Sweep(args) => {
            let cfg = load(&args.seeded)?;
            if cfg.kind != ExperimentKind::MixtureSweep {
                return Err(config_err("sweep needs a mixture-sweep config"));
            }
            execute(cfg, args.out)
        }
        Command::Run(args) => execute(load(&args.seeded)?, args.out),
        Command::Eval { target, lang } => {
            let cfg = load(&target.seeded)?;
            let (family, vocab) = family_and_vocab(&cfg)?;
            let ckpt = load_checkpoint(&target.checkpoint)?;
            let langs = if lang.is_empty() { family.ids() } else { lang };
            // The same suites a run's probes use for this config.
            let names: Vec<&str> = langs.iter().map(String::as_str).collect();
            let seed = derive_seed(cfg.probe_seed(), "suites");
            let ctx = Some(ckpt.config().context_length);
            let suites = generate_parallel_suites(&family, &names, &elicit_language(&cfg), seed, cfg.probes.eval_tasks, ctx)?;
            let mut results = serde_json::Map::new();
            for (l, suite) in &suites {
                let r = evaluate(&ckpt, suite, &vocab)?;
                log::info!("{l}: pass {:.3}, parse {:.3}", r.pass_rate, r.parse_rate);
                results.insert(l.clone(), to_value(&r));
            }
            emit(&serde_json::Value::Object(results), target.out.as_deref())
        }
        Command::Probe { kind, target } => {
            let cfg = load(&target.seeded)?;
            let (family, vocab) = family_and_vocab(&cfg)?;
            let ckpt = load_checkpoint(&target.checkpoint)?;
            let c = ckpt.config();
            let elicit = elicit_language(&cfg);
            let assets = ProbeAssets::generate(&family, &vocab, &cfg.probes, &elicit, c.n_layers, c.context_length, cfg.probe_seed())?;
            let value = match kind {
                ProbeKind::Worklang => to_value(
                    &worklang_proportion(&ckpt.model, &vocab, &assets.prompts, &assets.table, &assets.elicit, assets.exclude_top_k)
                        .map_err(HarnessError::from)?,
                ),
                ProbeKind::Neurons => {
                    let report = lape_scores(&ckpt.model, &assets.lape_samples).map_err(HarnessError::from)?;
                    to_value(&select_transfer_neurons(&report, assets.lape_quantile, assets.lape_threshold).map_err(HarnessError::from)?)
                }
                ProbeKind::Transfer => {
                    let r = evaluate(&ckpt, &assets.suites[&assets.elicit], &vocab)?;
                    match knowledge_transfer_proportion(&assets.knowledge_subset, &r.solved(), assets.subset_mode) {
                        Ok(t) => to_value(&t),
                        Err(babel_core::probes::ProbeError::EmptySolvedSet) => serde_json::Value::Null,
                        Err(e) => return Err(e.into()),
                    }
                }
            };
            emit(&value, target.out.as_deref())
        }
        Command::Estimate { run, trace, scores, eta_dominant, width, window, dominant, target, out } => {
            let (trace, scores) = match run {
                Some(dir) => (dir.join("trace.jsonl"), dir.join("scores.jsonl")),
                None => (
                    trace.ok_or_else(|| config_err("pass --run or --trace and --scores"))?,
                    scores.ok_or_else(|| config_err("pass --run or --trace and --scores"))?,
                ),
            };
            let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e));
            let trace = LossTrace::from_jsonl(&read(&trace)?)?;
            let scores = ScoreSeries::from_jsonl(&read(&scores)?)?;
            let plan = plan_target_tokens(&trace, &scores, eta_dominant, width, window, (&dominant, &target))?;
            emit(&to_value(&plan), out.as_deref())
        }
        Command::Report { run } => {
            let summary = harness::report(&run)?;
            for f in &summary.files {
                println!("{}", run.join(f).display());
            }
            for o in &summary.omitted {
                log::warn!("omitted {}: {}", o.file, o.reason);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
