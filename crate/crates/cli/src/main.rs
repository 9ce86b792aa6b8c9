mod config;
mod error;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use ctvl_core::eval::{bootstrap_ci, BootstrapConfig, MetricsReport};
use ctvl_core::io::{
    load_corpus, read_checkpoint, read_jsonl, save_corpus, write_checkpoint, write_jsonl, Manifest,
};
use ctvl_core::mining::{
    mine_report, scores_from_counts, mining_counts, MiningStats, ReferenceExtractor, ReferenceSets, Report, Snippet,
    DEFAULT_PATTERNS,
};
use ctvl_core::objectives::{gradient_fidelity, CheckedFunction, DEFAULT_PITCH_MM};
use ctvl_core::synth::generate;
use ctvl_core::train::{evaluate_checkpoint, train_with};

use config::RunConfig;
use error::{at, CliError};

#[derive(Parser, Debug)]
#[command(name = "ctvl", version, about = "Train and evaluate CT vision-language heads on precomputed embeddings")]
struct Cli {
    /// Cap on worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract slice-referenced snippets from reports (JSON Lines).
    Mine {
        reports: PathBuf,
        /// Pattern file: `name = regex` per line, `#` comments.
        #[arg(long)]
        patterns: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Depth-grid pitch used to assign depth indices.
        #[arg(long, default_value_t = DEFAULT_PITCH_MM)]
        pitch_mm: f64,
    },
    /// Precision/recall/F1 of mined references against gold annotations.
    EvalMining {
        pred: PathBuf,
        gold: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        resamples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Finite-difference check of every analytic gradient.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Test hook: perturb the analytic gradient of one function
        /// (siglip, prompt, localization, head-backward) to confirm the check fails.
        #[arg(long, value_name = "FUNCTION")]
        inject_bug: Option<String>,
    },
    /// Generate a synthetic corpus directory.
    GenSynth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train projection heads on a corpus directory.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        corpus: PathBuf,
        /// Output directory for checkpoint.rfkt, train_log.jsonl and manifest.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a corpus split.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output directory for metrics.json and manifest.json.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(error::EXIT_FAILURE);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Mine {
            reports,
            patterns,
            out,
            pitch_mm,
        } => cmd_mine(&reports, patterns.as_deref(), &out, pitch_mm),
        Command::EvalMining {
            pred,
            gold,
            resamples,
            seed,
        } => cmd_eval_mining(&pred, &gold, resamples, seed),
        Command::Gradcheck {
            seed,
            trials,
            inject_bug,
        } => cmd_gradcheck(seed, trials, inject_bug.as_deref()),
        Command::GenSynth { config, seed, out } => cmd_gen_synth(config.as_deref(), seed, &out),
        Command::Train {
            config,
            seed,
            corpus,
            out,
        } => cmd_train(config.as_deref(), seed, &corpus, &out),
        Command::Eval {
            config,
            seed,
            corpus,
            checkpoint,
            out,
        } => cmd_eval(config.as_deref(), seed, &corpus, &checkpoint, &out),
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))
}

fn cmd_mine(reports: &Path, patterns: Option<&Path>, out: &Path, pitch_mm: f64) -> Result<(), CliError> {
    if !(pitch_mm > 0.0) {
        return Err(CliError::usage(format!("--pitch-mm must be positive, got {pitch_mm}")));
    }
    let pattern_text = match patterns {
        Some(p) => fs::read_to_string(p).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?,
        None => DEFAULT_PATTERNS.to_string(),
    };
    let extractor = ReferenceExtractor::from_config(&pattern_text)?;
    let reports: Vec<Report> = read_jsonl(reports).map_err(at(reports))?;
    let mut stats = MiningStats::for_extractor(&extractor);
    let mut snippets: Vec<Snippet> = Vec::new();
    for r in &reports {
        r.validate().map_err(|e| CliError::usage(format!("report `{}`: {e}", r.report_id)))?;
        snippets.extend(mine_report(r, &extractor, pitch_mm, &mut stats)?);
    }
    write_jsonl(out, &snippets).map_err(at(out))?;
    println!("{} snippets from {} reports ({} references)", stats.snippets, stats.reports, stats.references);
    for (name, n) in &stats.per_pattern {
        println!("  {name:<16} {n}");
    }
    if stats.unknown_series + stats.out_of_range + stats.no_sentence > 0 {
        println!(
            "  skipped: {} unknown series, {} out of range, {} without a sentence",
            stats.unknown_series, stats.out_of_range, stats.no_sentence
        );
    }
    Ok(())
}

/// Either one reference per line or all references of a report on one line.
#[derive(Deserialize)]
#[serde(untagged)]
enum ReferenceLine {
    Report { report_id: String, references: Vec<(u32, u32)> },
    Single { report_id: String, series: u32, image: u32 },
}

fn reference_sets(path: &Path) -> Result<ReferenceSets, CliError> {
    let lines: Vec<ReferenceLine> = read_jsonl(path).map_err(at(path))?;
    let mut sets: ReferenceSets = BTreeMap::new();
    for line in lines {
        match line {
            ReferenceLine::Report { report_id, references } => {
                sets.entry(report_id).or_default().extend(references);
            }
            ReferenceLine::Single {
                report_id,
                series,
                image,
            } => {
                sets.entry(report_id).or_default().insert((series, image));
            }
        }
    }
    Ok(sets)
}

fn cmd_eval_mining(pred: &Path, gold: &Path, resamples: usize, seed: u64) -> Result<(), CliError> {
    let predicted = reference_sets(pred)?;
    let gold_sets = reference_sets(gold)?;
    let counts = mining_counts(&predicted, &gold_sets)?;
    let scores = scores_from_counts(&counts);
    if gold_sets.values().all(BTreeSet::is_empty) {
        eprintln!("warning: gold set is empty; precision and recall are 100 by convention");
    }
    let cfg = BootstrapConfig {
        resamples,
        level: 0.95,
        seed,
    };
    cfg.validate()?;
    let mut report = MetricsReport::new();
    if !counts.is_empty() {
        type Pick = fn(&ctvl_core::mining::MiningScores) -> f64;
        let picks: [(&str, Pick); 3] = [
            ("precision", |s| s.precision),
            ("recall", |s| s.recall),
            ("f1", |s| s.f1),
        ];
        for (name, pick) in picks {
            let ci = bootstrap_ci(&counts, |c| Ok(100.0 * pick(&scores_from_counts(c))), &cfg)?;
            report.insert(name, &ci);
        }
        print!("{}", report.render_table());
    } else {
        println!(
            "precision {:.1}  recall {:.1}  f1 {:.1}",
            100.0 * scores.precision,
            100.0 * scores.recall,
            100.0 * scores.f1
        );
    }
    println!(
        "{} true positives, {} predicted, {} gold",
        scores.true_positives, scores.predicted, scores.gold
    );
    Ok(())
}

fn cmd_gradcheck(seed: u64, trials: usize, inject_bug: Option<&str>) -> Result<(), CliError> {
    if trials == 0 {
        return Err(CliError::usage("--trials must be at least 1"));
    }
    let target = match inject_bug {
        Some(name) => Some(CheckedFunction::parse(name).ok_or_else(|| {
            CliError::usage(format!(
                "unknown function `{name}`; expected one of siglip, prompt, localization, head-backward"
            ))
        })?),
        None => None,
    };
    let tamper = move |f: CheckedFunction, g: &mut [f64]| {
        if Some(f) == target {
            g[0] += 1e-2 * g[0].abs().max(1.0);
        }
    };
    let start = std::time::Instant::now();
    let report = gradient_fidelity(seed, trials, target.map(|_| &tamper as _))?;
    for f in CheckedFunction::ALL {
        println!(
            "{:<14} trials {:>4}  max rel err {:.3e}",
            f.name(),
            trials,
            report.worst(f).unwrap_or(0.0)
        );
    }
    println!("tolerance {:.0e}, {:.2}s", report.tolerance, start.elapsed().as_secs_f64());
    if report.passed() {
        println!("PASS");
        Ok(())
    } else {
        for t in report.failures() {
            println!("FAIL {} trial {} ({}) rel err {:.3e}", t.function, t.trial, t.config, t.max_rel_err);
        }
        Err(CliError::failure(format!(
            "{} trial(s) exceeded the tolerance",
            report.failures().count()
        )))
    }
}

fn cmd_gen_synth(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(config, seed)?;
    let corpus = generate(&cfg.synth)?;
    create_dir(out)?;
    save_corpus(out, &corpus).map_err(at(out))?;
    let mut manifest = Manifest::new("gen-synth", &cfg.synth)?.seed("master", cfg.seed);
    if let Some(c) = config {
        manifest.input(c)?;
    }
    manifest.output(out);
    manifest.write(&out.join("manifest.json"))?;
    println!(
        "{} volumes, {} snippets, {} findings → {}",
        corpus.len(),
        corpus.snippets.len(),
        corpus.findings.len(),
        out.display()
    );
    Ok(())
}

fn cmd_train(config: Option<&Path>, seed: Option<u64>, corpus_dir: &Path, out: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(config, seed)?;
    let corpus = load_corpus(corpus_dir).map_err(at(corpus_dir))?;
    create_dir(out)?;
    let log_path = out.join("train_log.jsonl");
    let mut log = std::io::BufWriter::new(
        fs::File::create(&log_path).map_err(|e| CliError::io(format!("{}: {e}", log_path.display())))?,
    );
    let mut write_err = None;
    let state = train_with(&corpus, &cfg.train, |entry| {
        let line = serde_json::to_string(entry).expect("log entries serialize");
        println!("{line}");
        if let Err(e) = writeln!(log, "{line}") {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(CliError::io(format!("{}: {e}", log_path.display())));
    }
    log.flush().map_err(|e| CliError::io(format!("{}: {e}", log_path.display())))?;
    for note in &state.notes {
        eprintln!("note: {note}");
    }
    let mut manifest = Manifest::new("train", &cfg.train)?.seed("master", cfg.seed);
    let ckpt = out.join("checkpoint.rfkt");
    write_checkpoint(&ckpt, &state.model, state.step, &manifest.config_hash).map_err(at(&ckpt))?;
    if let Some(c) = config {
        manifest.input(c)?;
    }
    manifest.input(corpus_dir)?;
    manifest.output(&ckpt);
    manifest.output(&log_path);
    manifest.write(&out.join("manifest.json"))?;
    Ok(())
}

fn cmd_eval(
    config: Option<&Path>,
    seed: Option<u64>,
    corpus_dir: &Path,
    checkpoint: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let cfg = RunConfig::load(config, seed)?;
    let corpus = load_corpus(corpus_dir).map_err(at(corpus_dir))?;
    let ckpt = read_checkpoint(checkpoint).map_err(at(checkpoint))?;
    let report = evaluate_checkpoint(&ckpt.model, &corpus, &cfg.eval)?;
    create_dir(out)?;
    let metrics = out.join("metrics.json");
    fs::write(&metrics, report.to_json_pretty() + "\n").map_err(|e| CliError::io(format!("{}: {e}", metrics.display())))?;
    print!("{}", report.render_table());
    let mut manifest = Manifest::new("eval", &cfg.eval)?.seed("master", cfg.seed);
    if let Some(c) = config {
        manifest.input(c)?;
    }
    manifest.input(corpus_dir)?;
    manifest.input(checkpoint)?;
    manifest.output(&metrics);
    manifest.write(&out.join("manifest.json"))?;
    Ok(())
}
