//! Command-line frontend: train, predict, evaluate, analyze, generate.
//!
//! Every command is deterministic given its config and seed; failures
//! exit nonzero with a single `error: ...` line on stderr.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use capsrl::capsule::Variant;
use capsrl::config::RunConfig;
use capsrl::conll::{map_instances_lenient, read_conll, Vocab};
use capsrl::eval::{
    bin_label, breakdown, count_duplicate_violations, frequent_labels, signlog,
    transition_csv, transitions, BreakdownKey, DuplicateReport, EvalReport,
};
use capsrl::pipeline::{
    aligned_role_ids, check_aligned, evaluate_files, predict_with_checkpoint, run_training_job,
};
use capsrl::synthetic::{generate, GrammarSpec};
use capsrl::training::UniquenessReduction;
use capsrl::trajectory::TrajectoryDump;

#[derive(Parser)]
#[command(name = "capsrl", version, about = "Capsule-routing semantic role labeler")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoint, log and resolved config.
    Train(TrainArgs),
    /// Label a CoNLL file with a trained model.
    Predict(PredictArgs),
    /// Score a predicted CoNLL file against gold.
    Evaluate(EvaluateArgs),
    /// Duplicate-argument, transition and breakdown analyses.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic corpus (train/dev/test split).
    Generate(GenerateArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// TOML run configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// baseline | mean_capsules | capsule_no_global | capsule_global
    #[arg(long)]
    variant: Option<String>,
    /// Routing iterations T.
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Uniqueness-loss discount.
    #[arg(long)]
    eta: Option<f64>,
    /// max | sum
    #[arg(long)]
    uniqueness_reduction: Option<String>,
    /// Pretrained embedding text file.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Sidecar contextual-vector file.
    #[arg(long)]
    contextual_vectors: Option<PathBuf>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// f64 | f32
    #[arg(long)]
    precision: Option<String>,
    #[arg(long)]
    d_e: Option<usize>,
    #[arg(long)]
    d_l: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    capsule_k: Option<usize>,
    #[arg(long)]
    word_dropout: Option<f64>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Output CoNLL path (default: <out-dir>/predictions.conll).
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Override the trained iteration count at inference.
    #[arg(long)]
    iterations: Option<usize>,
    /// Write per-iteration coupling distributions to this JSONL file.
    #[arg(long)]
    dump_trajectory: Option<PathBuf>,
    #[arg(long)]
    contextual_vectors: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    predicted: PathBuf,
    /// Also write reports/evaluation.{json,txt} under this directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// duplicates | transitions | breakdown
    #[arg(long)]
    mode: String,
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long)]
    predicted: Option<PathBuf>,
    /// Trajectory dump from `predict --dump-trajectory`.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Labels appearing more often than this in gold are listed in
    /// transition matrices.
    #[arg(long, default_value_t = 50)]
    threshold: usize,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// TOML grammar spec; defaults are used when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Number of training sentences.
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Generate(args) => cmd_generate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

type CliError = Box<dyn std::error::Error>;

fn merged_config(args: &TrainArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if args.train.is_some() {
        cfg.train = args.train.clone();
    }
    if args.dev.is_some() {
        cfg.dev = args.dev.clone();
    }
    if args.embeddings.is_some() {
        cfg.embeddings = args.embeddings.clone();
    }
    if args.contextual_vectors.is_some() {
        cfg.contextual_vectors = args.contextual_vectors.clone();
    }
    if let Some(v) = &args.out_dir {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = &args.variant {
        cfg.variant = Variant::from_str(v)?;
    }
    if let Some(v) = &args.uniqueness_reduction {
        cfg.uniqueness_reduction = UniquenessReduction::from_str(v)?;
    }
    if let Some(v) = &args.precision {
        cfg.precision = v.clone();
    }
    macro_rules! copy {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field {
                cfg.$field = v;
            })*
        };
    }
    copy!(
        iterations,
        seed,
        eta,
        learning_rate,
        batch_size,
        l2,
        max_epochs,
        patience,
        d_e,
        d_l,
        layers,
        capsule_k,
        word_dropout
    );
    Ok(cfg)
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let cfg = merged_config(&args)?;
    let summary = run_training_job(&cfg)?;
    println!(
        "trained {} for {} epochs; best dev F1 {:.4} at epoch {}; checkpoint {}",
        cfg.variant.as_str(),
        summary.epochs,
        summary.best_dev_f1,
        summary.best_epoch,
        summary.checkpoint.display()
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<(), CliError> {
    let output = match &args.output {
        Some(p) => p.clone(),
        None => {
            std::fs::create_dir_all(&args.out_dir)?;
            args.out_dir.join("predictions.conll")
        }
    };
    let summary = predict_with_checkpoint(
        &args.checkpoint,
        &args.input,
        &output,
        args.iterations,
        args.dump_trajectory.as_deref(),
        args.contextual_vectors.as_deref(),
    )?;
    println!(
        "labeled {} instances in {} sentences -> {}",
        summary.instances,
        summary.sentences,
        summary.output.display()
    );
    Ok(())
}

fn reports_dir(out_dir: &Path) -> Result<PathBuf, CliError> {
    let dir = out_dir.join("reports");
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let report = evaluate_files(&args.gold, &args.predicted)?;
    println!("{report}");
    if let Some(out_dir) = &args.out_dir {
        let dir = reports_dir(out_dir)?;
        std::fs::write(
            dir.join("evaluation.json"),
            serde_json::to_string_pretty(&report)?,
        )?;
        std::fs::write(dir.join("evaluation.txt"), format!("{report}\n"))?;
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    match args.mode.as_str() {
        "duplicates" => analyze_duplicates(&args),
        "transitions" => analyze_transitions(&args),
        "breakdown" => analyze_breakdown(&args),
        other => Err(format!("unknown analyze mode '{other}'").into()),
    }
}

fn read_role_ids(path: &Path) -> Result<Vec<Vec<usize>>, CliError> {
    let corpus = read_conll(path)?;
    let vocab = Vocab::build(&corpus);
    let (instances, _) = map_instances_lenient(&corpus, &vocab);
    Ok(instances.into_iter().map(|i| i.roles).collect())
}

fn analyze_duplicates(args: &AnalyzeArgs) -> Result<(), CliError> {
    #[derive(serde::Serialize)]
    struct DuplicatesOut {
        per_iteration: Vec<DuplicateReport>,
        gold_violations: Option<usize>,
    }

    let mut out = DuplicatesOut {
        per_iteration: Vec::new(),
        gold_violations: None,
    };
    if let Some(path) = &args.trajectory {
        let dump = TrajectoryDump::load(path)?;
        for labeling in dump.labelings() {
            out.per_iteration.push(count_duplicate_violations(&labeling));
        }
    } else if let Some(path) = &args.predicted {
        out.per_iteration
            .push(count_duplicate_violations(&read_role_ids(path)?));
    } else {
        return Err("duplicates mode needs --predicted or --trajectory".into());
    }
    if let Some(path) = &args.gold {
        out.gold_violations = Some(count_duplicate_violations(&read_role_ids(path)?).violations);
    }
    for (t, rep) in out.per_iteration.iter().enumerate() {
        println!(
            "iteration {}: {} of {} propositions violate uniqueness",
            t + 1,
            rep.violations,
            rep.propositions
        );
    }
    if let Some(g) = out.gold_violations {
        println!("gold: {g} violations");
    }
    if let Some(out_dir) = &args.out_dir {
        let dir = reports_dir(out_dir)?;
        std::fs::write(
            dir.join("duplicates.json"),
            serde_json::to_string_pretty(&out)?,
        )?;
    }
    Ok(())
}

fn analyze_transitions(args: &AnalyzeArgs) -> Result<(), CliError> {
    let traj_path = args
        .trajectory
        .as_ref()
        .ok_or("transitions mode needs --trajectory")?;
    let gold_path = args.gold.as_ref().ok_or("transitions mode needs --gold")?;
    let dump = TrajectoryDump::load(traj_path)?;
    let gold_corpus = read_conll(gold_path)?;
    // map gold labels through the dump's label list; labels outside it can
    // never match a predicted label
    let label_index: BTreeMap<&str, usize> = dump
        .meta
        .labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let gold_ids: Vec<Vec<usize>> = gold_corpus
        .instances
        .iter()
        .map(|inst| {
            inst.roles
                .iter()
                .map(|label| {
                    if label == "_" {
                        0
                    } else {
                        label_index
                            .get(label.as_str())
                            .copied()
                            .unwrap_or(usize::MAX)
                    }
                })
                .collect()
        })
        .collect();
    let labelings = dump.labelings();
    let n_labels = dump.meta.labels.len();
    let matrices = transitions(&labelings, &gold_ids, n_labels)?;
    let keep = frequent_labels(&gold_ids, n_labels, args.threshold);

    #[derive(serde::Serialize)]
    struct MatrixOut {
        iteration_pair: (usize, usize),
        total_changes: u64,
        correct_total: u64,
        wrong_total: u64,
        /// signlog-transformed counts for display, kept labels only
        signlog_correct: Vec<Vec<f64>>,
        signlog_wrong: Vec<Vec<f64>>,
        labels: Vec<String>,
    }

    let mut summaries = Vec::new();
    for m in &matrices {
        let (a, b) = m.iteration_pair;
        println!(
            "iterations {}->{}: {} changes ({} correct, {} wrong)",
            a + 1,
            b + 1,
            m.total_changes(),
            m.correct.iter().sum::<u64>(),
            m.wrong.iter().sum::<u64>()
        );
        let table = |counts: &[u64]| -> Vec<Vec<f64>> {
            keep.iter()
                .map(|&from| {
                    keep.iter()
                        .map(|&to| signlog(counts[from * n_labels + to] as f64))
                        .collect()
                })
                .collect()
        };
        summaries.push(MatrixOut {
            iteration_pair: m.iteration_pair,
            total_changes: m.total_changes(),
            correct_total: m.correct.iter().sum(),
            wrong_total: m.wrong.iter().sum(),
            signlog_correct: table(&m.correct),
            signlog_wrong: table(&m.wrong),
            labels: keep.iter().map(|&i| dump.meta.labels[i].clone()).collect(),
        });
    }
    if let Some(out_dir) = &args.out_dir {
        let dir = reports_dir(out_dir)?;
        for m in &matrices {
            let (a, b) = m.iteration_pair;
            let base = format!("transitions_{}_{}", a + 1, b + 1);
            std::fs::write(
                dir.join(format!("{base}.correct.csv")),
                transition_csv(&m.correct, n_labels, &keep, &dump.meta.labels),
            )?;
            std::fs::write(
                dir.join(format!("{base}.wrong.csv")),
                transition_csv(&m.wrong, n_labels, &keep, &dump.meta.labels),
            )?;
        }
        std::fs::write(
            dir.join("transitions.json"),
            serde_json::to_string_pretty(&summaries)?,
        )?;
    }
    Ok(())
}

fn analyze_breakdown(args: &AnalyzeArgs) -> Result<(), CliError> {
    let gold_path = args.gold.as_ref().ok_or("breakdown mode needs --gold")?;
    let pred_path = args
        .predicted
        .as_ref()
        .ok_or("breakdown mode needs --predicted")?;
    let gold = read_conll(gold_path)?;
    let predicted = read_conll(pred_path)?;
    check_aligned(&gold, &predicted)?;
    let (gold_ids, pred_ids, _) = aligned_role_ids(&gold, &predicted);

    #[derive(serde::Serialize)]
    struct BreakdownOut {
        key: BreakdownKey,
        bins: BTreeMap<String, EvalReport>,
    }

    let mut outputs = Vec::new();
    for key in [
        BreakdownKey::SentenceLengthDecade,
        BreakdownKey::ArgumentCount,
    ] {
        let bins = breakdown(&gold_ids, &pred_ids, key)?;
        let name = match key {
            BreakdownKey::SentenceLengthDecade => "sentence length",
            BreakdownKey::ArgumentCount => "argument count",
        };
        println!("by {name}:");
        println!(
            "  {:>10}  {:>8} {:>8} {:>8} {:>8} {:>6}",
            "bin", "P", "R", "F1", "EM", "props"
        );
        let mut named = BTreeMap::new();
        for (bin, report) in &bins {
            println!(
                "  {:>10}  {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>6}",
                bin_label(key, *bin),
                report.precision,
                report.recall,
                report.f1,
                report.exact_match,
                report.propositions
            );
            named.insert(bin_label(key, *bin), report.clone());
        }
        outputs.push(BreakdownOut { key, bins: named });
    }
    if let Some(out_dir) = &args.out_dir {
        let dir = reports_dir(out_dir)?;
        std::fs::write(
            dir.join("breakdown.json"),
            serde_json::to_string_pretty(&outputs)?,
        )?;
    }
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str::<GrammarSpec>(&text)?
        }
        None => GrammarSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let corpus = generate(&spec, args.count)?;
    let paths = corpus.write(&args.out_dir)?;
    println!(
        "wrote {} train / {} dev / {} test sentences under {}",
        corpus.train.sentences.len(),
        corpus.dev.sentences.len(),
        corpus.test.sentences.len(),
        args.out_dir.display()
    );
    for p in paths {
        println!("  {}", p.display());
    }
    Ok(())
}
