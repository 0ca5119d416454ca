//! High-level jobs shared by the CLI and the C bindings: run a training
//! job from a config, label a file with a checkpoint, score two files.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::capsule::{Checkpoint, ModelError, SrlModel};
use crate::config::RunConfig;
use crate::conll::{read_conll, roles_to_labels, write_conll, Corpus, Vocab};
use crate::embeddings::{load_contextual_vectors, load_embeddings, pretrained_rows, ContextualVectors};
use crate::eval::{score, EvalReport};
use crate::tensor::Real;
use crate::training::{predict_dataset, train, Dataset};
use crate::trajectory::TrajectoryDump;

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    pub checkpoint: PathBuf,
}

/// Train per the config and write checkpoint, JSONL log and resolved
/// config under `cfg.out_dir`.
pub fn run_training_job(cfg: &RunConfig) -> Result<TrainSummary, ModelError> {
    match cfg.precision.as_str() {
        "f64" => run_training_typed::<f64>(cfg),
        "f32" => run_training_typed::<f32>(cfg),
        other => Err(ModelError::Config(format!(
            "unknown precision '{other}' (expected f64 or f32)"
        ))),
    }
}

fn run_training_typed<T: Real>(cfg: &RunConfig) -> Result<TrainSummary, ModelError> {
    let train_path = cfg.train.as_ref().ok_or_else(|| {
        ModelError::Config("train corpus path missing (set `train` or pass --train)".into())
    })?;
    let dev_path = cfg.dev.as_ref().ok_or_else(|| {
        ModelError::Config("dev corpus path missing (set `dev` or pass --dev)".into())
    })?;
    let train_corpus = read_conll(train_path)?;
    let dev_corpus = read_conll(dev_path)?;
    let vocab = Vocab::build(&train_corpus);
    let train_set = Dataset::prepare(train_corpus, &vocab)?;
    let dev_set = Dataset::prepare_lenient(dev_corpus, &vocab);

    let pretrained = match &cfg.embeddings {
        None => None,
        Some(path) => {
            let table = load_embeddings::<T>(path, cfg.d_e)?;
            Some(pretrained_rows(&table, &vocab, cfg.d_e)?)
        }
    };
    let sidecar: Option<ContextualVectors<T>> = match &cfg.contextual_vectors {
        None => None,
        Some(path) => Some(load_contextual_vectors(path, cfg.d_e)?),
    };

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let model = SrlModel::<T>::new(cfg.model_config(), vocab, &mut rng, pretrained)?;
    let outcome = train(model, &train_set, &dev_set, &cfg.train_config(), sidecar.as_ref())?;

    std::fs::create_dir_all(&cfg.out_dir).map_err(|source| ModelError::Io {
        path: cfg.out_dir.display().to_string(),
        source,
    })?;
    let ckpt_path = cfg.out_dir.join("checkpoint.json");
    outcome.model.save(&ckpt_path)?;
    let mut log_text = String::new();
    for record in &outcome.log {
        log_text.push_str(&serde_json::to_string(record).expect("record serializes"));
        log_text.push('\n');
    }
    let log_path = cfg.out_dir.join("train.log.jsonl");
    std::fs::write(&log_path, log_text).map_err(|source| ModelError::Io {
        path: log_path.display().to_string(),
        source,
    })?;
    let resolved = cfg.out_dir.join("config.resolved");
    std::fs::write(&resolved, cfg.to_toml()).map_err(|source| ModelError::Io {
        path: resolved.display().to_string(),
        source,
    })?;
    Ok(TrainSummary {
        epochs: outcome.log.len(),
        best_epoch: outcome.best_epoch,
        best_dev_f1: outcome.best_f1.max(0.0),
        checkpoint: ckpt_path,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictSummary {
    pub sentences: usize,
    pub instances: usize,
    pub output: PathBuf,
}

/// Label `input` with a loaded model, writing CoNLL columns to `output`
/// and optionally the per-iteration coupling dump.
pub fn predict_file<T: Real>(
    model: &SrlModel<T>,
    input: &Path,
    output: &Path,
    t_override: Option<usize>,
    dump_trajectory: Option<&Path>,
    sidecar: Option<&ContextualVectors<T>>,
) -> Result<PredictSummary, ModelError> {
    let corpus = read_conll(input)?;
    let data = Dataset::prepare_lenient(corpus, &model.vocab);
    let predictions = predict_dataset(model, &data, t_override, sidecar)?;
    let labels: Vec<Vec<String>> = predictions
        .iter()
        .map(|p| roles_to_labels(&p.labels(), &model.vocab))
        .collect::<Result<_, _>>()?;
    if let Some(parent) = output.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| ModelError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
    }
    write_conll(output, &data.corpus, &labels)?;
    if let Some(dump_path) = dump_trajectory {
        let dump = TrajectoryDump::from_predictions(
            model.vocab.role_labels().to_vec(),
            &predictions,
            &data.instances,
        );
        dump.save(dump_path)?;
    }
    Ok(PredictSummary {
        sentences: data.corpus.sentences.len(),
        instances: data.instances.len(),
        output: output.to_path_buf(),
    })
}

/// Load a checkpoint and label a file, dispatching on the stored
/// precision.
pub fn predict_with_checkpoint(
    checkpoint: &Path,
    input: &Path,
    output: &Path,
    t_override: Option<usize>,
    dump_trajectory: Option<&Path>,
    contextual_vectors: Option<&Path>,
) -> Result<PredictSummary, ModelError> {
    let cp = Checkpoint::load(checkpoint)?;
    match cp.precision.as_str() {
        "f64" => {
            let model = SrlModel::<f64>::from_checkpoint(&cp)?;
            let sidecar = contextual_vectors
                .map(|p| load_contextual_vectors::<f64>(p, model.config.encoder.d_e))
                .transpose()?;
            predict_file(&model, input, output, t_override, dump_trajectory, sidecar.as_ref())
        }
        "f32" => {
            let model = SrlModel::<f32>::from_checkpoint(&cp)?;
            let sidecar = contextual_vectors
                .map(|p| load_contextual_vectors::<f32>(p, model.config.encoder.d_e))
                .transpose()?;
            predict_file(&model, input, output, t_override, dump_trajectory, sidecar.as_ref())
        }
        other => Err(ModelError::Checkpoint(format!(
            "checkpoint has unknown precision '{other}'"
        ))),
    }
}

/// Structural alignment check for gold/predicted file pairs.
pub fn check_aligned(gold: &Corpus, predicted: &Corpus) -> Result<(), ModelError> {
    let fail = |msg: String| Err(ModelError::Config(format!("misaligned: {msg}")));
    if gold.sentences.len() != predicted.sentences.len() {
        return fail(format!(
            "{} gold sentences vs {} predicted",
            gold.sentences.len(),
            predicted.sentences.len()
        ));
    }
    for (q, (g, p)) in gold.sentences.iter().zip(&predicted.sentences).enumerate() {
        if g.len() != p.len() {
            return fail(format!("sentence {q} token counts differ"));
        }
    }
    if gold.instances.len() != predicted.instances.len() {
        return fail(format!(
            "{} gold instances vs {} predicted",
            gold.instances.len(),
            predicted.instances.len()
        ));
    }
    for (q, (g, p)) in gold.instances.iter().zip(&predicted.instances).enumerate() {
        if g.sentence != p.sentence || g.predicate_index != p.predicate_index {
            return fail(format!("instance {q} predicates differ"));
        }
    }
    Ok(())
}

/// Role-id views of a gold/predicted pair under their union vocabulary.
pub fn aligned_role_ids(
    gold: &Corpus,
    predicted: &Corpus,
) -> (Vec<Vec<usize>>, Vec<Vec<usize>>, Vocab) {
    let vocab = Vocab::build_many(&[gold, predicted]);
    let (g, _) = crate::conll::map_instances_lenient(gold, &vocab);
    let (p, _) = crate::conll::map_instances_lenient(predicted, &vocab);
    (
        g.into_iter().map(|i| i.roles).collect(),
        p.into_iter().map(|i| i.roles).collect(),
        vocab,
    )
}

/// Score one predicted file against gold.
pub fn evaluate_files(gold: &Path, predicted: &Path) -> Result<EvalReport, ModelError> {
    let gold_corpus = read_conll(gold)?;
    let pred_corpus = read_conll(predicted)?;
    check_aligned(&gold_corpus, &pred_corpus)?;
    let (gold_ids, pred_ids, _) = aligned_role_ids(&gold_corpus, &pred_corpus);
    score(&gold_ids, &pred_ids).map_err(|e| ModelError::Config(e.to_string()))
}
