//! Losses, the Adam optimizer and the training loop.
//!
//! The loss attaches only to the distribution produced after the last
//! routing iteration; earlier iterations carry no loss term and receive
//! gradient only through the final prediction. L2 regularization is added
//! analytically at the optimizer step (gradient `2 * lambda * theta` and
//! penalty `lambda * |theta|^2` in the reported loss), honoring the
//! per-parameter exemption of pretrained embedding rows.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::capsule::{Forward, ModelError, Prediction, SrlModel, PROB_FLOOR};
use crate::conll::{map_instances, map_instances_lenient, Corpus, PredicateInstance, Vocab};
use crate::embeddings::ContextualVectors;
use crate::encoder::word_dropout;
use crate::eval::{score, EvalReport};
use crate::params::{BoundParams, GradAccum, ParamStore};
use crate::tensor::{Graph, NodeId, Real};

/// How the over-words softmax of each role is reduced inside the
/// uniqueness loss: by its maximum (before the log) or by summing the
/// elementwise logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UniquenessReduction {
    #[default]
    Max,
    Sum,
}

impl std::str::FromStr for UniquenessReduction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" => Ok(UniquenessReduction::Max),
            "sum" => Ok(UniquenessReduction::Sum),
            other => Err(format!("unknown reduction '{other}' (expected max or sum)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// L2 coefficient lambda.
    pub l2: f64,
    /// Uniqueness-loss discount eta.
    pub eta: f64,
    pub uniqueness_reduction: UniquenessReduction,
    pub max_epochs: usize,
    /// Stop after this many consecutive epochs without a dev-F1
    /// improvement (0 stops at the first non-improving epoch).
    pub patience: usize,
    pub seed: u64,
    /// Global-norm gradient clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Optional early exit once dev token accuracy and exact match both
    /// reach these targets.
    pub stop_token_accuracy: Option<f64>,
    pub stop_exact_match: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.0001,
            batch_size: 32,
            l2: 0.0004,
            eta: 0.0,
            uniqueness_reduction: UniquenessReduction::Max,
            max_epochs: 200,
            patience: 20,
            seed: 1,
            clip_norm: Some(5.0),
            stop_token_accuracy: None,
            stop_exact_match: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.learning_rate <= 0.0 {
            return Err(ModelError::Config("learning rate must be positive".into()));
        }
        if self.l2 < 0.0 || self.eta < 0.0 {
            return Err(ModelError::Config(
                "l2 and eta coefficients must be non-negative".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch size must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(ModelError::Config("need at least one epoch".into()));
        }
        Ok(())
    }
}

/// Mean negative log-likelihood of the gold labels under the final
/// per-token distributions. Zero-probability labels are clamped at a
/// floor (the clamp count is on the graph) and the L2 penalty is added
/// outside the graph at the optimizer step.
pub fn main_loss<T: Real>(
    g: &mut Graph<T>,
    dist: NodeId,
    gold: &[usize],
) -> Result<NodeId, ModelError> {
    Ok(g.nll(dist, gold, T::from_f64(PROB_FLOOR))?)
}

/// Uniqueness loss over the final role logits: softmax over words per
/// role, reduced per the configured reading, averaged over roles.
pub fn uniqueness_loss<T: Real>(
    g: &mut Graph<T>,
    logits: NodeId,
    reduction: UniquenessReduction,
) -> Result<NodeId, ModelError> {
    let per_role = g.transpose(logits)?;
    let over_words = g.softmax(per_role)?;
    let reduced = match reduction {
        UniquenessReduction::Max => {
            let mx = g.row_max(over_words)?;
            g.log(mx, T::from_f64(PROB_FLOOR))
        }
        UniquenessReduction::Sum => {
            let lg = g.log(over_words, T::from_f64(PROB_FLOOR));
            g.row_sum(lg)?
        }
    };
    Ok(g.mean(reduced))
}

/// Total graph-borne loss: main loss plus `eta` times the uniqueness
/// term. With `eta == 0` this is exactly the main-loss node.
pub fn combined_loss<T: Real>(
    g: &mut Graph<T>,
    fwd: &Forward,
    gold: &[usize],
    eta: f64,
    reduction: UniquenessReduction,
) -> Result<NodeId, ModelError> {
    let ce = main_loss(g, fwd.dist, gold)?;
    if eta == 0.0 {
        return Ok(ce);
    }
    let lu = uniqueness_loss(g, fwd.logits, reduction)?;
    let scaled = g.scale(lu, T::from_f64(eta));
    Ok(g.add(ce, scaled)?)
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moments, aligned with the parameter store.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub step: u64,
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
    /// Steps skipped because of non-finite gradients.
    pub anomalies: usize,
}

impl<T: Real> AdamState<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        AdamState {
            step: 0,
            first: store
                .iter()
                .map(|p| vec![T::zero(); p.value.shape().numel()])
                .collect(),
            second: store
                .iter()
                .map(|p| vec![T::zero(); p.value.shape().numel()])
                .collect(),
            anomalies: 0,
        }
    }
}

/// One bias-corrected Adam update. Returns `false` (and counts an
/// anomaly) when the gradients contain non-finite values; parameters and
/// moments are untouched in that case.
pub fn adam_step<T: Real>(
    store: &mut ParamStore<T>,
    grads: &GradAccum<T>,
    state: &mut AdamState<T>,
    alpha: f64,
) -> bool {
    if !grads.is_finite() {
        state.anomalies += 1;
        return false;
    }
    state.step += 1;
    let t = state.step as i32;
    let beta1 = T::from_f64(ADAM_BETA1);
    let beta2 = T::from_f64(ADAM_BETA2);
    let eps = T::from_f64(ADAM_EPS);
    let alpha = T::from_f64(alpha);
    let one = T::one();
    let corr1 = one - beta1.powi(t);
    let corr2 = one - beta2.powi(t);
    for idx in 0..store.len() {
        let g = grads.get(idx);
        let m = &mut state.first[idx];
        let v = &mut state.second[idx];
        let theta = store.by_idx_mut(idx).value.data_mut();
        for ((m_i, v_i), (t_i, &g_i)) in m
            .iter_mut()
            .zip(v.iter_mut())
            .zip(theta.iter_mut().zip(g))
        {
            *m_i = beta1 * *m_i + (one - beta1) * g_i;
            *v_i = beta2 * *v_i + (one - beta2) * g_i * g_i;
            let m_hat = *m_i / corr1;
            let v_hat = *v_i / corr2;
            *t_i = *t_i - alpha * m_hat / (v_hat.sqrt() + eps);
        }
    }
    true
}

/// A corpus with its instances mapped to vocabulary ids.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub corpus: Corpus,
    pub instances: Vec<PredicateInstance>,
}

impl Dataset {
    /// Strict mapping: unknown role labels are an error (training data).
    pub fn prepare(corpus: Corpus, vocab: &Vocab) -> Result<Dataset, ModelError> {
        let instances = map_instances(&corpus, vocab)?;
        Ok(Dataset { corpus, instances })
    }

    /// Lenient mapping: unknown role labels become unmatchable ids
    /// (held-out data under a train-built vocabulary).
    pub fn prepare_lenient(corpus: Corpus, vocab: &Vocab) -> Dataset {
        let (instances, unmapped) = map_instances_lenient(&corpus, vocab);
        if unmapped > 0 {
            log::warn!("{unmapped} role labels outside the training vocabulary");
        }
        Dataset { corpus, instances }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn gold_roles(&self) -> Vec<Vec<usize>> {
        self.instances.iter().map(|i| i.roles.clone()).collect()
    }
}

/// Loss value and gradients for a single instance (used by training and
/// by the finite-difference checks).
pub fn instance_gradients<T: Real>(
    model: &SrlModel<T>,
    input: &crate::capsule::ModelInput<T>,
    gold: &[usize],
    eta: f64,
    reduction: UniquenessReduction,
    accum: &mut GradAccum<T>,
) -> Result<(f64, usize), ModelError> {
    let mut g = Graph::new();
    let mut bound = BoundParams::new(&model.params, true);
    let fwd = model.forward(&mut g, &mut bound, input, None)?;
    let loss = combined_loss(&mut g, &fwd, gold, eta, reduction)?;
    g.backward(loss)?;
    bound.collect_grads(&g, accum);
    Ok((g.value(loss).item().as_f64(), g.log_floor_hits()))
}

/// Loss value only, no gradient bookkeeping.
pub fn instance_loss_value<T: Real>(
    model: &SrlModel<T>,
    input: &crate::capsule::ModelInput<T>,
    gold: &[usize],
    eta: f64,
    reduction: UniquenessReduction,
) -> Result<f64, ModelError> {
    let mut g = Graph::new();
    let mut bound = BoundParams::new(&model.params, false);
    let fwd = model.forward(&mut g, &mut bound, input, None)?;
    let loss = combined_loss(&mut g, &fwd, gold, eta, reduction)?;
    Ok(g.value(loss).item().as_f64())
}

/// Predict every instance of a dataset with frozen parameters.
pub fn predict_dataset<T: Real>(
    model: &SrlModel<T>,
    data: &Dataset,
    t_override: Option<usize>,
    sidecar: Option<&ContextualVectors<T>>,
) -> Result<Vec<Prediction<T>>, ModelError> {
    data.instances
        .iter()
        .map(|inst| {
            let sentence = &data.corpus.sentences[inst.sentence];
            let input = model.make_input(sentence, inst, sidecar)?;
            model.predict(&input, t_override)
        })
        .collect()
}

/// Score a model on a dataset; returns the report and the predicted
/// label sequences.
pub fn evaluate_model<T: Real>(
    model: &SrlModel<T>,
    data: &Dataset,
    t_override: Option<usize>,
    sidecar: Option<&ContextualVectors<T>>,
) -> Result<(EvalReport, Vec<Vec<usize>>), ModelError> {
    let predictions = predict_dataset(model, data, t_override, sidecar)?;
    let labels: Vec<Vec<usize>> = predictions.iter().map(|p| p.labels()).collect();
    let gold = data.gold_roles();
    let report = score(&gold, &labels)
        .map_err(|e| ModelError::Config(format!("evaluation failed: {e}")))?;
    Ok((report, labels))
}

/// One line of the JSON training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_p: f64,
    pub dev_r: f64,
    pub dev_f1: f64,
    pub dev_em: f64,
    pub dev_token_accuracy: f64,
    pub seconds: f64,
    pub log_floor_hits: usize,
    pub skipped_steps: usize,
}

#[derive(Debug)]
pub struct TrainOutcome<T: Real> {
    /// Model restored to the best-dev-F1 parameters.
    pub model: SrlModel<T>,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_f1: f64,
}

/// Mini-batch training with per-epoch dev evaluation, best-checkpoint
/// retention and early stopping on stale dev F1.
pub fn train<T: Real>(
    mut model: SrlModel<T>,
    train_data: &Dataset,
    dev_data: &Dataset,
    cfg: &TrainConfig,
    sidecar: Option<&ContextualVectors<T>>,
) -> Result<TrainOutcome<T>, ModelError> {
    cfg.validate()?;
    if train_data.is_empty() || dev_data.is_empty() {
        return Err(ModelError::Config("training and dev corpora must be nonempty".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(&model.params);
    let mut log = Vec::new();
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params: Option<ParamStore<T>> = None;
    let mut stale = 0usize;

    // inputs resolved once; word dropout re-randomizes ids per epoch
    let inputs: Vec<(crate::capsule::ModelInput<T>, &[usize])> = train_data
        .instances
        .iter()
        .map(|inst| {
            let sentence = &train_data.corpus.sentences[inst.sentence];
            let input = model.make_input(sentence, inst, sidecar)?;
            Ok((input, inst.roles.as_slice()))
        })
        .collect::<Result<_, ModelError>>()?;

    let mut order: Vec<usize> = (0..inputs.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut epoch_ce = 0.0f64;
        let mut floor_hits = 0usize;
        let skipped_before = adam.anomalies;
        for batch in order.chunks(cfg.batch_size) {
            let mut accum = GradAccum::zeros_like(&model.params);
            for &idx in batch {
                let (input, gold) = &inputs[idx];
                let mut input = input.clone();
                word_dropout(
                    &mut input.token_ids,
                    model.config.encoder.word_dropout,
                    &mut rng,
                );
                let (loss, hits) = instance_gradients(
                    &model,
                    &input,
                    gold,
                    cfg.eta,
                    cfg.uniqueness_reduction,
                    &mut accum,
                )?;
                epoch_ce += loss;
                floor_hits += hits;
            }
            accum.scale(T::from_f64(1.0 / batch.len() as f64));
            accum.add_l2(&model.params, T::from_f64(cfg.l2));
            if let Some(clip) = cfg.clip_norm {
                let norm = accum.global_norm().as_f64();
                if norm.is_finite() && norm > clip {
                    accum.scale(T::from_f64(clip / norm));
                }
            }
            adam_step(&mut model.params, &accum, &mut adam, cfg.learning_rate);
        }
        let train_loss =
            epoch_ce / inputs.len() as f64 + cfg.l2 * model.params.l2_penalty().as_f64();
        if !train_loss.is_finite() {
            return Err(ModelError::Training(format!(
                "non-finite training loss at epoch {epoch}"
            )));
        }
        let (report, _) = evaluate_model(&model, dev_data, None, sidecar)?;
        if !report.f1.is_finite() {
            return Err(ModelError::Training(format!(
                "dev F1 became non-finite at epoch {epoch}"
            )));
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            dev_p: report.precision,
            dev_r: report.recall,
            dev_f1: report.f1,
            dev_em: report.exact_match,
            dev_token_accuracy: report.token_accuracy,
            seconds: started.elapsed().as_secs_f64(),
            log_floor_hits: floor_hits,
            skipped_steps: adam.anomalies - skipped_before,
        };
        log::info!(
            "epoch {epoch}: loss {:.6} dev F1 {:.4} EM {:.4}",
            record.train_loss,
            record.dev_f1,
            record.dev_em
        );
        log.push(record);
        if report.f1 > best_f1 {
            best_f1 = report.f1;
            best_epoch = epoch;
            best_params = Some(model.params.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale > cfg.patience {
                break;
            }
        }
        let acc_target = cfg.stop_token_accuracy.unwrap_or(f64::INFINITY);
        let em_target = cfg.stop_exact_match.unwrap_or(f64::INFINITY);
        if report.token_accuracy >= acc_target && report.exact_match >= em_target {
            break;
        }
    }
    if let Some(params) = best_params {
        model.params = params;
    }
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        best_f1,
    })
}
