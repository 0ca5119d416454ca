//! Word capsules, role capsules and dynamic routing, plus the factorized
//! baseline and the mean-of-capsules head.
//!
//! Per (word i, role j) the word capsule layer computes a capsule
//! `u[i][j]` of size K from the encoder state and the predicate embedding.
//! Routing then alternates, for T iterations: couplings `c = softmax(b)`
//! per word over roles, role capsules `v[j] = squash(sum_i c[i][j]
//! u[i][j])`, and the logit update `b[i][j] += v[j]' W u[i][j]`, optionally
//! plus a global-node term `g' Wg u[i][j]` with `g = Wp (s_1 ++ ... ++
//! s_m)`. The prediction after the last iteration is `softmax(b)` per
//! word; the loss is attached only there, and gradients flow through every
//! iteration.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conll::{DataError, PredicateInstance, Sentence, Vocab};
use crate::embeddings::ContextualVectors;
use crate::encoder::{self, EncoderConfig};
use crate::params::{BoundParams, L2Policy, ParamEntry, ParamStore};
use crate::tensor::{Graph, NodeId, Real, Shape, Tensor, TensorError};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Probability floor used inside `log` to guard zero-probability labels.
pub const PROB_FLOOR: f64 = 1e-12;
/// Epsilon guard for the squash singularity at the zero vector.
pub const SQUASH_EPS: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("empty sentence cannot be encoded")]
    EmptySentence,
    #[error("non-finite value in routing iteration {0}")]
    NonFinite(usize),
    #[error("iteration count must be at least 1")]
    BadIterations,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("training aborted: {0}")]
    Training(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Model head selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Per-role bilinear logits, no capsules.
    Baseline,
    /// Word capsules averaged over the capsule axis, no routing.
    MeanCapsules,
    /// Word and role capsules with dynamic routing.
    CapsuleNoGlobal,
    /// Routing plus the global proposition node.
    CapsuleGlobal,
}

impl Variant {
    pub fn uses_routing(self) -> bool {
        matches!(self, Variant::CapsuleNoGlobal | Variant::CapsuleGlobal)
    }

    pub fn uses_word_capsules(self) -> bool {
        !matches!(self, Variant::Baseline)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::MeanCapsules => "mean_capsules",
            Variant::CapsuleNoGlobal => "capsule_no_global",
            Variant::CapsuleGlobal => "capsule_global",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Variant::Baseline),
            "mean_capsules" => Ok(Variant::MeanCapsules),
            "capsule_no_global" => Ok(Variant::CapsuleNoGlobal),
            "capsule_global" => Ok(Variant::CapsuleGlobal),
            other => Err(format!(
                "unknown variant '{other}' (expected baseline, mean_capsules, capsule_no_global or capsule_global)"
            )),
        }
    }
}

/// Head variant plus the trained number of routing iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMode {
    pub variant: Variant,
    pub iterations: usize,
}

impl ModelMode {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.iterations == 0 {
            return Err(ModelError::BadIterations);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// Capsule size K.
    pub capsule_k: usize,
    pub mode: ModelMode,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.encoder.validate()?;
        self.mode.validate()?;
        if self.capsule_k == 0 {
            return Err(ModelError::Config("capsule size must be positive".into()));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            capsule_k: 16,
            mode: ModelMode {
                variant: Variant::CapsuleGlobal,
                iterations: 2,
            },
        }
    }
}

/// Init for the bilinear map families of the heads. These contract
/// `d_l * d_e` products of small encoder and embedding values, so the
/// range is scaled against the fan-in to keep capsule activations out of
/// the squash's vanishing-gradient region around the zero vector.
fn bilinear_init<T: Real>(rng: &mut impl Rng, d_l: usize, d_e: usize) -> Tensor<T> {
    let scale = 500.0 / (d_l as f64 * d_e as f64).sqrt();
    let mut t: Tensor<T> = encoder::uniform_tensor(rng, Shape::matrix(d_l, d_e));
    for v in t.data_mut() {
        *v = *v * T::from_f64(scale);
    }
    t
}

fn baseline_name(role: usize) -> String {
    format!("baseline.w{role}")
}

fn wordcap_name(role: usize, k: usize) -> String {
    format!("wordcaps.w{role}.{k}")
}

pub const ROUTE_W: &str = "route.w";
pub const GLOBAL_ROUTE_W: &str = "route.wg";
pub const GLOBAL_PROJ: &str = "global.proj";

/// One routing cycle's graph nodes.
pub struct IterNodes {
    /// b at the start of the cycle (all zeros for the first one).
    pub logits_in: NodeId,
    /// softmax of `logits_in`, the couplings the cycle pools with.
    pub couplings: NodeId,
    /// Squashed role capsules v, `[m, K]`.
    pub capsules: NodeId,
    /// Global node g, `[K]`, when enabled.
    pub global: Option<NodeId>,
    /// b after the cycle's update.
    pub logits_out: NodeId,
}

/// Result of running the head on one instance, as graph nodes.
pub struct Forward {
    /// Final per-token role distributions `[n, m]`.
    pub dist: NodeId,
    /// Logits behind `dist` (`b^(T)` for routing heads).
    pub logits: NodeId,
    pub cycles: Vec<IterNodes>,
}

/// Snapshot of one routing iteration, extracted from the graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoutingState<T> {
    pub iteration: usize,
    /// Role logits b at the start of this iteration, `[n, m]`.
    pub logits: Tensor<T>,
    /// Couplings `softmax(logits)`; rows sum to one.
    pub couplings: Tensor<T>,
    /// Role capsules v, `[m, K]`.
    pub capsules: Tensor<T>,
    /// Global node, `[K]`.
    pub global: Option<Tensor<T>>,
}

/// Value-level output of `predict`.
#[derive(Debug, Clone)]
pub struct Prediction<T> {
    /// Final per-token role distributions `[n, m]`.
    pub distributions: Tensor<T>,
    /// One state per routing cycle (empty for non-routing heads). The
    /// first state carries the all-zero initial logits and the uniform
    /// couplings.
    pub trajectory: Vec<RoutingState<T>>,
    /// State after the last update: final logits, final distributions and
    /// the last computed capsules/global node.
    pub final_state: Option<RoutingState<T>>,
    /// `softmax(b^(t))` after each cycle `t = 1..=T`; the last entry
    /// equals `distributions`. Non-routing heads get a single entry.
    pub per_iteration: Vec<Tensor<T>>,
}

impl<T: Real> Prediction<T> {
    /// Argmax labels per token; ties resolve to the lowest role id.
    pub fn labels(&self) -> Vec<usize> {
        argmax_rows(&self.distributions)
    }
}

/// Row-wise argmax with ties resolved to the lowest index.
pub fn argmax_rows<T: Real>(dist: &Tensor<T>) -> Vec<usize> {
    let (n, m) = (dist.shape().dim(0), dist.shape().dim(1));
    (0..n)
        .map(|i| {
            let mut best = 0;
            for j in 1..m {
                if dist.at2(i, j) > dist.at2(i, best) {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Per-role bilinear logits: `b[i][j] = x_i' W_j p`.
pub fn baseline_logits<T: Real>(
    g: &mut Graph<T>,
    x_mat: NodeId,
    p: NodeId,
    role_w: &[NodeId],
) -> Result<NodeId, ModelError> {
    let mut cols = Vec::with_capacity(role_w.len());
    for &w in role_w {
        let q = g.matvec(w, p)?;
        cols.push(g.matvec(x_mat, q)?);
    }
    Ok(g.stack_cols(&cols)?)
}

/// Word capsule layer: `u[i][j][k] = x_i' W_j^k p`, computed once and not
/// updated across routing iterations.
pub fn word_capsules<T: Real>(
    g: &mut Graph<T>,
    x_mat: NodeId,
    p: NodeId,
    role_w: &[Vec<NodeId>],
) -> Result<NodeId, ModelError> {
    let m = role_w.len();
    let k = role_w[0].len();
    let n = g.value(x_mat).shape().dim(0);
    let mut cols = Vec::with_capacity(m * k);
    for row in role_w {
        for &w in row {
            let q = g.matvec(w, p)?;
            cols.push(g.matvec(x_mat, q)?);
        }
    }
    let flat = g.stack_cols(&cols)?;
    Ok(g.reshape(flat, Shape::cube(n, m, k))?)
}

/// Mean-of-capsules head: `b[i][j] = (1/K) sum_k u[i][j][k]`.
pub fn mean_capsule_logits<T: Real>(g: &mut Graph<T>, u: NodeId) -> Result<NodeId, ModelError> {
    Ok(g.mean_capsules(u)?)
}

pub struct GlobalNodes {
    pub proj: NodeId,
    pub route: NodeId,
}

/// Dynamic routing over word capsules `u[n,m,K]` for `iterations` cycles.
///
/// Logits start at zero. Each cycle computes couplings, pools role
/// capsules, squashes them, and updates the logits with the agreement
/// term (plus the global term when enabled). The returned distribution is
/// the softmax of the final logits.
pub fn route<T: Real>(
    g: &mut Graph<T>,
    u: NodeId,
    w_route: NodeId,
    global: Option<&GlobalNodes>,
    iterations: usize,
) -> Result<Forward, ModelError> {
    if iterations == 0 {
        return Err(ModelError::BadIterations);
    }
    let su = g.value(u).shape().clone();
    let (n, m, k) = (su.dim(0), su.dim(1), su.dim(2));
    if !g.value(u).is_finite() {
        return Err(ModelError::NonFinite(0));
    }
    let mut logits = g.constant(Tensor::zeros(Shape::matrix(n, m)));
    let mut cycles = Vec::with_capacity(iterations);
    for t in 0..iterations {
        let couplings = g.softmax(logits)?;
        let pooled = g.coupling_sum(couplings, u)?;
        let capsules = g.squash(pooled, T::from_f64(SQUASH_EPS))?;
        let agreement_rows = g.matmul(capsules, w_route)?;
        let mut update = g.per_role_dot(agreement_rows, u)?;
        let mut global_node = None;
        if let Some(nodes) = global {
            let flat = g.reshape(pooled, Shape::vector(m * k))?;
            let gvec = g.matvec(nodes.proj, flat)?;
            let wg_t = g.transpose(nodes.route)?;
            let gw = g.matvec(wg_t, gvec)?;
            let gterm = g.dot_capsules(gw, u)?;
            update = g.add(update, gterm)?;
            global_node = Some(gvec);
        }
        let next = g.add(logits, update)?;
        if !g.value(next).is_finite() {
            return Err(ModelError::NonFinite(t + 1));
        }
        cycles.push(IterNodes {
            logits_in: logits,
            couplings,
            capsules,
            global: global_node,
            logits_out: next,
        });
        logits = next;
    }
    let dist = g.softmax(logits)?;
    Ok(Forward {
        dist,
        logits,
        cycles,
    })
}

/// Inputs for one (sentence, predicate) instance, resolved to ids or to
/// injected contextual vectors.
#[derive(Debug, Clone)]
pub struct ModelInput<T> {
    pub token_ids: Vec<usize>,
    pub predicate_index: usize,
    pub predicate_lemma_id: usize,
    /// Per-token input vectors replacing the embedding lookup.
    pub contextual: Option<Vec<Vec<T>>>,
    /// Predicate vector replacing the lemma lookup.
    pub contextual_predicate: Option<Vec<T>>,
}

/// The trained model: configuration, vocabulary and parameters.
#[derive(Debug, Clone)]
pub struct SrlModel<T: Real> {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ParamStore<T>,
}

impl<T: Real> SrlModel<T> {
    /// Fresh model with uniformly initialized parameters. Only the
    /// parameters the configured variant uses are registered.
    pub fn new(
        config: ModelConfig,
        vocab: Vocab,
        rng: &mut impl Rng,
        pretrained: Option<(Vec<bool>, Vec<(usize, Vec<T>)>)>,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let m = vocab.n_roles();
        if m < 2 {
            return Err(ModelError::Config(
                "role inventory needs the none role plus at least one role".into(),
            ));
        }
        let mut params = ParamStore::new();
        encoder::register_encoder_params(
            &mut params,
            &config.encoder,
            vocab.n_tokens(),
            rng,
            pretrained,
        );
        let (d_l, d_e, k) = (config.encoder.d_l, config.encoder.d_e, config.capsule_k);
        match config.mode.variant {
            Variant::Baseline => {
                for j in 0..m {
                    params.insert(
                        &baseline_name(j),
                        bilinear_init(rng, d_l, d_e),
                        L2Policy::Apply,
                    );
                }
            }
            Variant::MeanCapsules => {
                for j in 0..m {
                    for kk in 0..k {
                        params.insert(
                            &wordcap_name(j, kk),
                            bilinear_init(rng, d_l, d_e),
                            L2Policy::Apply,
                        );
                    }
                }
            }
            Variant::CapsuleNoGlobal | Variant::CapsuleGlobal => {
                for j in 0..m {
                    for kk in 0..k {
                        params.insert(
                            &wordcap_name(j, kk),
                            bilinear_init(rng, d_l, d_e),
                            L2Policy::Apply,
                        );
                    }
                }
                params.insert(
                    ROUTE_W,
                    encoder::uniform_tensor(rng, Shape::matrix(k, k)),
                    L2Policy::Apply,
                );
                if config.mode.variant == Variant::CapsuleGlobal {
                    params.insert(
                        GLOBAL_PROJ,
                        encoder::uniform_tensor(rng, Shape::matrix(k, k * m)),
                        L2Policy::Apply,
                    );
                    params.insert(
                        GLOBAL_ROUTE_W,
                        encoder::uniform_tensor(rng, Shape::matrix(k, k)),
                        L2Policy::Apply,
                    );
                }
            }
        }
        Ok(SrlModel {
            config,
            vocab,
            params,
        })
    }

    pub fn n_roles(&self) -> usize {
        self.vocab.n_roles()
    }

    /// Resolve an instance to model inputs, including sidecar vectors
    /// when provided. Sidecar vectors must cover every token.
    pub fn make_input(
        &self,
        sentence: &Sentence,
        instance: &PredicateInstance,
        sidecar: Option<&ContextualVectors<T>>,
    ) -> Result<ModelInput<T>, ModelError> {
        if sentence.is_empty() {
            return Err(ModelError::EmptySentence);
        }
        let token_ids: Vec<usize> = sentence
            .tokens
            .iter()
            .map(|t| self.vocab.token_id(&t.form))
            .collect();
        let lemma = &sentence.tokens[instance.predicate_index].lemma;
        let predicate_lemma_id = self.vocab.token_id(lemma);
        let (contextual, contextual_predicate) = match sidecar {
            None => (None, None),
            Some(cv) => {
                if cv.dim != self.config.encoder.d_e {
                    return Err(ModelError::Config(format!(
                        "contextual vectors have dimension {}, encoder expects {}",
                        cv.dim, self.config.encoder.d_e
                    )));
                }
                let mut vecs = Vec::with_capacity(sentence.len());
                for i in 0..sentence.len() {
                    let v = cv.get(instance.sentence, i).ok_or_else(|| {
                        DataError::Misaligned(format!(
                            "no contextual vector for sentence {} token {}",
                            instance.sentence,
                            i + 1
                        ))
                    })?;
                    vecs.push(v.to_vec());
                }
                let pred = vecs[instance.predicate_index].clone();
                (Some(vecs), Some(pred))
            }
        };
        Ok(ModelInput {
            token_ids,
            predicate_index: instance.predicate_index,
            predicate_lemma_id,
            contextual,
            contextual_predicate,
        })
    }

    /// Build the head forward pass in `g`. `t_override` replaces the
    /// trained iteration count at inference time.
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        bound: &mut BoundParams<'_, T>,
        input: &ModelInput<T>,
        t_override: Option<usize>,
    ) -> Result<Forward, ModelError> {
        if input.token_ids.is_empty() {
            return Err(ModelError::EmptySentence);
        }
        let cfg = &self.config.encoder;
        // encoder states
        let states = match &input.contextual {
            None => {
                let (states, _) = encoder::encode_tokens(
                    g,
                    bound,
                    cfg,
                    &input.token_ids,
                    input.predicate_index,
                )?;
                states
            }
            Some(vecs) => {
                let mut inputs = Vec::with_capacity(vecs.len());
                for (i, v) in vecs.iter().enumerate() {
                    let base = g.constant(Tensor::vector(v.clone()));
                    let node = if cfg.predicate_flag {
                        let flag = g.constant(Tensor::vector(vec![
                            if i == input.predicate_index {
                                T::one()
                            } else {
                                T::zero()
                            },
                        ]));
                        g.concat(&[base, flag])?
                    } else {
                        base
                    };
                    inputs.push(node);
                }
                encoder::encode_inputs(g, bound, cfg, &inputs)?
            }
        };
        let x_mat = g.stack_rows(&states)?;
        // predicate embedding
        let p = match &input.contextual_predicate {
            Some(v) => g.constant(Tensor::vector(v.clone())),
            None => encoder::predicate_embedding(g, bound, input.predicate_lemma_id)?,
        };
        let m = self.n_roles();
        let k = self.config.capsule_k;
        match self.config.mode.variant {
            Variant::Baseline => {
                let ws: Vec<NodeId> = (0..m).map(|j| bound.node(g, &baseline_name(j))).collect();
                let logits = baseline_logits(g, x_mat, p, &ws)?;
                let dist = g.softmax(logits)?;
                Ok(Forward {
                    dist,
                    logits,
                    cycles: Vec::new(),
                })
            }
            Variant::MeanCapsules => {
                let ws = self.bind_wordcaps(g, bound, m, k);
                let u = word_capsules(g, x_mat, p, &ws)?;
                let logits = mean_capsule_logits(g, u)?;
                let dist = g.softmax(logits)?;
                Ok(Forward {
                    dist,
                    logits,
                    cycles: Vec::new(),
                })
            }
            Variant::CapsuleNoGlobal | Variant::CapsuleGlobal => {
                let iterations = match t_override {
                    None => self.config.mode.iterations,
                    Some(0) => return Err(ModelError::BadIterations),
                    Some(t) => t,
                };
                let ws = self.bind_wordcaps(g, bound, m, k);
                let u = word_capsules(g, x_mat, p, &ws)?;
                let w_route = bound.node(g, ROUTE_W);
                let global = if self.config.mode.variant == Variant::CapsuleGlobal {
                    Some(GlobalNodes {
                        proj: bound.node(g, GLOBAL_PROJ),
                        route: bound.node(g, GLOBAL_ROUTE_W),
                    })
                } else {
                    None
                };
                route(g, u, w_route, global.as_ref(), iterations)
            }
        }
    }

    fn bind_wordcaps(
        &self,
        g: &mut Graph<T>,
        bound: &mut BoundParams<'_, T>,
        m: usize,
        k: usize,
    ) -> Vec<Vec<NodeId>> {
        (0..m)
            .map(|j| (0..k).map(|kk| bound.node(g, &wordcap_name(j, kk))).collect())
            .collect()
    }

    /// Inference on one instance with frozen parameters.
    pub fn predict(
        &self,
        input: &ModelInput<T>,
        t_override: Option<usize>,
    ) -> Result<Prediction<T>, ModelError> {
        let mut g = Graph::new();
        let mut bound = BoundParams::new(&self.params, false);
        let fwd = self.forward(&mut g, &mut bound, input, t_override)?;
        Ok(extract_prediction(&g, &fwd))
    }
}

/// Read value-level routing states out of the graph.
pub fn extract_prediction<T: Real>(g: &Graph<T>, fwd: &Forward) -> Prediction<T> {
    let distributions = g.value(fwd.dist).clone();
    let mut trajectory = Vec::with_capacity(fwd.cycles.len());
    for (t, cyc) in fwd.cycles.iter().enumerate() {
        trajectory.push(RoutingState {
            iteration: t,
            logits: g.value(cyc.logits_in).clone(),
            couplings: g.value(cyc.couplings).clone(),
            capsules: g.value(cyc.capsules).clone(),
            global: cyc.global.map(|n| g.value(n).clone()),
        });
    }
    let final_state = fwd.cycles.last().map(|last| RoutingState {
        iteration: fwd.cycles.len(),
        logits: g.value(fwd.logits).clone(),
        couplings: distributions.clone(),
        capsules: g.value(last.capsules).clone(),
        global: last.global.map(|n| g.value(n).clone()),
    });
    let per_iteration = if fwd.cycles.is_empty() {
        vec![distributions.clone()]
    } else {
        let mut seq: Vec<Tensor<T>> = trajectory[1..]
            .iter()
            .map(|s| s.couplings.clone())
            .collect();
        seq.push(distributions.clone());
        seq
    };
    Prediction {
        distributions,
        trajectory,
        final_state,
        per_iteration,
    }
}

/// Serialized model container. Parameter values round-trip bitwise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub precision: String,
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: Vec<ParamEntry>,
}

impl Checkpoint {
    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint, ModelError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cp: Checkpoint =
            serde_json::from_str(&text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported checkpoint version {}",
                cp.version
            )));
        }
        Ok(cp)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        let text =
            serde_json::to_string(self).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        fs::write(path, text).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

impl<T: Real> SrlModel<T> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            precision: T::precision().to_string(),
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            params: self.params.to_entries(),
        }
    }

    /// Rebuild a model from a checkpoint. The stored precision must match
    /// `T`; every parameter is validated against the configured shapes.
    pub fn from_checkpoint(cp: &Checkpoint) -> Result<SrlModel<T>, ModelError> {
        if cp.precision != T::precision() {
            return Err(ModelError::Checkpoint(format!(
                "checkpoint precision {} does not match requested {}",
                cp.precision,
                T::precision()
            )));
        }
        // a throwaway rng: values are overwritten by the checkpoint
        let mut rng = <rand::rngs::StdRng as rand::SeedableRng>::seed_from_u64(0);
        let mut model = SrlModel::<T>::new(cp.config.clone(), cp.vocab.clone(), &mut rng, None)?;
        model
            .params
            .load_entries(&cp.params)
            .map_err(ModelError::Checkpoint)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SrlModel<T>, ModelError> {
        SrlModel::from_checkpoint(&Checkpoint::load(path)?)
    }
}
