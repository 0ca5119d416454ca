//! Sentence encoder: embedding lookup plus a stacked bidirectional LSTM.
//!
//! Each direction runs a standard LSTM cell (gate order input, forget,
//! output, candidate; forget bias initialized to 1) and the per-token
//! outputs of the two directions are concatenated.

use rand::Rng;

use crate::capsule::ModelError;
use crate::params::{BoundParams, L2Policy, ParamStore};
use crate::tensor::{Graph, NodeId, Real, Shape, Tensor};

pub const EMBED_TABLE: &str = "embed.table";

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EncoderConfig {
    /// Embedding dimension.
    pub d_e: usize,
    /// Encoder output dimension, split across the two directions.
    pub d_l: usize,
    /// Stack depth.
    pub layers: usize,
    /// Probability of replacing a token with the unknown token while
    /// training.
    pub word_dropout: f64,
    /// Append a 0/1 predicate-indicator feature to token embeddings.
    /// Off by default: the predicate enters only through the bilinear
    /// maps.
    pub predicate_flag: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d_e: 300,
            d_l: 500,
            layers: 2,
            word_dropout: 0.0,
            predicate_flag: false,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_l % 2 != 0 {
            return Err(ModelError::Config(format!(
                "encoder output dimension {} must be even",
                self.d_l
            )));
        }
        if self.layers == 0 {
            return Err(ModelError::Config("encoder needs at least one layer".into()));
        }
        if self.d_e == 0 {
            return Err(ModelError::Config("embedding dimension must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.word_dropout) {
            return Err(ModelError::Config(format!(
                "word dropout {} outside [0, 1]",
                self.word_dropout
            )));
        }
        Ok(())
    }

    /// Input width of the first LSTM layer.
    pub fn input_dim(&self) -> usize {
        self.d_e + usize::from(self.predicate_flag)
    }

    /// Per-direction hidden size.
    pub fn hidden(&self) -> usize {
        self.d_l / 2
    }
}

pub(crate) fn uniform_tensor<T: Real>(rng: &mut impl Rng, shape: Shape) -> Tensor<T> {
    let n = shape.numel();
    let data = (0..n)
        .map(|_| T::from_f64(rng.random_range(-0.1..0.1)))
        .collect();
    Tensor::new(shape, data).expect("init shape")
}

fn lstm_name(layer: usize, fwd: bool, part: &str) -> String {
    format!("enc.l{layer}.{}.{part}", if fwd { "fwd" } else { "bwd" })
}

/// Register the embedding table and all recurrent parameters.
/// `pretrained` marks embedding rows initialized from a file; those rows
/// are exempt from L2.
pub fn register_encoder_params<T: Real>(
    store: &mut ParamStore<T>,
    cfg: &EncoderConfig,
    vocab_size: usize,
    rng: &mut impl Rng,
    pretrained_rows: Option<(Vec<bool>, Vec<(usize, Vec<T>)>)>,
) {
    let mut table = uniform_tensor::<T>(rng, Shape::matrix(vocab_size, cfg.d_e));
    let l2 = match pretrained_rows {
        None => L2Policy::Apply,
        Some((mask, rows)) => {
            for (row, values) in rows {
                let cols = cfg.d_e;
                table.data_mut()[row * cols..(row + 1) * cols]
                    .copy_from_slice(&values);
            }
            L2Policy::ExemptRows(mask)
        }
    };
    store.insert(EMBED_TABLE, table, l2);

    let h = cfg.hidden();
    for layer in 0..cfg.layers {
        let d_in = if layer == 0 { cfg.input_dim() } else { cfg.d_l };
        for fwd in [true, false] {
            store.insert(
                &lstm_name(layer, fwd, "wx"),
                uniform_tensor(rng, Shape::matrix(4 * h, d_in)),
                L2Policy::Apply,
            );
            store.insert(
                &lstm_name(layer, fwd, "wh"),
                uniform_tensor(rng, Shape::matrix(4 * h, h)),
                L2Policy::Apply,
            );
            // forget-gate bias segment starts at 1
            let mut bias = vec![T::zero(); 4 * h];
            for b in bias.iter_mut().take(2 * h).skip(h) {
                *b = T::one();
            }
            store.insert(
                &lstm_name(layer, fwd, "b"),
                Tensor::vector(bias),
                L2Policy::Exempt,
            );
        }
    }
}

/// Parameter nodes of one bidirectional layer.
pub struct LstmLayerNodes {
    pub fwd: DirectionNodes,
    pub bwd: DirectionNodes,
}

pub struct DirectionNodes {
    pub wx: NodeId,
    pub wh: NodeId,
    pub b: NodeId,
}

fn bind_layers<T: Real>(
    g: &mut Graph<T>,
    bound: &mut BoundParams<'_, T>,
    layers: usize,
) -> Vec<LstmLayerNodes> {
    (0..layers)
        .map(|layer| LstmLayerNodes {
            fwd: DirectionNodes {
                wx: bound.node(g, &lstm_name(layer, true, "wx")),
                wh: bound.node(g, &lstm_name(layer, true, "wh")),
                b: bound.node(g, &lstm_name(layer, true, "b")),
            },
            bwd: DirectionNodes {
                wx: bound.node(g, &lstm_name(layer, false, "wx")),
                wh: bound.node(g, &lstm_name(layer, false, "wh")),
                b: bound.node(g, &lstm_name(layer, false, "b")),
            },
        })
        .collect()
}

fn lstm_direction<T: Real>(
    g: &mut Graph<T>,
    inputs: &[NodeId],
    dir: &DirectionNodes,
    hidden: usize,
    reverse: bool,
) -> Result<Vec<NodeId>, ModelError> {
    let mut h_prev = g.constant(Tensor::zeros(Shape::vector(hidden)));
    let mut c_prev = g.constant(Tensor::zeros(Shape::vector(hidden)));
    let mut states = vec![h_prev; inputs.len()];
    let order: Vec<usize> = if reverse {
        (0..inputs.len()).rev().collect()
    } else {
        (0..inputs.len()).collect()
    };
    for t in order {
        let zx = g.matvec(dir.wx, inputs[t])?;
        let zh = g.matvec(dir.wh, h_prev)?;
        let pre = g.add(zx, zh)?;
        let z = g.add(pre, dir.b)?;
        let i_raw = g.segment(z, 0, hidden)?;
        let f_raw = g.segment(z, hidden, hidden)?;
        let o_raw = g.segment(z, 2 * hidden, hidden)?;
        let cand_raw = g.segment(z, 3 * hidden, hidden)?;
        let i = g.sigmoid(i_raw);
        let f = g.sigmoid(f_raw);
        let o = g.sigmoid(o_raw);
        let cand = g.tanh(cand_raw);
        let keep = g.mul(f, c_prev)?;
        let write = g.mul(i, cand)?;
        let c = g.add(keep, write)?;
        let c_act = g.tanh(c);
        let h = g.mul(o, c_act)?;
        states[t] = h;
        h_prev = h;
        c_prev = c;
    }
    Ok(states)
}

/// Run the stacked bidirectional LSTM over per-token input nodes, given
/// already-bound parameter nodes. Returns one `[d_l]` node per token.
pub fn encode_with_nodes<T: Real>(
    g: &mut Graph<T>,
    inputs: &[NodeId],
    layers: &[LstmLayerNodes],
    hidden: usize,
) -> Result<Vec<NodeId>, ModelError> {
    if inputs.is_empty() {
        return Err(ModelError::EmptySentence);
    }
    let mut current: Vec<NodeId> = inputs.to_vec();
    for layer in layers {
        let fwd = lstm_direction(g, &current, &layer.fwd, hidden, false)?;
        let bwd = lstm_direction(g, &current, &layer.bwd, hidden, true)?;
        current = fwd
            .iter()
            .zip(&bwd)
            .map(|(&f, &b)| g.concat(&[f, b]))
            .collect::<Result<Vec<_>, _>>()?;
    }
    Ok(current)
}

/// Run the encoder over already-built per-token input nodes (used when
/// contextual vectors are injected instead of table lookups).
pub fn encode_inputs<T: Real>(
    g: &mut Graph<T>,
    bound: &mut BoundParams<'_, T>,
    cfg: &EncoderConfig,
    inputs: &[NodeId],
) -> Result<Vec<NodeId>, ModelError> {
    let layers = bind_layers(g, bound, cfg.layers);
    encode_with_nodes(g, inputs, &layers, cfg.hidden())
}

/// Embed token ids (one gathered leaf row per token) and run the encoder.
/// Returns per-token state nodes and the `[n, d_e]` embedding matrix node.
pub fn encode_tokens<T: Real>(
    g: &mut Graph<T>,
    bound: &mut BoundParams<'_, T>,
    cfg: &EncoderConfig,
    token_ids: &[usize],
    predicate_index: usize,
) -> Result<(Vec<NodeId>, NodeId), ModelError> {
    if token_ids.is_empty() {
        return Err(ModelError::EmptySentence);
    }
    let table = bound.gather_rows(g, EMBED_TABLE, token_ids);
    let mut inputs = Vec::with_capacity(token_ids.len());
    for i in 0..token_ids.len() {
        let row = g.row(table, i)?;
        let x = if cfg.predicate_flag {
            let flag = g.constant(Tensor::vector(vec![if i == predicate_index {
                T::one()
            } else {
                T::zero()
            }]));
            g.concat(&[row, flag])?
        } else {
            row
        };
        inputs.push(x);
    }
    let layers = bind_layers(g, bound, cfg.layers);
    let states = encode_with_nodes(g, &inputs, &layers, cfg.hidden())?;
    Ok((states, table))
}

/// Embedding of the predicate lemma: one gathered table row.
pub fn predicate_embedding<T: Real>(
    g: &mut Graph<T>,
    bound: &mut BoundParams<'_, T>,
    lemma_id: usize,
) -> Result<NodeId, ModelError> {
    let gathered = bound.gather_rows(g, EMBED_TABLE, &[lemma_id]);
    Ok(g.row(gathered, 0)?)
}

/// Apply word dropout to token ids: each id independently becomes the
/// unknown id with probability `p`.
pub fn word_dropout(ids: &mut [usize], p: f64, rng: &mut impl Rng) {
    if p <= 0.0 {
        return;
    }
    for id in ids.iter_mut() {
        if rng.random::<f64>() < p {
            *id = crate::conll::UNK_TOKEN_ID;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn test_cfg(d_e: usize, d_l: usize, layers: usize) -> EncoderConfig {
        EncoderConfig {
            d_e,
            d_l,
            layers,
            word_dropout: 0.0,
            predicate_flag: false,
        }
    }

    fn build_store(cfg: &EncoderConfig, vocab: usize, seed: u64) -> ParamStore<f64> {
        let mut store = ParamStore::new();
        let mut rng = StdRng::seed_from_u64(seed);
        register_encoder_params(&mut store, cfg, vocab, &mut rng, None);
        store
    }

    fn run_encoder(store: &ParamStore<f64>, cfg: &EncoderConfig, ids: &[usize]) -> Vec<Vec<f64>> {
        let mut g = Graph::new();
        let mut bound = BoundParams::new(store, false);
        let (states, _) = encode_tokens(&mut g, &mut bound, cfg, ids, 0).unwrap();
        states
            .iter()
            .map(|&s| g.value(s).data().to_vec())
            .collect()
    }

    #[test]
    fn config_validation() {
        assert!(test_cfg(4, 6, 1).validate().is_ok());
        assert!(test_cfg(4, 5, 1).validate().is_err());
        assert!(test_cfg(4, 6, 0).validate().is_err());
    }

    #[test]
    fn known_token_gets_its_row_and_oov_gets_unknown_row() {
        let cfg = test_cfg(3, 4, 1);
        let store = build_store(&cfg, 5, 1);
        let mut g = Graph::new();
        let mut bound = BoundParams::new(&store, false);
        let table = bound.gather_rows(&mut g, EMBED_TABLE, &[2, 0, 4]);
        let want: Vec<f64> = [2usize, 0, 4]
            .iter()
            .flat_map(|&r| store.get(EMBED_TABLE).row(r).to_vec())
            .collect();
        assert_eq!(g.value(table).data(), &want[..]);
    }

    #[test]
    fn single_token_has_output_shape_d_l() {
        let cfg = test_cfg(3, 6, 2);
        let store = build_store(&cfg, 4, 2);
        let states = run_encoder(&store, &cfg, &[1]);
        assert_eq!(states.len(), 1);
        assert_eq!(states[0].len(), 6);
    }

    #[test]
    fn empty_sentence_is_an_error() {
        let cfg = test_cfg(3, 4, 1);
        let store = build_store(&cfg, 4, 3);
        let mut g = Graph::new();
        let mut bound = BoundParams::new(&store, false);
        assert!(matches!(
            encode_tokens(&mut g, &mut bound, &cfg, &[], 0),
            Err(ModelError::EmptySentence)
        ));
    }

    #[test]
    fn zero_weights_give_zero_states() {
        // all-zero gates: i = f = o = 1/2, candidate = tanh(0) = 0, so
        // c = 0 and h = 0 at every step
        let cfg = test_cfg(3, 4, 2);
        let mut store = build_store(&cfg, 4, 4);
        let names: Vec<String> = store.iter().map(|p| p.name.clone()).collect();
        for name in names {
            if name.starts_with("enc.") {
                let t = store.get_mut(&name);
                for v in t.data_mut() {
                    *v = 0.0;
                }
            }
        }
        let states = run_encoder(&store, &cfg, &[1, 2, 3]);
        for s in states {
            assert!(s.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn encoding_is_deterministic_without_dropout() {
        let cfg = test_cfg(4, 6, 2);
        let store = build_store(&cfg, 6, 5);
        let a = run_encoder(&store, &cfg, &[1, 2, 3, 4]);
        let b = run_encoder(&store, &cfg, &[1, 2, 3, 4]);
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn encoding_is_permutation_sensitive() {
        let cfg = test_cfg(4, 6, 1);
        let store = build_store(&cfg, 6, 6);
        let a = run_encoder(&store, &cfg, &[1, 2, 3, 4]);
        let b = run_encoder(&store, &cfg, &[4, 3, 2, 1]);
        let differs = a
            .iter()
            .flatten()
            .zip(b.iter().flatten())
            .any(|(x, y)| (x - y).abs() > 1e-9);
        assert!(differs);
    }

    #[test]
    fn tied_directions_mirror_reversed_input() {
        // with forward and backward weights tied, encoding the reversed
        // sequence and swapping the direction halves reverses the output
        let cfg = test_cfg(3, 6, 1);
        let mut store = build_store(&cfg, 6, 7);
        for part in ["wx", "wh", "b"] {
            let fwd = store.get(&lstm_name(0, true, part)).clone();
            *store.get_mut(&lstm_name(0, false, part)) = fwd;
        }
        let ids = [1usize, 2, 3, 4];
        let rev: Vec<usize> = ids.iter().rev().copied().collect();
        let out = run_encoder(&store, &cfg, &ids);
        let out_rev = run_encoder(&store, &cfg, &rev);
        let h = cfg.hidden();
        let n = ids.len();
        for t in 0..n {
            let mirrored: Vec<f64> = out_rev[n - 1 - t][h..]
                .iter()
                .chain(&out_rev[n - 1 - t][..h])
                .copied()
                .collect();
            for (a, b) in out[t].iter().zip(&mirrored) {
                assert!((a - b).abs() <= 1e-12, "t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn recurrent_gradients_match_finite_differences() {
        let (d_in, h, n) = (3, 2, 4);
        let mut rng = StdRng::seed_from_u64(8);
        let mut mk = |shape: Shape| uniform_tensor::<f64>(&mut rng, shape);
        let leaves = vec![
            mk(Shape::matrix(4 * h, d_in)), // wx fwd
            mk(Shape::matrix(4 * h, h)),    // wh fwd
            mk(Shape::vector(4 * h)),       // b fwd
            mk(Shape::matrix(4 * h, d_in)), // wx bwd
            mk(Shape::matrix(4 * h, h)),    // wh bwd
            mk(Shape::vector(4 * h)),       // b bwd
            mk(Shape::matrix(n, d_in)),     // token inputs
        ];
        let r = gradcheck::check(&leaves, 1e-5, |g, ids| {
            let layer = LstmLayerNodes {
                fwd: DirectionNodes {
                    wx: ids[0],
                    wh: ids[1],
                    b: ids[2],
                },
                bwd: DirectionNodes {
                    wx: ids[3],
                    wh: ids[4],
                    b: ids[5],
                },
            };
            let inputs: Vec<NodeId> = (0..n)
                .map(|i| g.row(ids[6], i))
                .collect::<Result<_, _>>()?;
            let states = encode_with_nodes(g, &inputs, &[layer], h).map_err(|e| match e {
                ModelError::Tensor(t) => t,
                _ => unreachable!(),
            })?;
            let all = g.concat(&states)?;
            Ok(g.sum(all))
        })
        .unwrap();
        assert!(r.max_err <= 1e-4, "encoder grad err {}", r.max_err);
    }
}
