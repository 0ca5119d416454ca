use capsrl::capsule::{word_capsules, ModelConfig, ModelMode, SrlModel, Variant};
use capsrl::conll::{parse_conll, Vocab};
use capsrl::encoder::{encode_tokens, predicate_embedding, EncoderConfig};
use capsrl::params::BoundParams;
use capsrl::synthetic::{generate, GrammarSpec};
use capsrl::tensor::Graph;
use capsrl::training::Dataset;
use rand::SeedableRng;

#[test]
fn probe_scales() {
    let spec = GrammarSpec { seed: 7, ..GrammarSpec::default() };
    let corpus = generate(&spec, 50).unwrap();
    let (train_txt, _, _) = corpus.render().unwrap();
    let train = parse_conll(&train_txt).unwrap();
    let vocab = Vocab::build(&train);
    let config = ModelConfig {
        encoder: EncoderConfig { d_e: 32, d_l: 64, layers: 1, word_dropout: 0.0, predicate_flag: false },
        capsule_k: 8,
        mode: ModelMode { variant: Variant::CapsuleNoGlobal, iterations: 2 },
    };
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(1);
    let model = SrlModel::<f64>::new(config.clone(), vocab.clone(), &mut rng, None).unwrap();
    let data = Dataset::prepare(train, &vocab).unwrap();
    let inst = &data.instances[0];
    let input = model.make_input(&data.corpus.sentences[inst.sentence], inst, None).unwrap();

    let mut g = Graph::<f64>::new();
    let mut bound = BoundParams::new(&model.params, false);
    let (states, _) = encode_tokens(&mut g, &mut bound, &config.encoder, &input.token_ids, input.predicate_index).unwrap();
    let x0 = g.value(states[0]);
    let xnorm = x0.data().iter().map(|v| v*v).sum::<f64>().sqrt();
    println!("x0 norm = {xnorm:.4}, first entries {:?}", &x0.data()[..4]);
    let p = predicate_embedding(&mut g, &mut bound, input.predicate_lemma_id).unwrap();
    let pv = g.value(p);
    println!("p norm = {:.4}", pv.data().iter().map(|v| v*v).sum::<f64>().sqrt());
    let x_mat = g.stack_rows(&states).unwrap();
    let ws: Vec<Vec<_>> = (0..vocab.n_roles()).map(|j| (0..8).map(|k| bound.node(&mut g, &format!("wordcaps.w{j}.{k}"))).collect()).collect();
    let wnorm = g.value(ws[0][0]).data().iter().map(|v| v*v).sum::<f64>().sqrt();
    println!("W_word[0][0] frobenius = {wnorm:.4}");
    let u = word_capsules(&mut g, x_mat, p, &ws).unwrap();
    let ud = g.value(u);
    let n = ud.shape().dim(0);
    let m = ud.shape().dim(1);
    let mut unorm_avg = 0.0;
    for i in 0..n { for j in 0..m {
        let norm: f64 = (0..8).map(|k| ud.at3(i,j,k).powi(2)).sum::<f64>().sqrt();
        unorm_avg += norm;
    }}
    println!("avg |u_ij| = {:.4}", unorm_avg / (n*m) as f64);
}
