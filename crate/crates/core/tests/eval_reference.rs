use synres::datagen::{gen_kv_recall, windows, TaskSpec, VocabLayout};
use synres::eval::{coherence_curve, perplexity, retention_probe, UniformModel};
use synres::model::{GateMode, ModelConfig, Params};
use synres::{eval::Gated, Rng};

/// Half-width of a 99% normal-approximation binomial interval.
fn bound(p: f64, n: usize) -> f64 {
    2.576 * (p * (1.0 - p) / n as f64).sqrt()
}

fn untrained(vocab: usize, n: usize) -> Params<f32> {
    let cfg = ModelConfig {
        vocab_size: vocab,
        d_model: 32,
        n_heads: 4,
        n_layers: 2,
        d_ff: 64,
        max_seq_len: n,
        sigma_init: 0.02,
        gate_mode: GateMode::Learned,
    };
    Params::init(&cfg, &mut Rng::new(77)).unwrap()
}

#[test]
fn untrained_retention_is_at_chance() {
    let layout = VocabLayout::synthetic(64, 16).unwrap();
    let spec = TaskSpec::kv_recall(40, 4, vec![8, 16, 32], 0, 0);
    let rows = gen_kv_recall(&spec, &layout, 4000, &mut Rng::new(8)).unwrap();
    let p = untrained(64, 40);
    let rep = retention_probe(&Gated::new(&p, GateMode::Learned), &rows, &layout).unwrap();
    let acc = rep.aggregate_percent / 100.0;
    assert!((acc - 1.0 / 16.0).abs() < bound(1.0 / 16.0, 4000), "{acc}");
    assert_eq!(rep.per_distance.len(), 3);
}

#[test]
fn untrained_coherence_is_near_chance_everywhere() {
    let mut rng = Rng::new(12);
    let stream: Vec<usize> = (0..4000 * 8 + 1).map(|_| rng.below(0, 64)).collect();
    let rows = windows(&stream, 8);
    assert_eq!(rows.len(), 4000);
    let p = untrained(64, 8);
    let curve = coherence_curve(&Gated::new(&p, GateMode::Learned), &rows).unwrap();
    assert_eq!(curve.len(), 8);
    for pt in curve.iter().filter(|p| p.count > 0) {
        let acc = pt.accuracy.unwrap();
        assert!(
            (acc - 1.0 / 64.0).abs() < bound(1.0 / 64.0, pt.count),
            "{pt:?}"
        );
    }
}

#[test]
fn uniform_logits_give_vocab_perplexity() {
    let mut rng = Rng::new(1);
    let stream: Vec<usize> = (0..2000).map(|_| rng.below(0, 64)).collect();
    let ppl = perplexity(&UniformModel { vocab_size: 64 }, &windows(&stream, 20)).unwrap();
    assert!((ppl / 64.0 - 1.0).abs() < 1e-4);
}

#[test]
fn evaluation_leaves_params_untouched() {
    let layout = VocabLayout::synthetic(64, 16).unwrap();
    let spec = TaskSpec::kv_recall(40, 4, vec![8], 0, 0);
    let rows = gen_kv_recall(&spec, &layout, 50, &mut Rng::new(8)).unwrap();
    let p = untrained(64, 40);
    let before = p.clone();
    let m = Gated::new(&p, GateMode::Learned);
    let a = retention_probe(&m, &rows, &layout).unwrap();
    let b = retention_probe(&m, &rows, &layout).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        perplexity(&m, &rows).unwrap().to_bits(),
        perplexity(&m, &rows).unwrap().to_bits()
    );
    assert!(p.bit_eq(&before));
}
