use proptest::prelude::*;
use synres::model::{forward, GateMode, ModelConfig, Params};
use synres::tensor::{self, Tensor2};
use synres::{Graph, Rng};

fn matrix(max_rows: usize, max_cols: usize, scale: f64) -> impl Strategy<Value = Tensor2<f64>> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(move |(r, c)| {
        prop::collection::vec(-scale..scale, r * c)
            .prop_map(move |d| Tensor2::from_vec(r, c, d).unwrap())
    })
}

fn small_model() -> ModelConfig {
    ModelConfig {
        vocab_size: 13,
        d_model: 8,
        n_heads: 2,
        n_layers: 2,
        d_ff: 16,
        max_seq_len: 12,
        sigma_init: 0.5,
        gate_mode: GateMode::Learned,
    }
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(x in matrix(6, 6, 50.0), causal in any::<bool>()) {
        let causal = causal && x.rows() == x.cols();
        let p = tensor::softmax_rows(&x, causal);
        for r in 0..p.rows() {
            let s: f64 = p.row(r).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
            prop_assert!(p.row(r).iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn sigmoid_is_symmetric_and_bounded(x in -30.0f64..30.0) {
        let a = tensor::sigmoid_scalar(x);
        let b = tensor::sigmoid_scalar(-x);
        prop_assert!((a + b - 1.0).abs() < 1e-12);
        prop_assert!(a > 0.0 && a < 1.0);
    }

    #[test]
    fn identity_matmul_is_bitwise(x in matrix(5, 7, 10.0)) {
        let left = tensor::matmul(&Tensor2::eye(x.rows()), &x).unwrap();
        let right = tensor::matmul(&x, &Tensor2::eye(x.cols())).unwrap();
        prop_assert!(left.bit_eq(&x));
        prop_assert!(right.bit_eq(&x));
    }

    #[test]
    fn hadamard_commutes(x in matrix(4, 6, 10.0), seed in any::<u64>()) {
        let y = synres::randn::<f64>(x.rows(), x.cols(), 3.0, &mut Rng::new(seed)).unwrap();
        let mut g = Graph::<f64>::new();
        let (a, b) = (g.constant_ref(&x), g.constant_ref(&y));
        let ab = g.hadamard(a, b).unwrap();
        let ba = g.hadamard(b, a).unwrap();
        prop_assert!(g.value(ab).bit_eq(g.value(ba)));
    }

    #[test]
    fn fan_out_gradient_is_branch_sum(x in matrix(3, 4, 2.0)) {
        // f = sum(x ⊙ x) + 3·sum(x) has gradient 2x + 3
        let mut g = Graph::<f64>::new();
        let v = g.param_ref(&x);
        let sq = g.hadamard(v, v).unwrap();
        let a = g.sum(sq).unwrap();
        let s = g.sum(v).unwrap();
        let b = g.scale(s, 3.0).unwrap();
        let root = g.add(a, b).unwrap();
        let grad = g.backward(root).unwrap().wrt(v);
        let expect = x.map(|e| 2.0 * e + 3.0);
        prop_assert!(grad.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn future_tokens_never_change_past_logits(
        seed in any::<u64>(),
        prefix in prop::collection::vec(0usize..13, 1..8),
        tail_a in prop::collection::vec(0usize..13, 1..5),
        tail_b in prop::collection::vec(0usize..13, 1..5),
    ) {
        let p = Params::<f64>::init(&small_model(), &mut Rng::new(seed)).unwrap();
        let run = |tail: &[usize]| {
            let tokens: Vec<usize> = prefix.iter().chain(tail).copied().collect();
            forward(&p, &tokens, GateMode::Learned, false).unwrap().0
        };
        let (a, b) = (run(&tail_a), run(&tail_b));
        for t in 0..prefix.len() {
            prop_assert_eq!(
                a.row(t).iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.row(t).iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn forced_ones_matches_disabled(seed in any::<u64>(), tokens in prop::collection::vec(0usize..13, 1..12)) {
        let p = Params::<f32>::init(&small_model(), &mut Rng::new(seed)).unwrap();
        let a = forward(&p, &tokens, GateMode::ForcedOnes, false).unwrap().0;
        let b = forward(&p, &tokens, GateMode::Disabled, false).unwrap().0;
        prop_assert!(a.bit_eq(&b));
    }

    #[test]
    fn params_survive_tensor_round_trip(seed in any::<u64>()) {
        let p = Params::<f32>::init(&small_model(), &mut Rng::new(seed)).unwrap();
        let q = Params::from_tensors(&p.config, p.tensors().into_iter().cloned().collect()).unwrap();
        prop_assert!(p.bit_eq(&q));
    }
}
