use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use synres::datagen::{build_splits, TaskSpec};
use synres::eval::{perplexity, Gated};
use synres::par::{self, Strategy};
use synres::train::{batch_gradients, batch_of};
use synres::{GateMode, ModelConfig, Params, Rng};

fn setup() -> (Params<f32>, Vec<synres::datagen::Sample>) {
    let cfg = ModelConfig {
        vocab_size: 64,
        d_model: 64,
        n_heads: 4,
        n_layers: 2,
        d_ff: 128,
        max_seq_len: 34,
        sigma_init: 0.02,
        gate_mode: GateMode::Learned,
    };
    let params = Params::init(&cfg, &mut Rng::new(0)).unwrap();
    let splits = build_splits(&TaskSpec::copy(34, 32, 1), 64).unwrap();
    (params, splits.train)
}

const STRATEGIES: [(&str, Strategy); 2] = [
    ("sequential", Strategy::Sequential),
    ("parallel", Strategy::Parallel),
];

fn gradients(c: &mut Criterion) {
    let (params, rows) = setup();
    let batch = batch_of(&rows);
    let mut group = c.benchmark_group("batch_gradients_b32");
    group.sample_size(10);
    for (name, s) in STRATEGIES {
        par::set_strategy(s);
        group.bench_with_input(BenchmarkId::from_parameter(name), &batch, |b, batch| {
            b.iter(|| batch_gradients(&params, batch, 1e-4, GateMode::Learned).unwrap())
        });
    }
    group.finish();
    par::set_strategy(Strategy::Parallel);
}

fn eval_perplexity(c: &mut Criterion) {
    let (params, rows) = setup();
    let model = Gated::new(&params, GateMode::Learned);
    let mut group = c.benchmark_group("perplexity_32_rows");
    group.sample_size(10);
    for (name, s) in STRATEGIES {
        par::set_strategy(s);
        group.bench_function(name, |b| b.iter(|| perplexity(&model, &rows).unwrap()));
    }
    group.finish();
    par::set_strategy(Strategy::Parallel);
}

criterion_group!(benches, gradients, eval_perplexity);
criterion_main!(benches);
