//! Measurement: perplexity, retention probe, noise robustness, coherence
//! by position, latency, and the gate on/off ablation.
//!
//! Evaluators take any [`SequenceModel`], so non-neural reference scorers
//! (uniform logits, lookup oracles) run through exactly the same code.
//! Accuracy metrics use greedy argmax with ties resolved to the lowest id.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datagen::{self, Sample, Splits, TaskKind, TaskSpec, VocabLayout};
use crate::error::{Error, Result};
use crate::model::{self, count_flops, GateMode, ModelConfig, Params};
use crate::par;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{self, Tensor2};
use crate::train::{self, EpochReport, TrainConfig};

/// Anything that maps a token sequence to per-position next-token logits.
pub trait SequenceModel: Sync {
    fn vocab_size(&self) -> usize;
    /// Logits `[n × V]` for `tokens` of length `n`.
    fn logits(&self, tokens: &[usize]) -> Result<Tensor2<f64>>;
}

/// A parameter set evaluated under a fixed gate mode.
pub struct Gated<'a, T> {
    pub params: &'a Params<T>,
    pub mode: GateMode,
}

impl<'a, T: Scalar> Gated<'a, T> {
    pub fn new(params: &'a Params<T>, mode: GateMode) -> Self {
        Self { params, mode }
    }
}

impl<T: Scalar> SequenceModel for Gated<'_, T> {
    fn vocab_size(&self) -> usize {
        self.params.config.vocab_size
    }

    fn logits(&self, tokens: &[usize]) -> Result<Tensor2<f64>> {
        let (logits, _) = model::forward(self.params, tokens, self.mode, false)?;
        Ok(logits.cast())
    }
}

/// Constant zero logits.
pub struct UniformModel {
    pub vocab_size: usize,
}

impl SequenceModel for UniformModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn logits(&self, tokens: &[usize]) -> Result<Tensor2<f64>> {
        Ok(Tensor2::zeros(tokens.len(), self.vocab_size))
    }
}

/// Non-neural key-value reader: finds the last occurrence of the queried
/// key that is followed by a value token and predicts that value. Without
/// a match it returns uniform logits.
pub struct LookupOracle {
    pub layout: VocabLayout,
}

impl SequenceModel for LookupOracle {
    fn vocab_size(&self) -> usize {
        self.layout.vocab_size
    }

    fn logits(&self, tokens: &[usize]) -> Result<Tensor2<f64>> {
        let n = tokens.len();
        let v = self.layout.vocab_size;
        let mut out = Tensor2::zeros(n, v);
        if n >= 2 && tokens[n - 2] == self.layout.query {
            let key = tokens[n - 1];
            let found = (0..n.saturating_sub(3))
                .rev()
                .find(|&i| tokens[i] == key && self.layout.is_value(tokens[i + 1]));
            if let Some(i) = found {
                out.set(n - 1, tokens[i + 1], 1.0);
            }
        }
        Ok(out)
    }
}

/// Predicts the given targets with certainty (used as a perfect reference).
pub struct TargetOracle<'a> {
    pub vocab_size: usize,
    pub samples: &'a [Sample],
}

impl SequenceModel for TargetOracle<'_> {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn logits(&self, tokens: &[usize]) -> Result<Tensor2<f64>> {
        let s = self
            .samples
            .iter()
            .find(|s| s.tokens == tokens)
            .ok_or(Error::Empty("oracle has no sample for these tokens"))?;
        let mut out = Tensor2::filled(tokens.len(), self.vocab_size, -1e4);
        for (t, &y) in s.targets.iter().enumerate() {
            out.set(t, y.min(self.vocab_size - 1), 0.0);
        }
        Ok(out)
    }
}

/// Which ids an argmax prediction may choose from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Candidates {
    All,
    Range(std::ops::Range<usize>),
}

fn predict(row: &[f64], candidates: &Candidates) -> usize {
    match candidates {
        Candidates::All => tensor::argmax(row),
        Candidates::Range(r) => r.start + tensor::argmax(&row[r.clone()]),
    }
}

/// `exp` of the token-weighted mean negative log-likelihood over masked positions.
pub fn perplexity<M: SequenceModel + ?Sized>(model: &M, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation stream"));
    }
    let per_row = par::map_indexed(samples.len(), |i| -> Result<(f64, usize)> {
        let s = &samples[i];
        let logits = model.logits(&s.tokens)?;
        let mut nll = 0.0;
        let mut count = 0;
        for t in 0..s.len() {
            if !s.mask[t] {
                continue;
            }
            let row = logits.row(t);
            let y = s.targets[t];
            if y >= row.len() {
                return Err(Error::TokenOutOfRange {
                    index: y,
                    vocab: row.len(),
                });
            }
            nll += tensor::log_sum_exp(row) - row[y];
            count += 1;
        }
        Ok((nll, count))
    });
    let (mut nll, mut count) = (0.0, 0usize);
    for r in per_row {
        let (a, b) = r?;
        nll += a;
        count += b;
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok((nll / count as f64).exp())
}

/// Per-sample `(position, correct)` pairs at masked positions.
fn masked_hits<M: SequenceModel + ?Sized>(
    model: &M,
    samples: &[Sample],
    candidates: &Candidates,
) -> Result<Vec<Vec<(usize, bool)>>> {
    par::map_indexed(samples.len(), |i| -> Result<Vec<(usize, bool)>> {
        let s = &samples[i];
        let logits = model.logits(&s.tokens)?;
        Ok((0..s.len())
            .filter(|&t| s.mask[t])
            .map(|t| (t, predict(logits.row(t), candidates) == s.targets[t]))
            .collect())
    })
    .into_iter()
    .collect()
}

/// Exact-match accuracy in `[0, 1]` over every masked position.
pub fn masked_accuracy<M: SequenceModel + ?Sized>(
    model: &M,
    samples: &[Sample],
    candidates: &Candidates,
) -> Result<f64> {
    let hits = masked_hits(model, samples, candidates)?;
    let (ok, total) = hits
        .iter()
        .flatten()
        .fold((0usize, 0usize), |(a, b), &(_, h)| (a + h as usize, b + 1));
    if total == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(ok as f64 / total as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceAccuracy {
    pub distance: usize,
    pub accuracy: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetentionReport {
    pub per_distance: Vec<DistanceAccuracy>,
    /// Sample-weighted mean accuracy, in percent.
    pub aggregate_percent: f64,
}

/// Greedy recall accuracy at each query, restricted to the value range and
/// bucketed by planted distance.
pub fn retention_probe<M: SequenceModel + ?Sized>(
    model: &M,
    samples: &[Sample],
    layout: &VocabLayout,
) -> Result<RetentionReport> {
    if samples.is_empty() {
        return Err(Error::Empty("retention dataset"));
    }
    if samples.iter().any(|s| s.distance.is_none()) {
        return Err(Error::Task(
            "retention probe needs rows with distance metadata".into(),
        ));
    }
    let hits = masked_hits(model, samples, &Candidates::Range(layout.values.clone()))?;
    let mut buckets: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (s, h) in samples.iter().zip(&hits) {
        let e = buckets.entry(s.distance.unwrap()).or_default();
        for &(_, ok) in h {
            e.0 += ok as usize;
            e.1 += 1;
        }
    }
    let (ok, total) = buckets
        .values()
        .fold((0, 0), |(a, b), &(x, y)| (a + x, b + y));
    if total == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(RetentionReport {
        per_distance: buckets
            .into_iter()
            .map(|(distance, (ok, n))| DistanceAccuracy {
                distance,
                accuracy: ok as f64 / n as f64,
                samples: n,
            })
            .collect(),
        aggregate_percent: 100.0 * ok as f64 / total as f64,
    })
}

pub const DEFAULT_NOISE_LEVELS: [f64; 4] = [0.0, 10.0, 20.0, 30.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub level_percent: f64,
    pub error_percent: f64,
    pub replaced_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseGrid {
    pub rows: Vec<NoiseRow>,
}

/// Candidate set used for accuracy on a task: value ids for key-value
/// recall, the whole vocabulary otherwise.
pub fn candidates_for(layout: &VocabLayout, kind: TaskKind) -> Candidates {
    match kind {
        TaskKind::KvRecall => Candidates::Range(layout.values.clone()),
        _ => Candidates::All,
    }
}

/// Error rate (percent) at each input-noise level (percent).
pub fn noise_robustness<M: SequenceModel + ?Sized>(
    model: &M,
    samples: &[Sample],
    layout: &VocabLayout,
    candidates: &Candidates,
    levels: &[f64],
    seed: u64,
) -> Result<NoiseGrid> {
    if levels.iter().any(|l| !(0.0..=100.0).contains(l)) {
        return Err(Error::Config(format!(
            "noise levels {levels:?} must lie in [0, 100]"
        )));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!(
            "noise levels {levels:?} must be strictly increasing"
        )));
    }
    let root = Rng::new(seed);
    let mut rows = Vec::with_capacity(levels.len());
    for (i, &level) in levels.iter().enumerate() {
        let (noisy, stats) =
            datagen::inject_noise(samples, level / 100.0, layout, &mut root.fork(i as u64))?;
        let acc = masked_accuracy(model, &noisy, candidates)?;
        rows.push(NoiseRow {
            level_percent: level,
            error_percent: 100.0 - 100.0 * acc,
            replaced_fraction: stats.fraction(),
        });
    }
    Ok(NoiseGrid { rows })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherencePoint {
    pub position: usize,
    /// `None` where no row has a masked target at this position.
    pub accuracy: Option<f64>,
    pub count: usize,
}

/// Exact-match accuracy (full-vocabulary argmax) at each absolute position.
pub fn coherence_curve<M: SequenceModel + ?Sized>(
    model: &M,
    samples: &[Sample],
) -> Result<Vec<CoherencePoint>> {
    let n = samples
        .iter()
        .map(Sample::len)
        .max()
        .ok_or(Error::Empty("coherence dataset"))?;
    let hits = masked_hits(model, samples, &Candidates::All)?;
    let mut tally = vec![(0usize, 0usize); n];
    for &(t, ok) in hits.iter().flatten() {
        tally[t].0 += ok as usize;
        tally[t].1 += 1;
    }
    Ok(tally
        .into_iter()
        .enumerate()
        .map(|(position, (ok, count))| CoherencePoint {
            position,
            accuracy: (count > 0).then(|| ok as f64 / count as f64),
            count,
        })
        .collect())
}

pub const DEFAULT_SEQ_LENS: [usize; 4] = [128, 256, 512, 1000];
pub const MIN_REPETITIONS: usize = 20;
pub const WARMUPS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub seq_len: usize,
    pub gate_mode: GateMode,
    pub median_ms: f64,
    pub flops: u64,
    pub gate_flops: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyCurve {
    pub rows: Vec<LatencyRow>,
    pub repetitions: usize,
    pub warmups: usize,
    /// Timings are only meaningful when nothing else ran concurrently.
    pub requires_exclusive: bool,
}

impl LatencyCurve {
    /// `learned ÷ disabled` median latency at `seq_len`, when both were measured.
    pub fn overhead(&self, seq_len: usize) -> Option<f64> {
        let find = |m: GateMode| {
            self.rows
                .iter()
                .find(|r| r.seq_len == seq_len && r.gate_mode == m)
                .map(|r| r.median_ms)
        };
        Some(find(GateMode::Learned)? / find(GateMode::Disabled)?)
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median wall-clock time of full-sequence forward passes on fixed random
/// inputs. Runs sequentially; `repetitions` is raised to at least
/// [`MIN_REPETITIONS`].
pub fn latency_bench<T: Scalar>(
    params: &Params<T>,
    seq_lens: &[usize],
    repetitions: usize,
    modes: &[GateMode],
    seed: u64,
) -> Result<LatencyCurve> {
    let cfg = &params.config;
    if let Some(&n) = seq_lens.iter().find(|&&n| n > cfg.max_seq_len || n == 0) {
        return Err(Error::SequenceTooLong {
            len: n,
            max: cfg.max_seq_len,
        });
    }
    let reps = repetitions.max(MIN_REPETITIONS);
    let mut rng = Rng::new(seed);
    let mut rows = Vec::new();
    for &n in seq_lens {
        let tokens: Vec<usize> = (0..n).map(|_| rng.below(0, cfg.vocab_size)).collect();
        for &mode in modes {
            for _ in 0..WARMUPS {
                std::hint::black_box(model::forward(params, &tokens, mode, false)?);
            }
            let mut times = Vec::with_capacity(reps);
            for _ in 0..reps {
                let t0 = Instant::now();
                std::hint::black_box(model::forward(params, &tokens, mode, false)?);
                times.push(t0.elapsed().as_secs_f64() * 1e3);
            }
            let flops = count_flops(cfg, n, mode);
            rows.push(LatencyRow {
                seq_len: n,
                gate_mode: mode,
                median_ms: median(&times),
                flops: flops.total(),
                gate_flops: flops.gate,
            });
        }
    }
    Ok(LatencyCurve {
        rows,
        repetitions: reps,
        warmups: WARMUPS,
        requires_exclusive: true,
    })
}

/// Results of one ablation arm.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArmSummary {
    pub gate_mode: GateMode,
    pub final_val_ppl: f64,
    pub retention: Option<RetentionReport>,
    pub noise: NoiseGrid,
    pub history: Vec<EpochReport>,
    /// One digest per epoch of the batch stream consumed.
    pub stream_digests: Vec<String>,
    pub synaptic_unchanged: bool,
}

impl ArmSummary {
    pub fn loss_curve(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.train_loss).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationReport {
    pub arms: Vec<ArmSummary>,
}

/// Signed differences, gate on minus gate off. Reported, never judged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationDeltas {
    /// `(ppl_on − ppl_off) / ppl_off`, percent.
    pub perplexity_change_percent: f64,
    pub retention_change_points: Option<f64>,
    pub final_loss_change: f64,
}

impl AblationReport {
    pub fn arm(&self, mode: GateMode) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.gate_mode == mode)
    }

    pub fn deltas(&self) -> Option<AblationDeltas> {
        let on = self.arm(GateMode::Learned)?;
        let off = self.arm(GateMode::Disabled)?;
        let retention = match (&on.retention, &off.retention) {
            (Some(a), Some(b)) => Some(a.aggregate_percent - b.aggregate_percent),
            _ => None,
        };
        Some(AblationDeltas {
            perplexity_change_percent: 100.0 * (on.final_val_ppl - off.final_val_ppl)
                / off.final_val_ppl,
            retention_change_points: retention,
            final_loss_change: on.loss_curve().last()? - off.loss_curve().last()?,
        })
    }
}

fn run_arm<T: Scalar>(
    model: &ModelConfig,
    train_cfg: &TrainConfig,
    task: &TaskSpec,
    splits: &Splits,
    noise_levels: &[f64],
    on_epoch: &(dyn Fn(GateMode, &EpochReport) + Sync),
) -> Result<ArmSummary> {
    let mode = model.gate_mode;
    let init: Params<T> = train::init_params(model, train_cfg)?;
    let mut sink = |r: &EpochReport, _: &Params<T>, _| -> Result<()> {
        on_epoch(mode, r);
        Ok(())
    };
    let run = train::run_training(model, train_cfg, splits, Some(init.clone()), &mut sink)
        .map_err(|f| f.error)?;
    let scorer = Gated::new(&run.params, mode);
    let retention = match task.kind {
        TaskKind::KvRecall => Some(retention_probe(
            &scorer,
            &splits.validation,
            &splits.layout,
        )?),
        _ => None,
    };
    let noise = noise_robustness(
        &scorer,
        &splits.validation,
        &splits.layout,
        &candidates_for(&splits.layout, task.kind),
        noise_levels,
        train_cfg.seed,
    )?;
    let synaptic_unchanged = run
        .params
        .synaptic()
        .iter()
        .zip(init.synaptic())
        .all(|(a, b)| a.bit_eq(b));
    Ok(ArmSummary {
        gate_mode: mode,
        final_val_ppl: run.history.last().map_or(f64::NAN, |r| r.val_ppl),
        retention,
        noise,
        stream_digests: run
            .history
            .iter()
            .map(|r| r.stream_digest.clone())
            .collect(),
        history: run.history,
        synaptic_unchanged,
    })
}

/// Trains two arms that differ only in gate mode (learned vs disabled) on
/// identical data and seeds, then evaluates both.
pub fn ablate<T: Scalar>(
    model: &ModelConfig,
    train_cfg: &TrainConfig,
    task: &TaskSpec,
    noise_levels: &[f64],
    on_epoch: &(dyn Fn(GateMode, &EpochReport) + Sync),
) -> Result<AblationReport> {
    let splits = datagen::build_splits(task, model.vocab_size)?;
    let on = ModelConfig {
        gate_mode: GateMode::Learned,
        ..model.clone()
    };
    let off = ModelConfig {
        gate_mode: GateMode::Disabled,
        ..model.clone()
    };
    let (a, b) = par::join(
        || run_arm::<T>(&on, train_cfg, task, &splits, noise_levels, on_epoch),
        || run_arm::<T>(&off, train_cfg, task, &splits, noise_levels, on_epoch),
    );
    Ok(AblationReport { arms: vec![a?, b?] })
}
