//! The outer optimisation loop.
//!
//! One backward pass per batch on `CE + λ·Σ‖W_s‖²_F`, then a single plain
//! gradient-descent step over every tensor (synaptic matrices included).
//! After each epoch the validation perplexity is compared against the
//! threshold and the learning rate decays when it is exceeded.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::{self, Batch, Sample, Splits};
use crate::error::{Error, Result};
use crate::eval;
use crate::graph::{Graph, Var};
use crate::model::{forward_graph, is_synaptic_index, GateMode, ModelConfig, ParamVars, Params};
use crate::par;
use crate::rng::{Rng, RngState};
use crate::scalar::{c, Scalar};
use crate::tensor::Tensor2;

fn d_lr() -> f64 {
    3e-4
}
fn d_decay() -> f64 {
    0.5
}
fn d_reg() -> f64 {
    1e-4
}
fn d_min_lr() -> f64 {
    1e-6
}
fn d_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_decay")]
    pub lr_decay: f64,
    /// Validation perplexity above which the learning rate decays; `1.5·V` when unset.
    #[serde(default)]
    pub ppl_threshold: Option<f64>,
    #[serde(default = "d_reg")]
    pub reg_weight: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub grad_clip: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_min_lr")]
    pub min_lr: f64,
    #[serde(default = "d_true")]
    pub shuffle: bool,
}

impl TrainConfig {
    pub fn new(epochs: usize, batch_size: usize) -> Self {
        Self {
            lr: d_lr(),
            lr_decay: d_decay(),
            ppl_threshold: None,
            reg_weight: d_reg(),
            epochs,
            batch_size,
            grad_clip: None,
            seed: 0,
            min_lr: d_min_lr(),
            shuffle: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return bad(format!("lr_decay {} must lie in (0, 1)", self.lr_decay));
        }
        if !(self.min_lr > 0.0) {
            return bad(format!("min_lr {} must be positive", self.min_lr));
        }
        if !(self.lr > self.min_lr) || !self.lr.is_finite() {
            return bad(format!("lr {} must exceed min_lr {}", self.lr, self.min_lr));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.reg_weight >= 0.0) {
            return bad(format!("reg_weight {} must be >= 0", self.reg_weight));
        }
        if let Some(t) = self.ppl_threshold {
            if !(t > 0.0) {
                return bad(format!("ppl_threshold {t} must be positive"));
            }
        }
        if let Some(g) = self.grad_clip {
            if !(g > 0.0) {
                return bad(format!("grad_clip {g} must be positive"));
            }
        }
        Ok(())
    }

    pub fn threshold(&self, vocab_size: usize) -> f64 {
        self.ppl_threshold.unwrap_or(1.5 * vocab_size as f64)
    }
}

/// Graph handles for the three loss terms.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub total: Var,
    pub ce: Var,
    pub reg: Var,
}

/// `total = ce + λ·Σ frobenius_sq(W_s)`; `total` is the root for backward.
pub fn loss<T: Scalar>(
    g: &mut Graph<'_, T>,
    logits: Var,
    targets: &[usize],
    mask: &[bool],
    synaptic: &[Var],
    reg_weight: f64,
) -> Result<LossParts> {
    if !(reg_weight >= 0.0) {
        return Err(Error::Config(format!(
            "reg_weight {reg_weight} must be >= 0"
        )));
    }
    let ce = g.cross_entropy_logits(logits, targets, mask)?;
    let reg = regularizer(g, synaptic, reg_weight)?;
    let total = g.add(ce, reg)?;
    Ok(LossParts { total, ce, reg })
}

fn regularizer<T: Scalar>(g: &mut Graph<'_, T>, synaptic: &[Var], reg_weight: f64) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for &w in synaptic {
        let f = g.frobenius_sq(w)?;
        acc = Some(match acc {
            Some(a) => g.add(a, f)?,
            None => f,
        });
    }
    match acc {
        Some(a) => g.scale(a, c(reg_weight)),
        None => Ok(g.constant(Tensor2::zeros(1, 1))),
    }
}

/// Loss values of one optimisation step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub total: f64,
    pub ce: f64,
    pub reg: f64,
    /// `Σ‖W_s‖²_F` of the pre-step parameters, summed directly in `f64`.
    pub synaptic_sq_norm: f64,
}

/// Gradients of the batch objective for every tensor in canonical order.
///
/// Rows are differentiated independently (in parallel when enabled) with
/// root `(m_r / M)·CE_r`, where `m_r` is the row's masked count and `M` the
/// batch total; the regulariser is differentiated once. Row gradients are
/// summed in row order, so the result does not depend on scheduling.
pub fn batch_gradients<T: Scalar>(
    params: &Params<T>,
    batch: &Batch,
    reg_weight: f64,
    mode: GateMode,
) -> Result<(Vec<Tensor2<T>>, StepRecord)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let total_masked = batch.masked_count();
    if total_masked == 0 {
        return Err(Error::EmptyMask);
    }
    let cfg = &params.config;
    let rows = par::map_indexed(batch.len(), |r| -> Result<(f64, Vec<Tensor2<T>>)> {
        let s = &batch.samples[r];
        let mut g = Graph::new();
        let (pv, vars) = ParamVars::register(&mut g, params, mode, true)?;
        let (logits, _) = forward_graph(&mut g, cfg, &pv, &s.tokens, mode, false)?;
        let ce = g.cross_entropy_logits(logits, &s.targets, &s.mask)?;
        let root = g.scale(ce, c(s.masked_count() as f64 / total_masked as f64))?;
        let mut grads = g.backward(root)?;
        let value = g.value(root).item().to_f64().unwrap();
        Ok((value, vars.into_iter().map(|v| grads.take(v)).collect()))
    });

    let mut ce = 0.0;
    let mut acc: Option<Vec<Tensor2<T>>> = None;
    for row in rows {
        let (value, grads) = row?;
        ce += value;
        match &mut acc {
            None => acc = Some(grads),
            Some(a) => a.iter_mut().zip(&grads).for_each(|(a, g)| a.add_assign(g)),
        }
    }
    let mut grads = acc.expect("non-empty batch");

    let synaptic: Vec<&Tensor2<T>> = params.synaptic();
    let mut g = Graph::new();
    let vars: Vec<Var> = synaptic
        .iter()
        .map(|&w| {
            if mode == GateMode::Learned {
                g.param_ref(w)
            } else {
                g.constant_ref(w)
            }
        })
        .collect();
    let reg_var = regularizer(&mut g, &vars, reg_weight)?;
    let reg = g.value(reg_var).item().to_f64().unwrap();
    if mode == GateMode::Learned && !vars.is_empty() {
        let mut rg = g.backward(reg_var)?;
        let n_layers = cfg.n_layers;
        let slots = (0..grads.len()).filter(|&i| is_synaptic_index(i, n_layers));
        for (slot, &v) in slots.zip(&vars) {
            grads[slot].add_assign(&rg.take(v));
        }
    }
    let synaptic_sq_norm = synaptic
        .iter()
        .flat_map(|w| w.data())
        .map(|x| {
            let x = x.to_f64().unwrap();
            x * x
        })
        .sum();
    Ok((
        grads,
        StepRecord {
            total: ce + reg,
            ce,
            reg,
            synaptic_sq_norm,
        },
    ))
}

/// `p ← p − η·g` for every tensor, after optional global-norm clipping.
pub fn sgd_step<T: Scalar>(
    params: &mut Params<T>,
    grads: &[Tensor2<T>],
    lr: f64,
    grad_clip: Option<f64>,
) -> Result<()> {
    let names = params
        .named_tensors()
        .into_iter()
        .map(|(n, _)| n)
        .collect::<Vec<_>>();
    if grads.len() != names.len() {
        return Err(Error::shape(
            "sgd_step",
            format!("{} gradients for {} tensors", grads.len(), names.len()),
        ));
    }
    let mut norm_sq = 0.0f64;
    for ((name, g), p) in names.iter().zip(grads).zip(params.tensors()) {
        if g.shape() != p.shape() {
            return Err(Error::shape(
                "sgd_step",
                format!(
                    "gradient for {name} is {:?}, tensor is {:?}",
                    g.shape(),
                    p.shape()
                ),
            ));
        }
        if !g.is_finite() {
            return Err(Error::non_finite(format!("gradient of {name}")));
        }
        norm_sq += g
            .data()
            .iter()
            .map(|x| x.to_f64().unwrap().powi(2))
            .sum::<f64>();
    }
    let mut step = lr;
    if let Some(clip) = grad_clip {
        let norm = norm_sq.sqrt();
        if norm > clip {
            step *= clip / norm;
        }
    }
    let step: T = c(step);
    for ((name, p), g) in names.iter().zip(params.tensors_mut()).zip(grads) {
        for (x, &gv) in p.data_mut().iter_mut().zip(g.data()) {
            *x = *x - step * gv;
        }
        if !p.is_finite() {
            return Err(Error::non_finite(format!("update of {name}")));
        }
    }
    Ok(())
}

/// Statistics of one pass over the training batches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub mean_ce: f64,
    pub mean_reg: f64,
    pub steps: Vec<StepRecord>,
    /// SHA-256 (hex) over the batch stream consumed, in order.
    pub stream_digest: String,
}

pub fn train_epoch<T: Scalar>(
    params: &mut Params<T>,
    batches: &[Batch],
    cfg: &TrainConfig,
    lr: f64,
    mode: GateMode,
    epoch: usize,
) -> Result<EpochStats> {
    if batches.is_empty() {
        return Err(Error::Empty("batch stream"));
    }
    let mut steps = Vec::with_capacity(batches.len());
    let mut h = Sha256::new();
    for (i, batch) in batches.iter().enumerate() {
        datagen::feed_samples(&mut h, &batch.samples);
        let abort = |e: Error| Error::TrainAbort {
            epoch,
            batch: i,
            source: Box::new(e),
        };
        let (grads, record) =
            batch_gradients(params, batch, cfg.reg_weight, mode).map_err(abort)?;
        if !record.total.is_finite() {
            return Err(abort(Error::non_finite("batch loss")));
        }
        sgd_step(params, &grads, lr, cfg.grad_clip).map_err(abort)?;
        steps.push(record);
    }
    let n = steps.len() as f64;
    let mean = |f: fn(&StepRecord) -> f64| steps.iter().map(f).sum::<f64>() / n;
    Ok(EpochStats {
        mean_loss: mean(|s| s.total),
        mean_ce: mean(|s| s.ce),
        mean_reg: mean(|s| s.reg),
        stream_digest: hex(&h.finalize()),
        steps,
    })
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// `η ← max(η·γ, min_lr)` when `val_ppl > τ`; returns the new rate and whether it decayed.
pub fn lr_decay_check(val_ppl: f64, lr: f64, cfg: &TrainConfig, vocab_size: usize) -> (f64, bool) {
    if val_ppl > cfg.threshold(vocab_size) {
        ((lr * cfg.lr_decay).max(cfg.min_lr), true)
    } else {
        (lr, false)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_ce: f64,
    pub train_reg: f64,
    pub val_ppl: f64,
    /// Learning rate in effect during this epoch.
    pub lr: f64,
    pub decay_triggered: bool,
    pub wall_ms: f64,
    pub stream_digest: String,
    pub steps: Vec<StepRecord>,
}

/// Receives each epoch's report and the post-epoch parameters.
pub trait EpochSink<T> {
    fn on_epoch(&mut self, report: &EpochReport, params: &Params<T>, rng: RngState) -> Result<()>;
}

impl<T, F> EpochSink<T> for F
where
    F: FnMut(&EpochReport, &Params<T>, RngState) -> Result<()>,
{
    fn on_epoch(&mut self, report: &EpochReport, params: &Params<T>, rng: RngState) -> Result<()> {
        self(report, params, rng)
    }
}

pub struct NullSink;

impl<T> EpochSink<T> for NullSink {
    fn on_epoch(&mut self, _: &EpochReport, _: &Params<T>, _: RngState) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainRun<T> {
    pub params: Params<T>,
    pub history: Vec<EpochReport>,
}

/// A failed run with whatever history completed before the error.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct TrainFailure {
    #[source]
    pub error: Error,
    pub history: Vec<EpochReport>,
}

impl From<Error> for TrainFailure {
    fn from(error: Error) -> Self {
        Self {
            error,
            history: Vec::new(),
        }
    }
}

/// Seed-derived parameter initialisation used by [`run_training`].
pub fn init_params<T: Scalar>(model: &ModelConfig, train: &TrainConfig) -> Result<Params<T>> {
    Params::init(model, &mut Rng::new(train.seed).fork(10))
}

/// Runs `epochs` of [`train_epoch`], each followed by validation perplexity
/// and [`lr_decay_check`]. The gate mode comes from `model.gate_mode`.
pub fn run_training<T: Scalar>(
    model: &ModelConfig,
    train: &TrainConfig,
    splits: &Splits,
    init: Option<Params<T>>,
    sink: &mut dyn EpochSink<T>,
) -> std::result::Result<TrainRun<T>, TrainFailure> {
    model.validate()?;
    train.validate()?;
    if splits.validation.is_empty() {
        return Err(Error::Task("validation split is empty".into()).into());
    }
    if splits.layout.vocab_size != model.vocab_size {
        return Err(Error::Config(format!(
            "task vocabulary {} differs from model vocabulary {}",
            splits.layout.vocab_size, model.vocab_size
        ))
        .into());
    }
    let mut params = match init {
        Some(p) if p.config != *model => {
            return Err(
                Error::Config("initial parameters use a different model config".into()).into(),
            )
        }
        Some(p) => p,
        None => init_params(model, train)?,
    };
    let mode = model.gate_mode;
    let mut shuffle_rng = Rng::new(train.seed).fork(20);
    let mut lr = train.lr;
    let mut history: Vec<EpochReport> = Vec::with_capacity(train.epochs);

    for epoch in 0..train.epochs {
        let started = Instant::now();
        let step = (|| -> Result<EpochReport> {
            let stream = datagen::batches(
                &splits.train,
                train.batch_size,
                &mut shuffle_rng,
                train.shuffle,
            )?;
            let stats = train_epoch(&mut params, &stream, train, lr, mode, epoch)?;
            let val_ppl = eval::perplexity(&eval::Gated::new(&params, mode), &splits.validation)?;
            let (next_lr, decayed) = lr_decay_check(val_ppl, lr, train, model.vocab_size);
            let report = EpochReport {
                epoch,
                train_loss: stats.mean_loss,
                train_ce: stats.mean_ce,
                train_reg: stats.mean_reg,
                val_ppl,
                lr,
                decay_triggered: decayed,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
                stream_digest: stats.stream_digest,
                steps: stats.steps,
            };
            lr = next_lr;
            Ok(report)
        })();
        let report = match step {
            Ok(r) => r,
            Err(error) => return Err(TrainFailure { error, history }),
        };
        if let Err(error) = sink.on_epoch(&report, &params, shuffle_rng.state()) {
            history.push(report);
            return Err(TrainFailure { error, history });
        }
        history.push(report);
    }
    Ok(TrainRun { params, history })
}

/// Convenience for tests and tools: one batch built from explicit rows.
pub fn batch_of(samples: &[Sample]) -> Batch {
    Batch {
        samples: samples.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{TaskSpec, VocabLayout};

    fn tiny_model() -> ModelConfig {
        ModelConfig {
            vocab_size: 16,
            d_model: 8,
            n_heads: 2,
            n_layers: 2,
            d_ff: 16,
            max_seq_len: 10,
            sigma_init: 0.3,
            gate_mode: GateMode::Learned,
        }
    }

    fn tiny_splits() -> Splits {
        let layout = VocabLayout::synthetic(16, 5).unwrap();
        let spec = TaskSpec::copy(10, 0, 0);
        Splits {
            train: datagen::gen_copy(&spec, &layout, 12, &mut Rng::new(1)).unwrap(),
            validation: datagen::gen_copy(&spec, &layout, 4, &mut Rng::new(2)).unwrap(),
            layout,
        }
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = TrainConfig::new(1, 4);
        assert_eq!(
            (cfg.lr, cfg.lr_decay, cfg.reg_weight, cfg.min_lr),
            (3e-4, 0.5, 1e-4, 1e-6)
        );
        assert_eq!(cfg.threshold(64), 96.0);
        cfg.validate().unwrap();
        for bad in [
            TrainConfig {
                epochs: 0,
                ..cfg.clone()
            },
            TrainConfig {
                lr_decay: 1.0,
                ..cfg.clone()
            },
            TrainConfig {
                lr: 1e-7,
                ..cfg.clone()
            },
            TrainConfig {
                batch_size: 0,
                ..cfg.clone()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn loss_examples() {
        let mut g = Graph::<f64>::new();
        let logits = g.constant(Tensor2::from_rows(&[vec![0.2, -0.4, 1.0]]).unwrap());
        let w1 = g.param(Tensor2::eye(2));
        let w2 = g.param(Tensor2::eye(2));
        let off = loss(&mut g, logits, &[2], &[true], &[w1, w2], 0.0).unwrap();
        assert_eq!(g.value(off.total).item(), g.value(off.ce).item());
        let on = loss(&mut g, logits, &[2], &[true], &[w1, w2], 0.1).unwrap();
        assert!((g.value(on.reg).item() - 0.4).abs() < 1e-12);
        assert!((g.value(on.total).item() - g.value(on.ce).item() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn sgd_scalar_and_null_steps() {
        let mut p = Params::<f64>::init(&tiny_model(), &mut Rng::new(0)).unwrap();
        let before = p.clone();
        let grads: Vec<_> = p.tensors().iter().map(|t| t.map(|_| 2.0)).collect();
        sgd_step(&mut p, &grads, 0.0, None).unwrap();
        assert!(p.bit_eq(&before));
        let zeros: Vec<_> = p.tensors().iter().map(|t| t.map(|_| 0.0)).collect();
        sgd_step(&mut p, &zeros, 0.5, None).unwrap();
        assert!(p.bit_eq(&before));

        p.tok_emb.data_mut()[0] = 1.0;
        sgd_step(&mut p, &grads, 0.1, None).unwrap();
        assert!((p.tok_emb.data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sgd_rejects_bad_gradients() {
        let mut p = Params::<f32>::init(&tiny_model(), &mut Rng::new(0)).unwrap();
        let mut grads: Vec<_> = p.tensors().iter().map(|t| t.map(|_| 0.0)).collect();
        grads[4].data_mut()[0] = f32::NAN;
        let err = sgd_step(&mut p, &grads, 0.1, None).unwrap_err();
        assert!(err.to_string().contains("layers.0.w_q"), "{err}");
        assert!(sgd_step(&mut p, &grads[1..], 0.1, None).is_err());
    }

    #[test]
    fn clipping_bounds_the_update() {
        let mut p = Params::<f64>::init(&tiny_model(), &mut Rng::new(0)).unwrap();
        let before = p.clone();
        let grads: Vec<_> = p.tensors().iter().map(|t| t.map(|_| 1.0)).collect();
        sgd_step(&mut p, &grads, 1.0, Some(0.5)).unwrap();
        let moved: f64 = p
            .tensors()
            .iter()
            .zip(before.tensors())
            .flat_map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)))
            .sum();
        assert!((moved.sqrt() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn pure_regularizer_contracts_synaptic_norm() {
        let cfg = tiny_model();
        let mut p = Params::<f64>::init(&cfg, &mut Rng::new(3)).unwrap();
        let (lr, lambda) = (0.1, 0.5); // 2ηλ = 0.1
        for _ in 0..3 {
            let before: Vec<f64> = p.synaptic().iter().map(|w| w.sum_sq().sqrt()).collect();
            let mut g = Graph::new();
            let vars: Vec<Var> = p.synaptic().into_iter().map(|w| g.param_ref(w)).collect();
            let reg = regularizer(&mut g, &vars, lambda).unwrap();
            let mut rg = g.backward(reg).unwrap();
            let mut grads: Vec<_> = p.tensors().iter().map(|t| t.map(|_| 0.0)).collect();
            let slots: Vec<usize> = (0..grads.len())
                .filter(|&i| is_synaptic_index(i, 2))
                .collect();
            for (&s, &v) in slots.iter().zip(&vars) {
                grads[s] = rg.take(v);
            }
            drop(g);
            sgd_step(&mut p, &grads, lr, None).unwrap();
            for (w, b) in p.synaptic().iter().zip(before) {
                assert!((w.sum_sq().sqrt() - (1.0 - 2.0 * lr * lambda) * b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn decay_rule() {
        let cfg = TrainConfig {
            ppl_threshold: Some(40.0),
            lr: 1e-3,
            ..TrainConfig::new(1, 1)
        };
        assert_eq!(lr_decay_check(50.0, 1e-3, &cfg, 64), (5e-4, true));
        assert_eq!(lr_decay_check(30.0, 1e-3, &cfg, 64), (1e-3, false));
        assert_eq!(lr_decay_check(40.0, 1e-3, &cfg, 64), (1e-3, false));
        let mut lr = 1e-3;
        for _ in 0..3 {
            lr = lr_decay_check(50.0, lr, &cfg, 64).0;
        }
        assert_eq!(lr, 1.25e-4);
        for _ in 0..20 {
            lr = lr_decay_check(50.0, lr, &cfg, 64).0;
            assert!(lr >= cfg.min_lr);
        }
        assert_eq!(lr, cfg.min_lr);
    }

    #[test]
    fn batch_gradients_match_sequential_and_disabled_mode_freezes_synaptic() {
        let cfg = tiny_model();
        let p = Params::<f64>::init(&cfg, &mut Rng::new(4)).unwrap();
        let batch = batch_of(&tiny_splits().train[..5]);
        let (g1, r1) = batch_gradients(&p, &batch, 1e-2, GateMode::Learned).unwrap();
        par::set_strategy(par::Strategy::Sequential);
        let (g2, r2) = batch_gradients(&p, &batch, 1e-2, GateMode::Learned).unwrap();
        par::set_strategy(par::Strategy::Parallel);
        assert_eq!(r1, r2);
        assert!(g1.iter().zip(&g2).all(|(a, b)| a.bit_eq(b)));
        assert!((r1.total - r1.ce - r1.reg).abs() < 1e-12);
        assert!((r1.reg - 1e-2 * r1.synaptic_sq_norm).abs() < 1e-12);

        let (gd, _) = batch_gradients(&p, &batch, 1e-2, GateMode::Disabled).unwrap();
        for (i, g) in gd.iter().enumerate() {
            if is_synaptic_index(i, 2) {
                assert!(g.data().iter().all(|&x| x == 0.0));
            }
        }
        for (i, g) in g1.iter().enumerate() {
            if is_synaptic_index(i, 2) {
                assert!(g.data().iter().any(|&x| x != 0.0));
            }
        }
    }

    #[test]
    fn zero_lr_epoch_leaves_params() {
        let cfg = tiny_model();
        let mut p = Params::<f32>::init(&cfg, &mut Rng::new(4)).unwrap();
        let before = p.clone();
        let splits = tiny_splits();
        let stream = datagen::batches(&splits.train, 4, &mut Rng::new(0), false).unwrap();
        let stats = train_epoch(
            &mut p,
            &stream,
            &TrainConfig::new(1, 4),
            0.0,
            GateMode::Learned,
            0,
        )
        .unwrap();
        assert!(p.bit_eq(&before));
        assert_eq!(stats.steps.len(), 3);
    }

    #[test]
    fn training_history_and_replay() {
        let model = tiny_model();
        let train = TrainConfig {
            lr: 0.05,
            ..TrainConfig::new(3, 4)
        };
        let splits = tiny_splits();
        let a = run_training::<f32>(&model, &train, &splits, None, &mut NullSink).unwrap();
        let b = run_training::<f32>(&model, &train, &splits, None, &mut NullSink).unwrap();
        assert_eq!(
            a.history.iter().map(|r| r.epoch).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert!(a.params.bit_eq(&b.params));
        for (x, y) in a.history.iter().zip(&b.history) {
            assert_eq!(x.steps, y.steps);
            assert_eq!(x.val_ppl.to_bits(), y.val_ppl.to_bits());
            assert_eq!(x.stream_digest, y.stream_digest);
        }
        let lrs: Vec<f64> = a.history.iter().map(|r| r.lr).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn disabled_run_keeps_synaptic_bitwise() {
        let model = ModelConfig {
            gate_mode: GateMode::Disabled,
            ..tiny_model()
        };
        let train = TrainConfig {
            lr: 0.05,
            reg_weight: 0.1,
            ..TrainConfig::new(2, 4)
        };
        let init: Params<f32> = init_params(&model, &train).unwrap();
        let run = run_training(&model, &train, &tiny_splits(), None, &mut NullSink).unwrap();
        for (a, b) in run.params.synaptic().iter().zip(init.synaptic()) {
            assert!(a.bit_eq(b));
        }
        assert!(!run.params.layers[0].w_q.bit_eq(&init.layers[0].w_q));
    }

    #[test]
    fn sink_failure_keeps_partial_history() {
        let model = tiny_model();
        let train = TrainConfig {
            lr: 0.01,
            ..TrainConfig::new(3, 4)
        };
        let mut calls = 0;
        let mut sink = |_: &EpochReport, _: &Params<f32>, _: RngState| -> Result<()> {
            calls += 1;
            if calls == 2 {
                Err(Error::Io("disk full".into()))
            } else {
                Ok(())
            }
        };
        let err = run_training(&model, &train, &tiny_splits(), None, &mut sink).unwrap_err();
        assert_eq!(err.history.len(), 2);
        assert!(matches!(err.error, Error::Io(_)));
    }

    #[test]
    fn empty_validation_rejected() {
        let mut splits = tiny_splits();
        splits.validation.clear();
        let r = run_training::<f32>(
            &tiny_model(),
            &TrainConfig::new(1, 4),
            &splits,
            None,
            &mut NullSink,
        );
        assert!(r.is_err());
    }
}
