//! Pre-norm micro-transformer with a per-layer resonance gate.
//!
//! Each layer computes the multi-head causal attention output `A`, a
//! relevance map `R = sigmoid(A · W_s)` and the reinforced output
//! `O = A ⊙ R`, which is what enters the residual stream.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::rng::{randn, Rng};
use crate::scalar::{c, Scalar};
use crate::tensor::Tensor2;

pub const LAYER_NORM_EPS: f64 = 1e-5;
/// Standard deviation used for every non-synaptic weight matrix.
pub const WEIGHT_INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// `R = sigmoid(A · W_s)`, `O = A ⊙ R`.
    #[default]
    Learned,
    /// `R ≡ 1`, so `O = A`.
    ForcedOnes,
    /// Gate skipped entirely; `W_s` is not on the graph.
    Disabled,
}

impl GateMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GateMode::Learned => "learned",
            GateMode::ForcedOnes => "forced_ones",
            GateMode::Disabled => "disabled",
        }
    }
}

impl fmt::Display for GateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(GateMode::Learned),
            "forced_ones" => Ok(GateMode::ForcedOnes),
            "disabled" => Ok(GateMode::Disabled),
            other => Err(Error::Config(format!(
                "unknown gate mode {other:?} (expected learned, forced_ones or disabled)"
            ))),
        }
    }
}

fn default_sigma() -> f64 {
    0.02
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    /// Standard deviation of the synaptic matrices at init.
    #[serde(default = "default_sigma")]
    pub sigma_init: f64,
    #[serde(default)]
    pub gate_mode: GateMode,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_layers", self.n_layers),
            ("d_ff", self.d_ff),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.max_seq_len < 2 {
            return Err(Error::Config("max_seq_len must be at least 2".into()));
        }
        if !(self.sigma_init >= 0.0 && self.sigma_init.is_finite()) {
            return Err(Error::Config(format!(
                "sigma_init {} must be >= 0",
                self.sigma_init
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Closed-form number of scalar parameters.
    pub fn param_count(&self) -> usize {
        let (v, d, f, ctx) = (self.vocab_size, self.d_model, self.d_ff, self.max_seq_len);
        let per_layer = 4 * d * d // q, k, v, o
            + d * d // synaptic
            + d * f + f // ffn in
            + f * d + d // ffn out
            + 4 * d; // two layer norms
        v * d + ctx * d + self.n_layers * per_layer + 2 * d + d * v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub ln1_gain: Tensor2<T>,
    pub ln1_bias: Tensor2<T>,
    pub w_q: Tensor2<T>,
    pub w_k: Tensor2<T>,
    pub w_v: Tensor2<T>,
    pub w_o: Tensor2<T>,
    /// Synaptic matrix, `d × d`.
    pub w_s: Tensor2<T>,
    pub ln2_gain: Tensor2<T>,
    pub ln2_bias: Tensor2<T>,
    pub w_ff1: Tensor2<T>,
    pub b_ff1: Tensor2<T>,
    pub w_ff2: Tensor2<T>,
    pub b_ff2: Tensor2<T>,
}

const LAYER_FIELDS: [&str; 13] = [
    "ln1_gain", "ln1_bias", "w_q", "w_k", "w_v", "w_o", "w_s", "ln2_gain", "ln2_bias", "w_ff1",
    "b_ff1", "w_ff2", "b_ff2",
];

impl<T> LayerParams<T> {
    fn fields(&self) -> [&Tensor2<T>; 13] {
        [
            &self.ln1_gain,
            &self.ln1_bias,
            &self.w_q,
            &self.w_k,
            &self.w_v,
            &self.w_o,
            &self.w_s,
            &self.ln2_gain,
            &self.ln2_bias,
            &self.w_ff1,
            &self.b_ff1,
            &self.w_ff2,
            &self.b_ff2,
        ]
    }

    fn fields_mut(&mut self) -> [&mut Tensor2<T>; 13] {
        [
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.w_q,
            &mut self.w_k,
            &mut self.w_v,
            &mut self.w_o,
            &mut self.w_s,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
            &mut self.w_ff1,
            &mut self.b_ff1,
            &mut self.w_ff2,
            &mut self.b_ff2,
        ]
    }
}

/// Complete trainable state: transformer weights plus one synaptic matrix per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    pub config: ModelConfig,
    pub tok_emb: Tensor2<T>,
    pub pos_emb: Tensor2<T>,
    pub layers: Vec<LayerParams<T>>,
    pub lnf_gain: Tensor2<T>,
    pub lnf_bias: Tensor2<T>,
    pub unembed: Tensor2<T>,
}

/// Expected `(name, rows, cols)` of every tensor, in canonical order.
pub fn tensor_layout(cfg: &ModelConfig) -> Vec<(String, usize, usize)> {
    let (v, d, f) = (cfg.vocab_size, cfg.d_model, cfg.d_ff);
    let mut out = vec![
        ("tok_emb".to_string(), v, d),
        ("pos_emb".to_string(), cfg.max_seq_len, d),
    ];
    for l in 0..cfg.n_layers {
        let shapes = [
            (1, d),
            (1, d),
            (d, d),
            (d, d),
            (d, d),
            (d, d),
            (d, d),
            (1, d),
            (1, d),
            (d, f),
            (1, f),
            (f, d),
            (1, d),
        ];
        for (name, (r, c)) in LAYER_FIELDS.iter().zip(shapes) {
            out.push((format!("layers.{l}.{name}"), r, c));
        }
    }
    out.push(("lnf_gain".to_string(), 1, d));
    out.push(("lnf_bias".to_string(), 1, d));
    out.push(("unembed".to_string(), d, v));
    out
}

/// Whether the tensor at canonical index `i` is a synaptic matrix.
pub fn is_synaptic_index(i: usize, n_layers: usize) -> bool {
    i >= 2 && i < 2 + 13 * n_layers && (i - 2) % 13 == 6
}

impl<T: Scalar> Params<T> {
    /// Synaptic matrices from `N(0, sigma_init²)`; other matrices from
    /// `N(0, 0.02²)`; biases zero and norm gains one.
    pub fn init(config: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let (v, d, f) = (config.vocab_size, config.d_model, config.d_ff);
        let mut synaptic_rng = rng.fork(0x5157);
        let mut w = |r: usize, c: usize| randn::<T>(r, c, WEIGHT_INIT_STD, rng);
        let tok_emb = w(v, d)?;
        let pos_emb = w(config.max_seq_len, d)?;
        let mut layers = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            let (w_q, w_k, w_v, w_o) = (w(d, d)?, w(d, d)?, w(d, d)?, w(d, d)?);
            let (w_ff1, w_ff2) = (w(d, f)?, w(f, d)?);
            layers.push(LayerParams {
                ln1_gain: Tensor2::ones(1, d),
                ln1_bias: Tensor2::zeros(1, d),
                w_q,
                w_k,
                w_v,
                w_o,
                w_s: Tensor2::zeros(d, d),
                ln2_gain: Tensor2::ones(1, d),
                ln2_bias: Tensor2::zeros(1, d),
                w_ff1,
                b_ff1: Tensor2::zeros(1, f),
                w_ff2,
                b_ff2: Tensor2::zeros(1, d),
            });
        }
        let unembed = w(d, v)?;
        for layer in &mut layers {
            layer.w_s = randn(d, d, config.sigma_init, &mut synaptic_rng)?;
        }
        Ok(Self {
            config: config.clone(),
            tok_emb,
            pos_emb,
            layers,
            lnf_gain: Tensor2::ones(1, d),
            lnf_bias: Tensor2::zeros(1, d),
            unembed,
        })
    }

    /// Every tensor in canonical order.
    pub fn tensors(&self) -> Vec<&Tensor2<T>> {
        let mut out = vec![&self.tok_emb, &self.pos_emb];
        for layer in &self.layers {
            out.extend(layer.fields());
        }
        out.extend([&self.lnf_gain, &self.lnf_bias, &self.unembed]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor2<T>> {
        let mut out = vec![&mut self.tok_emb, &mut self.pos_emb];
        for layer in &mut self.layers {
            out.extend(layer.fields_mut());
        }
        out.extend([&mut self.lnf_gain, &mut self.lnf_bias, &mut self.unembed]);
        out
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor2<T>)> {
        tensor_layout(&self.config)
            .into_iter()
            .map(|(name, _, _)| name)
            .zip(self.tensors())
            .collect()
    }

    /// Rebuilds params from tensors in canonical order, checking every shape.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Tensor2<T>>) -> Result<Self> {
        config.validate()?;
        let layout = tensor_layout(config);
        if tensors.len() != layout.len() {
            return Err(Error::Config(format!(
                "expected {} tensors, got {}",
                layout.len(),
                tensors.len()
            )));
        }
        for ((name, r, c), t) in layout.iter().zip(&tensors) {
            if t.shape() != (*r, *c) {
                return Err(Error::shape(
                    "params",
                    format!("{name} is {:?}, expected ({r}, {c})", t.shape()),
                ));
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().unwrap();
        let tok_emb = next();
        let pos_emb = next();
        let mut layers = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            layers.push(LayerParams {
                ln1_gain: next(),
                ln1_bias: next(),
                w_q: next(),
                w_k: next(),
                w_v: next(),
                w_o: next(),
                w_s: next(),
                ln2_gain: next(),
                ln2_bias: next(),
                w_ff1: next(),
                b_ff1: next(),
                w_ff2: next(),
                b_ff2: next(),
            });
        }
        Ok(Self {
            config: config.clone(),
            tok_emb,
            pos_emb,
            layers,
            lnf_gain: next(),
            lnf_bias: next(),
            unembed: next(),
        })
    }

    pub fn synaptic(&self) -> Vec<&Tensor2<T>> {
        self.layers.iter().map(|l| &l.w_s).collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        let tensors = self.tensors().into_iter().map(|t| t.cast::<U>()).collect();
        Params::from_tensors(&self.config, tensors).expect("same layout")
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self
                .tensors()
                .iter()
                .zip(other.tensors())
                .all(|(a, b)| a.bit_eq(b))
    }
}

/// Graph handles for one layer.
#[derive(Clone, Debug)]
pub struct LayerVars {
    pub ln1_gain: Var,
    pub ln1_bias: Var,
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    pub w_o: Var,
    pub w_s: Var,
    pub ln2_gain: Var,
    pub ln2_bias: Var,
    pub w_ff1: Var,
    pub b_ff1: Var,
    pub w_ff2: Var,
    pub b_ff2: Var,
}

/// Graph handles for a whole [`Params`], in canonical order.
#[derive(Clone, Debug)]
pub struct ParamVars {
    pub tok_emb: Var,
    pub pos_emb: Var,
    pub layers: Vec<LayerVars>,
    pub lnf_gain: Var,
    pub lnf_bias: Var,
    pub unembed: Var,
}

impl ParamVars {
    /// Builds handles from a flat canonical-order list.
    pub fn from_list(cfg: &ModelConfig, vars: &[Var]) -> Result<Self> {
        let expected = 5 + 13 * cfg.n_layers;
        if vars.len() != expected {
            return Err(Error::Config(format!(
                "expected {expected} parameter handles, got {}",
                vars.len()
            )));
        }
        let mut it = vars.iter().copied();
        let mut next = || it.next().unwrap();
        let tok_emb = next();
        let pos_emb = next();
        let layers = (0..cfg.n_layers)
            .map(|_| LayerVars {
                ln1_gain: next(),
                ln1_bias: next(),
                w_q: next(),
                w_k: next(),
                w_v: next(),
                w_o: next(),
                w_s: next(),
                ln2_gain: next(),
                ln2_bias: next(),
                w_ff1: next(),
                b_ff1: next(),
                w_ff2: next(),
                b_ff2: next(),
            })
            .collect();
        Ok(Self {
            tok_emb,
            pos_emb,
            layers,
            lnf_gain: next(),
            lnf_bias: next(),
            unembed: next(),
        })
    }

    /// Borrows every tensor of `params` into `g`. Trainable tensors become
    /// gradient leaves; synaptic matrices are only trainable under
    /// [`GateMode::Learned`].
    pub fn register<'a, T: Scalar>(
        g: &mut Graph<'a, T>,
        params: &'a Params<T>,
        mode: GateMode,
        trainable: bool,
    ) -> Result<(Self, Vec<Var>)> {
        let n_layers = params.config.n_layers;
        let vars: Vec<Var> = params
            .tensors()
            .into_iter()
            .enumerate()
            .map(|(i, t)| {
                let synaptic = is_synaptic_index(i, n_layers);
                if trainable && (!synaptic || mode == GateMode::Learned) {
                    g.param_ref(t)
                } else {
                    g.constant_ref(t)
                }
            })
            .collect();
        Ok((Self::from_list(&params.config, &vars)?, vars))
    }
}

/// Intermediate results of one attention block.
#[derive(Clone, Debug)]
pub struct AttentionParts {
    pub q: Var,
    pub k: Var,
    pub v: Var,
    /// Per-head attention probabilities, `n × n` each.
    pub probs: Vec<Var>,
    /// Heads concatenated and projected by `W_o`.
    pub a: Var,
}

/// Multi-head scaled dot-product attention over the (already normalised) input `x`.
pub fn attention_block<T: Scalar>(
    g: &mut Graph<'_, T>,
    x: Var,
    layer: &LayerVars,
    n_heads: usize,
    causal: bool,
) -> Result<AttentionParts> {
    let q = g.matmul(x, layer.w_q)?;
    let k = g.matmul(x, layer.w_k)?;
    let v = g.matmul(x, layer.w_v)?;
    let d = g.value(q).cols();
    if n_heads == 0 || !d.is_multiple_of(n_heads) {
        return Err(Error::Config(format!(
            "{d} columns cannot split into {n_heads} heads"
        )));
    }
    let dh = d / n_heads;
    let scale: T = c(1.0 / (dh as f64).sqrt());
    let mut heads = Vec::with_capacity(n_heads);
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let (qh, kh, vh) = if n_heads == 1 {
            (q, k, v)
        } else {
            (
                g.slice_cols(q, h * dh, dh)?,
                g.slice_cols(k, h * dh, dh)?,
                g.slice_cols(v, h * dh, dh)?,
            )
        };
        let scores = g.matmul_nt(qh, kh)?;
        let scores = g.scale(scores, scale)?;
        let p = if causal {
            g.softmax_rows_causal(scores)?
        } else {
            g.softmax_rows(scores)?
        };
        heads.push(g.matmul(p, vh)?);
        probs.push(p);
    }
    let cat = if n_heads == 1 {
        heads[0]
    } else {
        g.concat_cols(&heads)?
    };
    let a = g.matmul(cat, layer.w_o)?;
    Ok(AttentionParts { q, k, v, probs, a })
}

/// Applies the resonance gate to attention output `a`. Returns the relevance
/// map (absent when the gate is disabled) and the reinforced output.
pub fn resonance_gate<'a, T: Scalar>(
    g: &mut Graph<'a, T>,
    a: Var,
    w_s: Var,
    mode: GateMode,
) -> Result<(Option<Var>, Var)> {
    match mode {
        GateMode::Learned => {
            let z = g.matmul(a, w_s)?;
            let r = g.sigmoid(z)?;
            let o = g.hadamard(a, r)?;
            Ok((Some(r), o))
        }
        GateMode::ForcedOnes => {
            let (n, d) = g.value(a).shape();
            let (sr, sc) = g.value(w_s).shape();
            if sr != d || sc != d {
                return Err(Error::shape(
                    "resonance_gate",
                    format!("W_s {sr}x{sc} for width {d}"),
                ));
            }
            let r = g.constant(Tensor2::ones(n, d));
            Ok((Some(r), a))
        }
        GateMode::Disabled => Ok((None, a)),
    }
}

/// Tensor-level gate, for callers outside a graph.
pub fn resonance_gate_values<T: Scalar>(
    a: &Tensor2<T>,
    w_s: &Tensor2<T>,
    mode: GateMode,
) -> Result<(Option<Tensor2<T>>, Tensor2<T>)> {
    let mut g = Graph::new();
    let av = g.constant_ref(a);
    let wv = g.constant_ref(w_s);
    let (r, o) = resonance_gate(&mut g, av, wv, mode)?;
    Ok((r.map(|r| g.value(r).clone()), g.value(o).clone()))
}

#[derive(Clone, Debug)]
pub struct LayerTraceVars {
    pub q: Var,
    pub k: Var,
    pub v: Var,
    pub a: Var,
    pub r: Option<Var>,
    pub o: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace<T> {
    pub q: Tensor2<T>,
    pub k: Tensor2<T>,
    pub v: Tensor2<T>,
    pub a: Tensor2<T>,
    /// `None` when the gate is disabled.
    pub r: Option<Tensor2<T>>,
    pub o: Tensor2<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActivationTrace<T> {
    pub layers: Vec<LayerTrace<T>>,
}

fn check_tokens(cfg: &ModelConfig, tokens: &[usize]) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::Empty("token sequence"));
    }
    if tokens.len() > cfg.max_seq_len {
        return Err(Error::SequenceTooLong {
            len: tokens.len(),
            max: cfg.max_seq_len,
        });
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t >= cfg.vocab_size) {
        return Err(Error::TokenOutOfRange {
            index: bad,
            vocab: cfg.vocab_size,
        });
    }
    Ok(())
}

/// Records the full forward pass on `g`; returns the logits handle `[n × V]`.
pub fn forward_graph<T: Scalar>(
    g: &mut Graph<'_, T>,
    cfg: &ModelConfig,
    pv: &ParamVars,
    tokens: &[usize],
    mode: GateMode,
    want_trace: bool,
) -> Result<(Var, Vec<LayerTraceVars>)> {
    check_tokens(cfg, tokens)?;
    let positions: Vec<usize> = (0..tokens.len()).collect();
    let tok = g.gather_rows(pv.tok_emb, tokens)?;
    let pos = g.gather_rows(pv.pos_emb, &positions)?;
    let mut x = g.add(tok, pos)?;
    let mut trace = Vec::new();
    for layer in &pv.layers {
        let h = g.layer_norm(x, layer.ln1_gain, layer.ln1_bias, LAYER_NORM_EPS)?;
        let att = attention_block(g, h, layer, cfg.n_heads, true)?;
        let (r, o) = resonance_gate(g, att.a, layer.w_s, mode)?;
        if want_trace {
            trace.push(LayerTraceVars {
                q: att.q,
                k: att.k,
                v: att.v,
                a: att.a,
                r,
                o,
            });
        }
        x = g.add(x, o)?;

        let h = g.layer_norm(x, layer.ln2_gain, layer.ln2_bias, LAYER_NORM_EPS)?;
        let f = g.matmul(h, layer.w_ff1)?;
        let f = g.add_row(f, layer.b_ff1)?;
        let f = g.gelu(f)?;
        let f = g.matmul(f, layer.w_ff2)?;
        let f = g.add_row(f, layer.b_ff2)?;
        x = g.add(x, f)?;
    }
    let h = g.layer_norm(x, pv.lnf_gain, pv.lnf_bias, LAYER_NORM_EPS)?;
    let logits = g.matmul(h, pv.unembed)?;
    Ok((logits, trace))
}

/// Gradient-free forward pass.
pub fn forward<T: Scalar>(
    params: &Params<T>,
    tokens: &[usize],
    mode: GateMode,
    want_trace: bool,
) -> Result<(Tensor2<T>, Option<ActivationTrace<T>>)> {
    let mut g = Graph::new();
    let (pv, _) = ParamVars::register(&mut g, params, mode, false)?;
    let (logits, tv) = forward_graph(&mut g, &params.config, &pv, tokens, mode, want_trace)?;
    let trace = want_trace.then(|| ActivationTrace {
        layers: tv
            .iter()
            .map(|l| LayerTrace {
                q: g.value(l.q).clone(),
                k: g.value(l.k).clone(),
                v: g.value(l.v).clone(),
                a: g.value(l.a).clone(),
                r: l.r.map(|r| g.value(r).clone()),
                o: g.value(l.o).clone(),
            })
            .collect(),
    });
    Ok((g.value(logits).clone(), trace))
}

/// Floating-point operation census for one forward pass of length `n`.
///
/// Matrix products count two flops per multiply-add; elementwise adds,
/// products and activations count one. Layer norms and softmax
/// normalisation are not counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopCount {
    pub embed: u64,
    pub attention: u64,
    pub gate: u64,
    pub ffn: u64,
    pub residual: u64,
    pub unembed: u64,
}

impl FlopCount {
    pub fn total(&self) -> u64 {
        self.embed + self.attention + self.gate + self.ffn + self.residual + self.unembed
    }
}

pub fn count_flops(cfg: &ModelConfig, n: usize, mode: GateMode) -> FlopCount {
    let (n, d, f, v, l) = (
        n as u64,
        cfg.d_model as u64,
        cfg.d_ff as u64,
        cfg.vocab_size as u64,
        cfg.n_layers as u64,
    );
    let gate = match mode {
        // A·W_s, then sigmoid and ⊙
        GateMode::Learned => l * (2 * n * d * d + 2 * n * d),
        GateMode::ForcedOnes | GateMode::Disabled => 0,
    };
    FlopCount {
        embed: n * d,
        // q, k, v, o projections plus QKᵀ and P·V over all heads
        attention: l * (8 * n * d * d + 4 * n * n * d),
        gate,
        // two projections, two bias adds, GELU
        ffn: l * (4 * n * d * f + 2 * n * f + n * d),
        residual: l * 2 * n * d,
        unembed: 2 * n * d * v,
    }
}
