//! Synthetic long-range tasks, byte corpora, noise injection and batching.
//!
//! Every generator is a pure function of its spec, layout and seed.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const N_SPECIALS: usize = 5;

/// Token-id layout. Specials, keys and values occupy disjoint ranges of `[0, V)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabLayout {
    pub vocab_size: usize,
    pub pad: usize,
    pub bos: usize,
    pub sep: usize,
    pub query: usize,
    pub filler: usize,
    pub keys: Range<usize>,
    pub values: Range<usize>,
    pub byte_mode: bool,
}

impl VocabLayout {
    /// Specials at `0..5`, then keys, then the last `n_values` ids as values.
    pub fn synthetic(vocab_size: usize, n_values: usize) -> Result<Self> {
        if vocab_size < N_SPECIALS + 2 {
            return Err(Error::Task(format!(
                "vocabulary of {vocab_size} leaves no room for keys and values"
            )));
        }
        if n_values == 0 || n_values > vocab_size - N_SPECIALS - 1 {
            return Err(Error::Task(format!(
                "{n_values} value tokens do not fit a vocabulary of {vocab_size}"
            )));
        }
        Ok(Self {
            vocab_size,
            pad: 0,
            bos: 1,
            sep: 2,
            query: 3,
            filler: 4,
            keys: N_SPECIALS..vocab_size - n_values,
            values: vocab_size - n_values..vocab_size,
            byte_mode: false,
        })
    }

    /// Raw bytes map to ids `0..256`; specials follow.
    pub fn bytes() -> Self {
        Self {
            vocab_size: 256 + N_SPECIALS,
            pad: 256,
            bos: 257,
            sep: 258,
            query: 259,
            filler: 260,
            keys: 0..256,
            values: 256..256,
            byte_mode: true,
        }
    }

    pub fn is_special(&self, t: usize) -> bool {
        [self.pad, self.bos, self.sep, self.query, self.filler].contains(&t)
    }

    pub fn is_value(&self, t: usize) -> bool {
        self.values.contains(&t)
    }

    pub fn non_special_count(&self) -> usize {
        self.keys.len() + self.values.len()
    }

    /// `i`-th non-special token, `i < non_special_count()`.
    pub fn non_special(&self, i: usize) -> usize {
        if i < self.keys.len() {
            self.keys.start + i
        } else {
            self.values.start + (i - self.keys.len())
        }
    }

    pub fn random_non_special(&self, rng: &mut Rng) -> usize {
        self.non_special(rng.below(0, self.non_special_count()))
    }

    pub fn validate(&self) -> Result<()> {
        let specials = [self.pad, self.bos, self.sep, self.query, self.filler];
        let mut seen = vec![false; self.vocab_size];
        let ids = specials
            .iter()
            .copied()
            .chain(self.keys.clone())
            .chain(self.values.clone());
        for t in ids {
            if t >= self.vocab_size || std::mem::replace(&mut seen[t], true) {
                return Err(Error::Task(format!(
                    "token {t} out of range or assigned twice"
                )));
            }
        }
        Ok(())
    }
}

/// One sequence with next-token (or probe) targets and its loss mask.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub tokens: Vec<usize>,
    pub targets: Vec<usize>,
    pub mask: Vec<bool>,
    /// Token distance from the planted value to the query (key-value recall only).
    pub distance: Option<usize>,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        let n = self.tokens.len();
        if n == 0 || self.targets.len() != n || self.mask.len() != n {
            return Err(Error::Task(
                "sample fields have inconsistent lengths".into(),
            ));
        }
        if self.masked_count() == 0 {
            return Err(Error::EmptyMask);
        }
        for (i, &t) in self.tokens.iter().enumerate() {
            if t >= vocab_size || (self.mask[i] && self.targets[i] >= vocab_size) {
                return Err(Error::TokenOutOfRange {
                    index: t.max(self.targets[i]),
                    vocab: vocab_size,
                });
            }
        }
        Ok(())
    }
}

/// A group of samples processed as one optimisation step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub samples: Vec<Sample>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn masked_count(&self) -> usize {
        self.samples.iter().map(Sample::masked_count).sum()
    }

    /// SHA-256 over tokens, targets and mask of every row.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        feed_samples(&mut h, &self.samples);
        h.finalize().into()
    }
}

pub(crate) fn feed_samples(h: &mut Sha256, samples: &[Sample]) {
    for s in samples {
        h.update((s.len() as u64).to_le_bytes());
        for ((&t, &y), &m) in s.tokens.iter().zip(&s.targets).zip(&s.mask) {
            h.update((t as u32).to_le_bytes());
            h.update((y as u32).to_le_bytes());
            h.update([m as u8]);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Copy,
    KvRecall,
    Corpus,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy" => Ok(TaskKind::Copy),
            "kv_recall" | "kv-recall" => Ok(TaskKind::KvRecall),
            "corpus" => Ok(TaskKind::Corpus),
            other => Err(Error::Task(format!("unknown task kind {other:?}"))),
        }
    }
}

fn default_train_fraction() -> f64 {
    0.9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub seq_len: usize,
    /// Key-value pairs per row (kv_recall).
    #[serde(default)]
    pub pairs: usize,
    /// Probe distances (kv_recall); samples cycle through them in order.
    #[serde(default)]
    pub distances: Vec<usize>,
    /// Training rows (synthetic tasks).
    pub samples: usize,
    /// Validation rows (synthetic tasks).
    #[serde(default)]
    pub val_samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Size of the value range; defaults to half of the non-special ids.
    #[serde(default)]
    pub value_tokens: Option<usize>,
    #[serde(default)]
    pub corpus_path: Option<String>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

impl TaskSpec {
    pub fn copy(seq_len: usize, samples: usize, seed: u64) -> Self {
        Self {
            kind: TaskKind::Copy,
            seq_len,
            pairs: 0,
            distances: Vec::new(),
            samples,
            val_samples: 0,
            seed,
            value_tokens: None,
            corpus_path: None,
            train_fraction: default_train_fraction(),
        }
    }

    pub fn kv_recall(
        seq_len: usize,
        pairs: usize,
        distances: Vec<usize>,
        samples: usize,
        seed: u64,
    ) -> Self {
        Self {
            kind: TaskKind::KvRecall,
            pairs,
            distances,
            ..Self::copy(seq_len, samples, seed)
        }
    }

    pub fn layout(&self, vocab_size: usize) -> Result<VocabLayout> {
        match self.kind {
            TaskKind::Corpus => {
                let layout = VocabLayout::bytes();
                if vocab_size != layout.vocab_size {
                    return Err(Error::Task(format!(
                        "corpus mode needs vocab_size {}, got {vocab_size}",
                        layout.vocab_size
                    )));
                }
                Ok(layout)
            }
            _ => {
                let n_values = self
                    .value_tokens
                    .unwrap_or(vocab_size.saturating_sub(N_SPECIALS) / 2);
                VocabLayout::synthetic(vocab_size, n_values)
            }
        }
    }

    pub fn validate(&self, layout: &VocabLayout) -> Result<()> {
        match self.kind {
            TaskKind::Copy => {
                if self.seq_len < 4 || !self.seq_len.is_multiple_of(2) {
                    return Err(Error::Task(format!(
                        "copy rows need an even length of at least 4, got {}",
                        self.seq_len
                    )));
                }
            }
            TaskKind::KvRecall => {
                let (n, m) = (self.seq_len, self.pairs);
                if m == 0 {
                    return Err(Error::Task("kv_recall needs at least one pair".into()));
                }
                if m > layout.keys.len() {
                    return Err(Error::Task(format!(
                        "{m} distinct keys requested but only {} exist",
                        layout.keys.len()
                    )));
                }
                if layout.values.is_empty() {
                    return Err(Error::Task("layout has no value tokens".into()));
                }
                if self.distances.is_empty() {
                    return Err(Error::Task("kv_recall needs at least one distance".into()));
                }
                for &d in &self.distances {
                    if d < 2 * m || d + 2 * m > n {
                        return Err(Error::Task(format!(
                            "distance {d} incompatible with {m} pairs in rows of {n} \
                             (need {} <= d <= {})",
                            2 * m,
                            n.saturating_sub(2 * m)
                        )));
                    }
                }
            }
            TaskKind::Corpus => {
                if self.corpus_path.is_none() {
                    return Err(Error::Task("corpus task needs corpus_path".into()));
                }
                if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
                    return Err(Error::Task(format!(
                        "train_fraction {} must lie in (0, 1]",
                        self.train_fraction
                    )));
                }
            }
        }
        if self.seq_len == 0 {
            return Err(Error::Task("seq_len must be positive".into()));
        }
        Ok(())
    }
}

/// Rows `[BOS, s₁..s_k, SEP, s₁..s_k]` of length `seq_len = 2k + 2`. The
/// mask selects the positions whose targets are the second payload.
pub fn gen_copy(
    spec: &TaskSpec,
    layout: &VocabLayout,
    count: usize,
    rng: &mut Rng,
) -> Result<Vec<Sample>> {
    if spec.kind != TaskKind::Copy {
        return Err(Error::Task("gen_copy called with a non-copy spec".into()));
    }
    spec.validate(layout)?;
    let n = spec.seq_len;
    let k = (n - 2) / 2;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let payload: Vec<usize> = (0..k).map(|_| layout.random_non_special(rng)).collect();
        let mut tokens = Vec::with_capacity(n);
        tokens.push(layout.bos);
        tokens.extend(&payload);
        tokens.push(layout.sep);
        tokens.extend(&payload);
        out.push(shifted_sample(tokens, layout.pad, |t| t > k && t <= 2 * k));
    }
    Ok(out)
}

fn shifted_sample(tokens: Vec<usize>, pad: usize, masked: impl Fn(usize) -> bool) -> Sample {
    let n = tokens.len();
    let mut targets: Vec<usize> = tokens[1..].to_vec();
    targets.push(pad);
    let mask = (0..n).map(|t| t + 1 < n && masked(t)).collect();
    Sample {
        tokens,
        targets,
        mask,
        distance: None,
    }
}

/// Rows `[PAD…, K₁ V₁ … K_m V_m, FILLER…, QUERY, K_i]` with target `V_i` at
/// the last position. Left padding places `V_i` exactly `distance` tokens
/// before that position.
pub fn gen_kv_recall(
    spec: &TaskSpec,
    layout: &VocabLayout,
    count: usize,
    rng: &mut Rng,
) -> Result<Vec<Sample>> {
    if spec.kind != TaskKind::KvRecall {
        return Err(Error::Task(
            "gen_kv_recall called with a non-kv spec".into(),
        ));
    }
    spec.validate(layout)?;
    let (n, m) = (spec.seq_len, spec.pairs);
    let mut out = Vec::with_capacity(count);
    for j in 0..count {
        let d = spec.distances[j % spec.distances.len()];
        let i = rng.below(0, m);
        // choose m distinct keys by partial Fisher-Yates over the key range
        let mut pool: Vec<usize> = layout.keys.clone().collect();
        for s in 0..m {
            let pick = rng.below(s, pool.len());
            pool.swap(s, pick);
        }
        let keys = &pool[..m];
        let values: Vec<usize> = (0..m)
            .map(|_| layout.values.start + rng.below(0, layout.values.len()))
            .collect();

        let lead = n - 2 - 2 * i - d;
        let mut tokens = vec![layout.pad; lead];
        for (&k, &v) in keys.iter().zip(&values) {
            tokens.push(k);
            tokens.push(v);
        }
        tokens.resize(n - 2, layout.filler);
        tokens.push(layout.query);
        tokens.push(keys[i]);
        debug_assert_eq!(tokens.len(), n);
        debug_assert_eq!(tokens[n - 1 - d], values[i]);

        let mut targets = vec![layout.pad; n];
        targets[n - 1] = values[i];
        let mut mask = vec![false; n];
        mask[n - 1] = true;
        out.push(Sample {
            tokens,
            targets,
            mask,
            distance: Some(d),
        });
    }
    Ok(out)
}

/// Train/validation token streams of a byte corpus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusSplits {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Reads `path` as raw bytes and splits it contiguously: the first
/// `floor(len · train_fraction)` bytes train, the rest validate.
pub fn load_corpus(
    path: impl AsRef<Path>,
    train_fraction: f64,
    window: usize,
) -> Result<CorpusSplits> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    split_corpus(&bytes, train_fraction, window)
}

pub fn split_corpus(bytes: &[u8], train_fraction: f64, window: usize) -> Result<CorpusSplits> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::Task(format!(
            "train fraction {train_fraction} must lie in (0, 1]"
        )));
    }
    if bytes.len() < window + 1 {
        return Err(Error::Task(format!(
            "corpus of {} bytes is shorter than one window of {}",
            bytes.len(),
            window + 1
        )));
    }
    let cut = (bytes.len() as f64 * train_fraction).floor() as usize;
    let tokens = tokenize(bytes);
    Ok(CorpusSplits {
        train: tokens[..cut].to_vec(),
        validation: tokens[cut..].to_vec(),
    })
}

pub fn tokenize(bytes: &[u8]) -> Vec<usize> {
    bytes.iter().map(|&b| b as usize).collect()
}

/// Inverse of [`tokenize`]; fails on non-byte ids.
pub fn detokenize(tokens: &[usize]) -> Result<Vec<u8>> {
    tokens
        .iter()
        .map(|&t| u8::try_from(t).map_err(|_| Error::Task(format!("token {t} is not a byte"))))
        .collect()
}

/// Consecutive windows of `n + 1` tokens (stride `n`) as fully-masked
/// next-token samples.
pub fn windows(stream: &[usize], n: usize) -> Vec<Sample> {
    if n == 0 || stream.len() < n + 1 {
        return Vec::new();
    }
    (0..=(stream.len() - n - 1))
        .step_by(n)
        .map(|s| Sample {
            tokens: stream[s..s + n].to_vec(),
            targets: stream[s + 1..s + n + 1].to_vec(),
            mask: vec![true; n],
            distance: None,
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NoiseStats {
    /// Positions eligible for replacement.
    pub eligible: usize,
    /// Positions selected for replacement (the drawn token may equal the original).
    pub replaced: usize,
}

impl NoiseStats {
    pub fn fraction(&self) -> f64 {
        if self.eligible == 0 {
            0.0
        } else {
            self.replaced as f64 / self.eligible as f64
        }
    }
}

/// Positions that noise never touches: every query marker and the token right after it.
pub fn protected_positions(tokens: &[usize], layout: &VocabLayout) -> Vec<bool> {
    let mut out = vec![false; tokens.len()];
    for (i, &t) in tokens.iter().enumerate() {
        if t == layout.query {
            out[i] = true;
            if i + 1 < tokens.len() {
                out[i + 1] = true;
            }
        }
    }
    out
}

/// Independently replaces each unprotected input token with probability
/// `p` by a uniform non-special token. Targets, masks and distances are
/// untouched.
pub fn inject_noise(
    samples: &[Sample],
    p: f64,
    layout: &VocabLayout,
    rng: &mut Rng,
) -> Result<(Vec<Sample>, NoiseStats)> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Task(format!("noise probability {p} outside [0, 1]")));
    }
    let mut stats = NoiseStats::default();
    let mut out = samples.to_vec();
    if p == 0.0 {
        stats.eligible = samples
            .iter()
            .map(|s| {
                protected_positions(&s.tokens, layout)
                    .iter()
                    .filter(|&&x| !x)
                    .count()
            })
            .sum();
        return Ok((out, stats));
    }
    for s in &mut out {
        let protected = protected_positions(&s.tokens, layout);
        for (t, &keep) in s.tokens.iter_mut().zip(&protected) {
            if keep {
                continue;
            }
            stats.eligible += 1;
            if rng.bernoulli(p) {
                *t = layout.random_non_special(rng);
                stats.replaced += 1;
            }
        }
    }
    Ok((out, stats))
}

/// Optional shuffle, then contiguous groups of `batch_size`; the last group may be short.
pub fn batches(
    samples: &[Sample],
    batch_size: usize,
    rng: &mut Rng,
    shuffle: bool,
) -> Result<Vec<Batch>> {
    if samples.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    if shuffle {
        rng.shuffle(&mut order);
    }
    Ok(order
        .chunks(batch_size)
        .map(|idx| Batch {
            samples: idx.iter().map(|&i| samples[i].clone()).collect(),
        })
        .collect())
}

/// Train and validation rows for a task.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Splits {
    pub layout: VocabLayout,
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
}

/// Generates (or loads) both splits. Synthetic validation rows come from a
/// stream forked off the task seed, so they never coincide with training rows
/// by construction of the stream.
pub fn build_splits(spec: &TaskSpec, vocab_size: usize) -> Result<Splits> {
    let layout = spec.layout(vocab_size)?;
    spec.validate(&layout)?;
    let root = Rng::new(spec.seed);
    let (train, validation) = match spec.kind {
        TaskKind::Copy => (
            gen_copy(spec, &layout, spec.samples, &mut root.fork(1))?,
            gen_copy(spec, &layout, spec.val_samples, &mut root.fork(2))?,
        ),
        TaskKind::KvRecall => (
            gen_kv_recall(spec, &layout, spec.samples, &mut root.fork(1))?,
            gen_kv_recall(spec, &layout, spec.val_samples, &mut root.fork(2))?,
        ),
        TaskKind::Corpus => {
            let path = spec.corpus_path.as_deref().unwrap_or_default();
            let c = load_corpus(path, spec.train_fraction, spec.seq_len)?;
            (
                windows(&c.train, spec.seq_len),
                windows(&c.validation, spec.seq_len),
            )
        }
    };
    if train.is_empty() {
        return Err(Error::Task("task produced no training rows".into()));
    }
    Ok(Splits {
        layout,
        train,
        validation,
    })
}
