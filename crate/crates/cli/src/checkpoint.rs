//! Model checkpoints: full configs, RNG position and every parameter tensor.

use std::path::Path;

use synres::datagen::TaskSpec;
use synres::model::tensor_layout;
use synres::train::TrainConfig;
use synres::{ModelConfig, Params, RngState, Scalar};

use crate::container::Container;
use crate::error::{CliError, CliResult};

pub const KIND: &str = "checkpoint";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub params: Params<T>,
    pub train: TrainConfig,
    pub task: Option<TaskSpec>,
    pub rng: RngState,
    pub epoch: usize,
    pub val_ppl: Option<f64>,
}

/// A checkpoint at whichever precision it was written.
#[derive(Clone, Debug)]
pub enum AnyCheckpoint {
    F32(Checkpoint<f32>),
    F64(Checkpoint<f64>),
}

fn json<S: serde::Serialize>(v: &S) -> String {
    serde_json::to_string(v).expect("config always serialises")
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_container(&self) -> Container {
        let mut c = Container::new(KIND);
        c.push_meta("precision", T::DTYPE);
        c.push_meta("epoch", self.epoch);
        c.push_meta("rng_seed", self.rng.seed);
        c.push_meta("rng_word_pos", self.rng.word_pos);
        if let Some(p) = self.val_ppl {
            c.push_meta("val_ppl", p);
        }
        c.push_meta("model", json(&self.params.config));
        c.push_meta("train", json(&self.train));
        if let Some(task) = &self.task {
            c.push_meta("task", json(task));
        }
        for (name, t) in self.params.named_tensors() {
            c.push_tensor(&name, t);
        }
        c
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        self.to_container().write(path)
    }

    pub fn from_container(path: &Path, c: &Container) -> CliResult<Self> {
        let meta = |k: &str| {
            c.meta(k)
                .ok_or_else(|| CliError::corrupt(path, k, "missing header field"))
        };
        let parse_num = |k: &str| -> CliResult<u128> {
            meta(k)?
                .parse()
                .map_err(|_| CliError::corrupt(path, k, "not an integer"))
        };
        fn from_json<D: serde::de::DeserializeOwned>(
            path: &Path,
            k: &str,
            s: &str,
        ) -> CliResult<D> {
            serde_json::from_str(s).map_err(|e| CliError::corrupt(path, k, e.to_string()))
        }
        if c.kind != KIND {
            return Err(CliError::corrupt(
                path,
                "kind",
                format!("{:?} is not a checkpoint", c.kind),
            ));
        }
        let model: ModelConfig = from_json(path, "model", meta("model")?)?;
        model
            .validate()
            .map_err(|e| CliError::corrupt(path, "model", e.to_string()))?;
        let train: TrainConfig = from_json(path, "train", meta("train")?)?;
        let task = c
            .meta("task")
            .map(|s| from_json(path, "task", s))
            .transpose()?;
        let val_ppl = c
            .meta("val_ppl")
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| CliError::corrupt(path, "val_ppl", "not a number"))
            })
            .transpose()?;

        let layout = tensor_layout(&model);
        if c.entries.len() != layout.len() {
            let missing = layout
                .get(c.entries.len())
                .map_or("manifest".to_string(), |(n, _, _)| n.clone());
            return Err(CliError::corrupt(
                path,
                missing,
                format!(
                    "{} tensors where {} expected",
                    c.entries.len(),
                    layout.len()
                ),
            ));
        }
        let mut tensors = Vec::with_capacity(layout.len());
        for (e, (name, rows, cols)) in c.entries.iter().zip(&layout) {
            if &e.name != name || e.rows != *rows || e.cols != *cols {
                return Err(CliError::corrupt(
                    path,
                    &e.name,
                    format!("{}x{} where {name} {rows}x{cols} expected", e.rows, e.cols),
                ));
            }
            tensors.push(c.tensor::<T>(path, e)?);
        }
        let params = Params::from_tensors(&model, tensors)
            .map_err(|e| CliError::corrupt(path, "tensors", e.to_string()))?;
        Ok(Self {
            params,
            train,
            task,
            rng: RngState {
                seed: parse_num("rng_seed")? as u64,
                word_pos: parse_num("rng_word_pos")?,
            },
            epoch: parse_num("epoch")? as usize,
            val_ppl,
        })
    }
}

impl AnyCheckpoint {
    pub fn load(path: &Path) -> CliResult<Self> {
        let c = Container::read(path)?;
        match c.meta("precision") {
            Some("f32") => Ok(AnyCheckpoint::F32(Checkpoint::from_container(path, &c)?)),
            Some("f64") => Ok(AnyCheckpoint::F64(Checkpoint::from_container(path, &c)?)),
            other => Err(CliError::corrupt(
                path,
                "precision",
                format!("unsupported value {other:?}"),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use synres::{GateMode, Rng};

    fn model() -> ModelConfig {
        ModelConfig {
            vocab_size: 12,
            d_model: 8,
            n_heads: 2,
            n_layers: 2,
            d_ff: 16,
            max_seq_len: 10,
            sigma_init: 0.3,
            gate_mode: GateMode::Learned,
        }
    }

    fn ckpt<T: Scalar>(seed: u64) -> Checkpoint<T> {
        Checkpoint {
            params: Params::init(&model(), &mut Rng::new(seed)).unwrap(),
            train: TrainConfig::new(3, 4),
            task: Some(TaskSpec::copy(10, 20, seed)),
            rng: RngState {
                seed,
                word_pos: 1 << 70,
            },
            epoch: 2,
            val_ppl: Some(0.1 + 0.2),
        }
    }

    #[test]
    fn save_load_save_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let a = ckpt::<f32>(4);
        a.save(&path).unwrap();
        let first = std::fs::read(&path).unwrap();
        let AnyCheckpoint::F32(b) = AnyCheckpoint::load(&path).unwrap() else {
            panic!("wrong precision")
        };
        assert_eq!(a, b);
        b.save(&path).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
    }

    #[test]
    fn f64_checkpoints_keep_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.ckpt");
        ckpt::<f64>(1).save(&path).unwrap();
        assert!(matches!(
            AnyCheckpoint::load(&path).unwrap(),
            AnyCheckpoint::F64(_)
        ));
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        ckpt::<f32>(2).save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 100]).unwrap();
        match AnyCheckpoint::load(&path).unwrap_err() {
            CliError::Corrupt { entry, .. } => assert_eq!(entry, "unembed"),
            other => panic!("{other}"),
        }
    }
}
