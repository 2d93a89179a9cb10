//! Run configuration: one TOML file with `[model]`, `[train]` and `[task]`
//! tables. Unknown keys anywhere are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use synres::datagen::TaskSpec;
use synres::train::TrainConfig;
use synres::ModelConfig;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub task: TaskSpec,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model.validate()?;
        self.train.validate()?;
        let layout = self.task.layout(self.model.vocab_size)?;
        self.task.validate(&layout)?;
        if self.task.seq_len > self.model.max_seq_len {
            return Err(CliError::Config(format!(
                "task seq_len {} exceeds model max_seq_len {}",
                self.task.seq_len, self.model.max_seq_len
            )));
        }
        Ok(())
    }

    /// A single seed drives both data generation and training.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self.task.seed = seed;
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serialises")
    }

    /// Stable identifier: hash of the resolved config text.
    pub fn run_id(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[model]
vocab_size = 64
d_model = 16
n_heads = 2
n_layers = 1
d_ff = 32
max_seq_len = 34
gate_mode = "learned"

[train]
epochs = 1
batch_size = 8

[task]
kind = "copy"
seq_len = 34
samples = 16
val_samples = 8
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::parse(BASE).unwrap();
        assert_eq!(cfg.model.sigma_init, 0.02);
        assert_eq!(cfg.train.lr, 3e-4);
        let again = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.run_id(), again.run_id());
        assert_ne!(cfg.run_id(), cfg.clone().with_seed(5).run_id());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let typo = BASE.replace("epochs = 1", "epochs = 1\nlearning_rate = 0.1");
        let err = RunConfig::parse(&typo).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("learning_rate"), "{err}");
        assert!(RunConfig::parse(&format!("{BASE}\n[extra]\nx = 1\n")).is_err());
    }

    #[test]
    fn task_must_fit_the_model() {
        let long = BASE.replace("\nseq_len = 34", "\nseq_len = 40");
        assert!(RunConfig::parse(&long).is_err());
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = RunConfig::load(Path::new("/nonexistent/run.toml")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("/nonexistent/run.toml"));
    }
}
