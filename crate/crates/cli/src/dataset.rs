//! Generated datasets stored in the container format, with a JSON sidecar.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use synres::datagen::{Sample, TaskSpec, VocabLayout};

use crate::container::Container;
use crate::error::{CliError, CliResult};

pub const KIND: &str = "dataset";
const NO_DISTANCE: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub task: TaskSpec,
    pub vocab_size: usize,
    pub layout: VocabLayout,
    pub rows: usize,
    pub seq_len: usize,
    pub split: String,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn to_u32(path: &Path, v: usize) -> CliResult<u32> {
    u32::try_from(v)
        .ok()
        .filter(|&x| x != NO_DISTANCE)
        .ok_or_else(|| {
            CliError::Config(format!(
                "{}: value {v} does not fit the u32 format",
                path.display()
            ))
        })
}

pub fn to_container(
    path: &Path,
    samples: &[Sample],
    task: &TaskSpec,
    vocab_size: usize,
) -> CliResult<Container> {
    let n = samples.first().map(Sample::len).unwrap_or(0);
    if n == 0 || samples.iter().any(|s| s.len() != n) {
        return Err(CliError::Config(
            "dataset rows must be nonempty and of equal length".into(),
        ));
    }
    let mut tokens = Vec::with_capacity(samples.len() * n);
    let mut targets = Vec::with_capacity(samples.len() * n);
    let mut mask = Vec::with_capacity(samples.len() * n);
    let mut distance = Vec::with_capacity(samples.len());
    for s in samples {
        for t in 0..n {
            tokens.push(to_u32(path, s.tokens[t])?);
            targets.push(to_u32(path, s.targets[t])?);
            mask.push(s.mask[t] as u32);
        }
        distance.push(s.distance.map_or(Ok(NO_DISTANCE), |d| to_u32(path, d))?);
    }
    let mut c = Container::new(KIND);
    c.push_meta("vocab_size", vocab_size);
    c.push_meta(
        "task",
        serde_json::to_string(task).expect("task serialises"),
    );
    c.push_u32("tokens", samples.len(), n, &tokens);
    c.push_u32("targets", samples.len(), n, &targets);
    c.push_u32("mask", samples.len(), n, &mask);
    c.push_u32("distance", samples.len(), 1, &distance);
    Ok(c)
}

pub fn from_container(path: &Path, c: &Container) -> CliResult<Vec<Sample>> {
    if c.kind != KIND {
        return Err(CliError::corrupt(
            path,
            "kind",
            format!("{:?} is not a dataset", c.kind),
        ));
    }
    let (rows, n, tokens) = c.u32s(path, "tokens")?;
    let fetch = |name: &str, cols: usize| -> CliResult<Vec<u32>> {
        let (r, k, v) = c.u32s(path, name)?;
        if (r, k) != (rows, cols) {
            return Err(CliError::corrupt(
                path,
                name,
                format!("shape {r}x{k} where {rows}x{cols} expected"),
            ));
        }
        Ok(v)
    };
    let targets = fetch("targets", n)?;
    let mask = fetch("mask", n)?;
    let distance = fetch("distance", 1)?;
    if let Some(bad) = mask.iter().find(|&&m| m > 1) {
        return Err(CliError::corrupt(
            path,
            "mask",
            format!("value {bad} is not 0 or 1"),
        ));
    }
    Ok((0..rows)
        .map(|r| {
            let span = r * n..(r + 1) * n;
            Sample {
                tokens: tokens[span.clone()].iter().map(|&t| t as usize).collect(),
                targets: targets[span.clone()].iter().map(|&t| t as usize).collect(),
                mask: mask[span].iter().map(|&m| m == 1).collect(),
                distance: (distance[r] != NO_DISTANCE).then_some(distance[r] as usize),
            }
        })
        .collect())
}

pub fn load(path: &Path) -> CliResult<Vec<Sample>> {
    from_container(path, &Container::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use synres::datagen::gen_kv_recall;
    use synres::Rng;

    #[test]
    fn round_trip_has_zero_row_differences() {
        let layout = VocabLayout::synthetic(64, 16).unwrap();
        let task = TaskSpec::kv_recall(30, 3, vec![6, 12], 40, 1);
        let rows = gen_kv_recall(&task, &layout, 40, &mut Rng::new(1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kv.dat");
        to_container(&path, &rows, &task, 64)
            .unwrap()
            .write(&path)
            .unwrap();
        assert_eq!(load(&path).unwrap(), rows);
    }

    #[test]
    fn sidecar_sits_next_to_the_data() {
        assert_eq!(
            sidecar_path(Path::new("/x/kv.dat")),
            PathBuf::from("/x/kv.dat.json")
        );
    }
}
