//! Binary container shared by checkpoints and datasets.
//!
//! ```text
//! synres-container 1
//! kind checkpoint
//! meta <key> <value to end of line>
//! entry <name> <dtype> <rows> <cols> <offset> <sha256>
//! payload_bytes <n>
//!
//! <raw little-endian elements, entries concatenated in manifest order>
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};
use synres::{Scalar, Tensor2};

use crate::error::{CliError, CliResult};

const MAGIC: &str = "synres-container 1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub name: String,
    pub dtype: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    pub sha256: String,
}

impl Entry {
    fn width(&self) -> Option<usize> {
        match self.dtype.as_str() {
            "f32" | "u32" => Some(4),
            "f64" => Some(8),
            _ => None,
        }
    }

    pub fn byte_len(&self) -> usize {
        self.rows * self.cols * self.width().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Container {
    pub kind: String,
    pub meta: Vec<(String, String)>,
    pub entries: Vec<Entry>,
    pub payload: Vec<u8>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Container {
    pub fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            meta: Vec::new(),
            entries: Vec::new(),
            payload: Vec::new(),
        }
    }

    pub fn push_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        assert!(!key.contains(char::is_whitespace) && !value.contains('\n'));
        self.meta.push((key.to_string(), value));
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn push_bytes(&mut self, name: &str, dtype: &str, rows: usize, cols: usize, bytes: &[u8]) {
        self.entries.push(Entry {
            name: name.to_string(),
            dtype: dtype.to_string(),
            rows,
            cols,
            offset: self.payload.len(),
            sha256: hex(&Sha256::digest(bytes)),
        });
        self.payload.extend_from_slice(bytes);
    }

    pub fn push_tensor<T: Scalar>(&mut self, name: &str, t: &Tensor2<T>) {
        let mut bytes = Vec::with_capacity(t.len() * T::WIDTH);
        for &v in t.data() {
            v.write_le(&mut bytes);
        }
        self.push_bytes(name, T::DTYPE, t.rows(), t.cols(), &bytes);
    }

    pub fn push_u32(&mut self, name: &str, rows: usize, cols: usize, values: &[u32]) {
        assert_eq!(values.len(), rows * cols);
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        self.push_bytes(name, "u32", rows, cols, &bytes);
    }

    pub fn entry(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    fn bytes_of(&self, e: &Entry) -> &[u8] {
        &self.payload[e.offset..e.offset + e.byte_len()]
    }

    /// Decodes entry `e` as a tensor of `T`; `path` is only used in messages.
    pub fn tensor<T: Scalar>(&self, path: &Path, e: &Entry) -> CliResult<Tensor2<T>> {
        if e.dtype != T::DTYPE {
            return Err(CliError::corrupt(
                path,
                &e.name,
                format!("dtype {} where {} expected", e.dtype, T::DTYPE),
            ));
        }
        let data: Vec<T> = self
            .bytes_of(e)
            .chunks_exact(T::WIDTH)
            .map(T::read_le)
            .collect();
        let t = Tensor2::from_vec(e.rows, e.cols, data)
            .map_err(|err| CliError::corrupt(path, &e.name, err.to_string()))?;
        if !t.is_finite() {
            return Err(CliError::corrupt(path, &e.name, "non-finite element"));
        }
        Ok(t)
    }

    pub fn u32s(&self, path: &Path, name: &str) -> CliResult<(usize, usize, Vec<u32>)> {
        let e = self
            .entry(name)
            .ok_or_else(|| CliError::corrupt(path, name, "missing entry"))?;
        if e.dtype != "u32" {
            return Err(CliError::corrupt(
                path,
                name,
                format!("dtype {} where u32 expected", e.dtype),
            ));
        }
        let v = self
            .bytes_of(e)
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((e.rows, e.cols, v))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut head = format!("{MAGIC}\nkind {}\n", self.kind);
        for (k, v) in &self.meta {
            head += &format!("meta {k} {v}\n");
        }
        for e in &self.entries {
            head += &format!(
                "entry {} {} {} {} {} {}\n",
                e.name, e.dtype, e.rows, e.cols, e.offset, e.sha256
            );
        }
        head += &format!("payload_bytes {}\n\n", self.payload.len());
        let mut out = head.into_bytes();
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(path, &bytes)
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> CliResult<Self> {
        let bad = |entry: &str, detail: String| CliError::corrupt(path, entry, detail);
        let split = bytes
            .windows(2)
            .position(|w| w == b"\n\n")
            .ok_or_else(|| bad("header", "no blank line terminating the header".into()))?;
        let head = std::str::from_utf8(&bytes[..split])
            .map_err(|_| bad("header", "header is not UTF-8".into()))?;
        let payload = &bytes[split + 2..];
        let mut lines = head.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad("header", format!("missing magic line {MAGIC:?}")));
        }
        let kind = lines
            .next()
            .and_then(|l| l.strip_prefix("kind "))
            .ok_or_else(|| bad("header", "missing kind line".into()))?;
        let mut c = Container::new(kind);
        let mut declared = None;
        for line in lines {
            let (tag, rest) = line.split_once(' ').unwrap_or((line, ""));
            match tag {
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    c.meta.push((k.to_string(), v.to_string()));
                }
                "entry" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    let name = f.first().copied().unwrap_or("?");
                    if f.len() != 6 {
                        return Err(bad(
                            name,
                            format!("manifest line has {} fields, expected 6", f.len()),
                        ));
                    }
                    let num = |s: &str| {
                        s.parse::<usize>()
                            .map_err(|_| bad(name, format!("bad number {s:?}")))
                    };
                    let e = Entry {
                        name: name.to_string(),
                        dtype: f[1].to_string(),
                        rows: num(f[2])?,
                        cols: num(f[3])?,
                        offset: num(f[4])?,
                        sha256: f[5].to_string(),
                    };
                    if e.width().is_none() {
                        return Err(bad(name, format!("unknown dtype {}", e.dtype)));
                    }
                    c.entries.push(e);
                }
                "payload_bytes" => {
                    declared = Some(
                        rest.parse::<usize>()
                            .map_err(|_| bad("payload_bytes", rest.to_string()))?,
                    );
                }
                other => return Err(bad("header", format!("unknown header line tag {other:?}"))),
            }
        }
        let mut expected_offset = 0;
        for e in &c.entries {
            let end = e.offset + e.byte_len();
            if e.offset != expected_offset {
                return Err(bad(
                    &e.name,
                    format!("offset {} where {expected_offset} expected", e.offset),
                ));
            }
            if end > payload.len() {
                return Err(bad(
                    &e.name,
                    format!(
                        "needs bytes {}..{end} but payload has {}",
                        e.offset,
                        payload.len()
                    ),
                ));
            }
            if hex(&Sha256::digest(&payload[e.offset..end])) != e.sha256 {
                return Err(bad(&e.name, "checksum mismatch".into()));
            }
            expected_offset = end;
        }
        match declared {
            Some(n) if n == payload.len() && n == expected_offset => {}
            Some(n) => {
                return Err(bad(
                    "payload_bytes",
                    format!(
                        "declared {n}, manifest covers {expected_offset}, file holds {}",
                        payload.len()
                    ),
                ))
            }
            None => return Err(bad("payload_bytes", "missing".into())),
        }
        c.payload = payload.to_vec();
        Ok(c)
    }
}
