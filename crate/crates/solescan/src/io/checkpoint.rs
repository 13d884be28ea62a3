//! Model checkpoint container.
//!
//! Layout (see README for the full description):
//!
//! ```text
//! SSCK1\n
//! config <key> <value>\n          (sorted by key)
//! tensor <name> <rows> <cols>\n   (sorted by name)
//! end_header\n
//! <for each tensor in header order: rows*cols float32, little-endian>
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &str = "SSCK1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub config: BTreeMap<String, String>,
    /// (name, rows, cols, row-major data), sorted by name.
    pub tensors: Vec<(String, usize, usize, Vec<f32>)>,
}

impl Checkpoint {
    pub fn insert_tensor(&mut self, name: impl Into<String>, rows: usize, cols: usize, data: Vec<f32>) {
        assert_eq!(data.len(), rows * cols);
        let name = name.into();
        match self.tensors.binary_search_by(|t| t.0.as_str().cmp(&name)) {
            Ok(i) => self.tensors[i] = (name, rows, cols, data),
            Err(i) => self.tensors.insert(i, (name, rows, cols, data)),
        }
    }

    pub fn tensor(&self, name: &str) -> Option<(usize, usize, &[f32])> {
        self.tensors
            .binary_search_by(|t| t.0.as_str().cmp(name))
            .ok()
            .map(|i| {
                let t = &self.tensors[i];
                (t.1, t.2, t.3.as_slice())
            })
    }
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC.as_bytes());
    out.push(b'\n');
    for (k, v) in &ckpt.config {
        out.extend_from_slice(format!("config {k} {v}\n").as_bytes());
    }
    debug_assert!(ckpt.tensors.windows(2).all(|w| w[0].0 < w[1].0));
    for (name, rows, cols, _) in &ckpt.tensors {
        out.extend_from_slice(format!("tensor {name} {rows} {cols}\n").as_bytes());
    }
    out.extend_from_slice(b"end_header\n");
    for (_, _, _, data) in &ckpt.tensors {
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let perr = |loc: String, msg: String| Error::Parse {
        path: path.to_path_buf(),
        location: loc,
        message: msg,
    };

    let mut offset = 0usize;
    let mut lineno = 0usize;
    let next_line = |offset: &mut usize| -> Result<String> {
        let end = bytes[*offset..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|p| *offset + p)
            .ok_or_else(|| perr("header".into(), "missing end_header".into()))?;
        let line = std::str::from_utf8(&bytes[*offset..end])
            .map_err(|_| perr(format!("byte {offset}"), "non-utf8 header".into()))?
            .to_string();
        *offset = end + 1;
        Ok(line)
    };

    lineno += 1;
    let magic = next_line(&mut offset)?;
    if magic != MAGIC {
        return Err(perr("line 1".into(), format!("bad magic '{magic}'")));
    }

    let mut ckpt = Checkpoint::default();
    let mut shapes: Vec<(String, usize, usize)> = Vec::new();
    loop {
        lineno += 1;
        let line = next_line(&mut offset)?;
        if line == "end_header" {
            break;
        }
        let parts: Vec<&str> = line.split(' ').collect();
        match parts.as_slice() {
            ["config", key, value] => {
                ckpt.config.insert(key.to_string(), value.to_string());
            }
            ["tensor", name, rows, cols] => {
                let rows: usize = rows
                    .parse()
                    .map_err(|_| perr(format!("line {lineno}"), "bad tensor rows".into()))?;
                let cols: usize = cols
                    .parse()
                    .map_err(|_| perr(format!("line {lineno}"), "bad tensor cols".into()))?;
                shapes.push((name.to_string(), rows, cols));
            }
            _ => {
                return Err(perr(
                    format!("line {lineno}"),
                    format!("unexpected header line '{line}'"),
                ))
            }
        }
    }

    for (name, rows, cols) in shapes {
        let count = rows * cols;
        let end = offset + count * 4;
        if end > bytes.len() {
            return Err(perr(
                format!("byte {offset}"),
                format!("tensor '{name}' truncated"),
            ));
        }
        let data: Vec<f32> = bytes[offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset = end;
        ckpt.tensors.push((name, rows, cols, data));
    }
    if offset != bytes.len() {
        return Err(perr(
            format!("byte {offset}"),
            "trailing bytes after last tensor".into(),
        ));
    }
    ckpt.tensors.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(ckpt)
}
