//! Single-file checkpoints: a UTF-8 header listing metadata and parameter
//! shapes, then every parameter's values as little-endian `f64` in header
//! order.
//!
//! ```text
//! STRUCTGEN-CHECKPOINT 1
//! meta kind=uni
//! param lstm.0.w 512 155
//! data
//! <raw bytes>
//! ```

use std::io::{BufRead, Write};

use super::{NumericsError, ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &str = "STRUCTGEN-CHECKPOINT";
const FORMAT_VERSION: u32 = 1;

/// Decoded checkpoint contents.
#[derive(Debug, Clone)]
pub struct CheckpointFile {
    pub version: u32,
    pub meta: Vec<(String, String)>,
    pub store: ParamStore,
}

fn err(msg: impl Into<String>) -> NumericsError {
    NumericsError::Checkpoint(msg.into())
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    meta: &[(String, String)],
    store: &ParamStore,
) -> Result<(), NumericsError> {
    let io = |e: std::io::Error| err(e.to_string());
    let mut header = format!("{CHECKPOINT_MAGIC} {FORMAT_VERSION}\n");
    for (k, v) in meta {
        if k.contains(['=', '\n']) || v.contains('\n') {
            return Err(err(format!("metadata entry `{k}` is not a single key=value line")));
        }
        header.push_str(&format!("meta {k}={v}\n"));
    }
    for id in store.ids() {
        let name = store.name(id);
        if name.contains(char::is_whitespace) {
            return Err(err(format!("parameter name `{name}` contains whitespace")));
        }
        header.push_str("param ");
        header.push_str(name);
        for d in store.value(id).shape() {
            header.push_str(&format!(" {d}"));
        }
        header.push('\n');
    }
    header.push_str("data\n");
    w.write_all(header.as_bytes()).map_err(io)?;
    for id in store.ids() {
        let mut buf = Vec::with_capacity(store.value(id).len() * 8);
        for v in store.value(id).data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_checkpoint<R: BufRead>(mut r: R) -> Result<CheckpointFile, NumericsError> {
    let mut line = String::new();
    let next_line = |r: &mut R, line: &mut String| -> Result<(), NumericsError> {
        line.clear();
        let n = r.read_line(line).map_err(|e| err(e.to_string()))?;
        if n == 0 {
            return Err(err("unexpected end of header"));
        }
        if line.ends_with('\n') {
            line.pop();
        }
        Ok(())
    };

    next_line(&mut r, &mut line)?;
    let version = line
        .strip_prefix(CHECKPOINT_MAGIC)
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| err("bad magic line"))?;
    if version != FORMAT_VERSION {
        return Err(err(format!("unsupported format version {version}")));
    }

    let mut meta = Vec::new();
    let mut shapes: Vec<(String, Vec<usize>)> = Vec::new();
    loop {
        next_line(&mut r, &mut line)?;
        if line == "data" {
            break;
        }
        if let Some(kv) = line.strip_prefix("meta ") {
            let (k, v) = kv.split_once('=').ok_or_else(|| err(format!("bad meta line `{line}`")))?;
            meta.push((k.to_string(), v.to_string()));
        } else if let Some(rest) = line.strip_prefix("param ") {
            let mut parts = rest.split(' ').filter(|p| !p.is_empty());
            let name = parts.next().ok_or_else(|| err("param line without name"))?.to_string();
            let dims = parts
                .map(|d| d.parse::<usize>().map_err(|_| err(format!("bad dimension `{d}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            shapes.push((name, dims));
        } else {
            return Err(err(format!("unrecognized header line `{line}`")));
        }
    }

    let mut store = ParamStore::new();
    for (name, dims) in shapes {
        let n: usize = dims.iter().product();
        let mut bytes = vec![0u8; n * 8];
        r.read_exact(&mut bytes).map_err(|_| err(format!("truncated data for `{name}`")))?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        store.add(name, Tensor::from_vec(&dims, data)?)?;
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| err(e.to_string()))? != 0 {
        return Err(err("trailing bytes after parameter data"));
    }
    Ok(CheckpointFile { version, meta, store })
}
