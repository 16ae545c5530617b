//! Checkpoint files.
//!
//! Layout: a u64 little-endian header length, the JSON header, then one
//! record per tensor in lexicographic name order. Each record is
//! `u64 name_len | name bytes | u64 rank | u64 dims... | f32 data...`,
//! all little-endian. Optimizer accumulators share the tensor section under
//! an `opt.` name prefix; everything else is a model parameter.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::tensor::{ParameterStore, Tensor};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Training counters stored with every checkpoint. `batches_done` counts
/// finished batches within the current epoch, so a resumed run continues at
/// exactly that batch. Wall-clock time is deliberately absent: checkpoint
/// bytes must be a pure function of (seed, config, data).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epoch: usize,
    pub batches_done: usize,
    pub w1: f64,
    pub seed: u64,
}

impl Default for TrainingMeta {
    fn default() -> Self {
        TrainingMeta { epoch: 0, batches_done: 0, w1: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub config: ModelConfig,
    pub src_vocab_hash: String,
    pub tgt_vocab_hash: String,
    pub meta: TrainingMeta,
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub fn write_checkpoint(path: &Path, header: &CheckpointHeader, tensors: &ParameterStore) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let header_json = serde_json::to_vec(header)?;
    write_u64(&mut out, header_json.len() as u64)?;
    out.write_all(&header_json)?;

    // ParameterStore iteration is lexicographic already.
    for (name, tensor) in tensors.iter() {
        if !name.is_ascii() {
            return Err(Error::usage(format!("tensor name `{name}` is not ASCII")));
        }
        write_u64(&mut out, name.len() as u64)?;
        out.write_all(name.as_bytes())?;
        write_u64(&mut out, tensor.rank() as u64)?;
        for &d in tensor.shape() {
            write_u64(&mut out, d as u64)?;
        }
        for &v in tensor.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, ParameterStore)> {
    let mut input = BufReader::new(File::open(path).map_err(|e| {
        Error::usage(format!("cannot open checkpoint {}: {e}", path.display()))
    })?);
    let header_len = read_u64(&mut input)? as usize;
    let mut header_bytes = vec![0u8; header_len];
    input.read_exact(&mut header_bytes)?;
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)?;
    if header.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::usage(format!(
            "unsupported checkpoint format version {}",
            header.format_version
        )));
    }

    let mut tensors = ParameterStore::new();
    loop {
        let name_len = match read_u64(&mut input) {
            Ok(v) => v as usize,
            Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e),
        };
        let mut name_bytes = vec![0u8; name_len];
        input.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::usage("tensor name is not valid UTF-8"))?;
        let rank = read_u64(&mut input)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(&mut input)? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = vec![0f32; len];
        let mut buf = [0u8; 4];
        for v in &mut data {
            input.read_exact(&mut buf)?;
            *v = f32::from_le_bytes(buf);
        }
        tensors.insert(name, Tensor::new(shape, data)?);
    }
    Ok((header, tensors))
}
