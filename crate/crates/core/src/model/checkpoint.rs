//! Binary checkpoint (`MSEL`) and SEG token (`SEGV`) files.
//!
//! `MSEL` layout, little-endian: magic, `u32` version, `u32` length plus the
//! JSON-encoded [`ModelConfig`], `u32` tensor count, then per tensor a `u32`
//! name length, the UTF-8 name, `u32` rows, `u32` cols and `rows * cols` f32
//! values. Values are stored at f32 precision.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ModelConfig, ModelError, SelectionModel};
use crate::binio::{self, FormatError};
use crate::numerics::{ParamStore, Tensor2};

const MSEL_MAGIC: &[u8; 4] = b"MSEL";
const MSEL_VERSION: u32 = 1;
const SEGV_MAGIC: &[u8; 4] = b"SEGV";
/// Upper bound on header strings, guards against allocating from garbage.
const MAX_HEADER_BYTES: usize = 1 << 20;

pub fn write_checkpoint<W: Write>(w: &mut W, model: &SelectionModel) -> Result<(), ModelError> {
    w.write_all(MSEL_MAGIC)?;
    binio::write_u32(w, MSEL_VERSION)?;
    let json = serde_json::to_vec(model.config()).map_err(|e| FormatError::Invalid(e.to_string()))?;
    binio::write_u32(w, binio::to_u32(json.len(), "config length")?)?;
    w.write_all(&json)?;
    let params = model.params();
    binio::write_u32(w, binio::to_u32(params.len(), "tensor count")?)?;
    for id in params.ids() {
        let name = params.name(id).as_bytes();
        binio::write_u32(w, binio::to_u32(name.len(), "name length")?)?;
        w.write_all(name)?;
        let t = params.value(id);
        binio::write_u32(w, binio::to_u32(t.rows(), "rows")?)?;
        binio::write_u32(w, binio::to_u32(t.cols(), "cols")?)?;
        binio::write_f32s(w, t.data().iter().copied())?;
    }
    Ok(())
}

fn read_len<R: Read>(r: &mut R, what: &str) -> Result<usize, FormatError> {
    let n = binio::read_u32(r)? as usize;
    if n > MAX_HEADER_BYTES {
        return Err(FormatError::Invalid(format!("{what} of {n} bytes is implausible")));
    }
    Ok(n)
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<SelectionModel, ModelError> {
    binio::expect_magic(r, MSEL_MAGIC)?;
    let version = binio::read_u32(r)?;
    if version != MSEL_VERSION {
        return Err(ModelError::VersionMismatch { expected: MSEL_VERSION, found: version });
    }
    let json_len = read_len(r, "config")?;
    let json = binio::read_bytes(r, json_len)?;
    let config: ModelConfig = serde_json::from_slice(&json).map_err(|e| FormatError::Invalid(format!("config: {e}")))?;
    config.validate()?;
    let count = binio::read_u32(r)? as usize;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let name_len = read_len(r, "tensor name")?;
        let name = String::from_utf8(binio::read_bytes(r, name_len)?)
            .map_err(|_| FormatError::Invalid("tensor name is not UTF-8".into()))?;
        let rows = binio::read_u32(r)? as usize;
        let cols = binio::read_u32(r)? as usize;
        let n = rows
            .checked_mul(cols)
            .filter(|&n| n <= 1 << 28)
            .ok_or_else(|| FormatError::Invalid(format!("tensor {name} too large")))?;
        let data = binio::read_f32s(r, n)?.into_iter().map(f64::from).collect();
        let t = Tensor2::new(rows, cols, data)?;
        params.add(name, t)?;
    }
    SelectionModel::from_parts(config, params)
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &SelectionModel) -> Result<(), ModelError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<SelectionModel, ModelError> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}

/// `SEGV`: magic, `u32` length, f32 values.
pub fn write_seg_token<W: Write>(w: &mut W, seg: &[f64]) -> std::io::Result<()> {
    w.write_all(SEGV_MAGIC)?;
    binio::write_u32(w, binio::to_u32(seg.len(), "seg length")?)?;
    binio::write_f32s(w, seg.iter().copied())
}

pub fn read_seg_token<R: Read>(r: &mut R) -> Result<Vec<f64>, FormatError> {
    binio::expect_magic(r, SEGV_MAGIC)?;
    let n = binio::read_u32(r)? as usize;
    if n > MAX_HEADER_BYTES {
        return Err(FormatError::Invalid(format!("seg token of length {n} is implausible")));
    }
    let v: Vec<f64> = binio::read_f32s(r, n)?.into_iter().map(f64::from).collect();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(FormatError::Invalid("seg token contains non-finite values".into()));
    }
    Ok(v)
}
