//! Binary weight files and training history CSV.

use std::io::{Read, Write};

use crate::error::{NnError, Result};
use crate::model::{build_model, ModelConfig, SegModel, Variant};
use crate::tensor::Tensor;
use crate::train::HistoryRow;

pub const MAGIC: &[u8; 4] = b"TXWT";
pub const FORMAT_VERSION: u32 = 1;

/// Magic, version, JSON config block, then every tensor as name, shape and
/// little-endian `f64` values.
pub fn save_weights<W: Write>(model: &SegModel, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let config = serde_json::to_vec(model.config()).map_err(|e| NnError::Format(e.to_string()))?;
    out.write_all(&(config.len() as u32).to_le_bytes())?;
    out.write_all(&config)?;
    let store = model.params();
    out.write_all(&(store.len() as u32).to_le_bytes())?;
    for (name, t) in store.names().iter().zip(store.tensors()) {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(t.rows() as u32).to_le_bytes())?;
        out.write_all(&(t.cols() as u32).to_le_bytes())?;
        for v in t.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(NnError::Format(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn load_weights<R: Read>(mut input: R) -> Result<SegModel> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(NnError::Format("bad magic bytes".into()));
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(NnError::Format(format!("unsupported version {version}")));
    }
    let len = c.u32()? as usize;
    let config: ModelConfig = serde_json::from_slice(c.take(len)?).map_err(|e| NnError::Format(format!("config block: {e}")))?;
    let mut model = build_model(config, 0)?;
    let count = c.u32()? as usize;
    if count != model.params().len() {
        return Err(NnError::Format(format!("{count} tensors, expected {}", model.params().len())));
    }
    let names = model.params().names().to_vec();
    for (i, expected) in names.iter().enumerate() {
        let nlen = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(nlen)?).map_err(|_| NnError::Format("tensor name is not UTF-8".into()))?;
        if name != expected {
            return Err(NnError::Format(format!("tensor {i} is {name:?}, expected {expected:?}")));
        }
        let (rows, cols) = (c.u32()? as usize, c.u32()? as usize);
        let want = model.params().tensor(i).shape();
        if (rows, cols) != want {
            return Err(NnError::Format(format!("{name} is {rows}x{cols}, expected {}x{}", want.0, want.1)));
        }
        let bytes = c.take(rows * cols * 8)?;
        let data: Vec<f64> = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite(name.to_string()));
        }
        model.params_mut().tensors_mut()[i] = Tensor::from_vec(rows, cols, data)?;
    }
    if c.pos != buf.len() {
        return Err(NnError::Format(format!("{} trailing bytes", buf.len() - c.pos)));
    }
    Ok(model)
}

/// Loads and checks that the file holds the expected variant.
pub fn load_weights_for<R: Read>(input: R, variant: Variant) -> Result<SegModel> {
    let model = load_weights(input)?;
    if model.variant() != variant {
        return Err(NnError::Config(format!("file holds {}, expected {variant}", model.variant())));
    }
    Ok(model)
}

/// `update,train_loss,val_mcc`, with an empty MCC field between validations.
pub fn write_history_csv<W: Write>(mut out: W, history: &[HistoryRow]) -> Result<()> {
    writeln!(out, "update,train_loss,val_mcc")?;
    for h in history {
        match h.val_mcc {
            Some(m) => writeln!(out, "{},{},{}", h.update, h.train_loss, m)?,
            None => writeln!(out, "{},{},", h.update, h.train_loss)?,
        }
    }
    Ok(())
}
