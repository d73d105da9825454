//! Binary model files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! b"GNET"                       magic
//! u32  version                  currently 1
//! u8   kind                     0 dense, 1 gru, 2 lstm
//! u32  max_len, d_emb, hidden
//! u32  vocab size V, then V x u32 code points in index order (1..=V)
//! u32  tensor count
//!      per tensor: u32 name length, UTF-8 name, u32 rows, u32 cols,
//!                  rows*cols x f64 row-major values
//! u64  FNV-1a 64 over every preceding byte
//! ```

use std::fs;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;

use crate::encoding::Vocabulary;
use crate::error::{Error, Result};
use crate::nn::Tensor2;
use crate::scalar::Scalar;

use super::{GenderModel, ModelDims, ModelKind};

pub const MAGIC: &[u8; 4] = b"GNET";
pub const FORMAT_VERSION: u32 = 1;

fn checksum(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("dimension fits in u32");
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn to_bytes<T: Scalar>(model: &GenderModel<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(model.kind().tag());
    let dims = model.dims();
    put_u32(&mut out, dims.max_len);
    put_u32(&mut out, dims.d_emb);
    put_u32(&mut out, dims.hidden);
    let chars = model.vocab().chars();
    put_u32(&mut out, chars.len());
    for &c in chars {
        out.extend_from_slice(&u32::from(c).to_le_bytes());
    }
    let params = model.params();
    put_u32(&mut out, params.len());
    for (name, p) in model.param_names().iter().zip(params) {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, p.value.rows());
        put_u32(&mut out, p.value.cols());
        for v in p.value.as_slice() {
            out.extend_from_slice(&v.widen().to_le_bytes());
        }
    }
    let sum = checksum(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Truncated);
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Reads the header far enough to learn the model kind, after verifying the
/// checksum.
pub fn peek_kind(bytes: &[u8]) -> Result<ModelKind> {
    let body = verified_body(bytes)?;
    let mut cur = Cursor { bytes: &body[8..] };
    let tag = cur.u8()?;
    ModelKind::from_tag(tag).ok_or_else(|| Error::MalformedModel(format!("unknown kind tag {tag}")))
}

fn verified_body(bytes: &[u8]) -> Result<&[u8]> {
    if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
        return Err(if MAGIC.starts_with(bytes) { Error::Truncated } else { Error::BadMagic });
    }
    if bytes.len() < 8 {
        return Err(Error::Truncated);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    if bytes.len() < 8 + 1 + 8 {
        return Err(Error::Truncated);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    let computed = checksum(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    Ok(body)
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<GenderModel<T>> {
    let body = verified_body(bytes)?;
    let mut cur = Cursor { bytes: &body[8..] };
    let tag = cur.u8()?;
    let kind = ModelKind::from_tag(tag)
        .ok_or_else(|| Error::MalformedModel(format!("unknown kind tag {tag}")))?;
    let dims = ModelDims { max_len: cur.usize()?, d_emb: cur.usize()?, hidden: cur.usize()? };
    let n_chars = cur.usize()?;
    let mut chars = Vec::with_capacity(n_chars.min(body.len()));
    for _ in 0..n_chars {
        let cp = cur.u32()?;
        chars.push(char::from_u32(cp).ok_or_else(|| Error::MalformedModel(format!("invalid code point {cp:#x}")))?);
    }
    let vocab = Vocabulary::from_chars(chars.iter().copied())?;
    if vocab.chars() != chars.as_slice() {
        return Err(Error::MalformedModel("vocabulary is not in code-point order".into()));
    }

    let mut model = GenderModel::<T>::zeroed(kind, vocab, dims);
    let n_tensors = cur.usize()?;
    let names = kind.param_names();
    if n_tensors != names.len() {
        return Err(Error::MalformedModel(format!(
            "{kind} model has {} tensors, file lists {n_tensors}",
            names.len()
        )));
    }
    for (expected, param) in names.iter().zip(model.params_mut()) {
        let name_len = cur.usize()?;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| Error::MalformedModel("tensor name is not UTF-8".into()))?;
        if name != *expected {
            return Err(Error::MalformedModel(format!("expected tensor {expected}, found {name}")));
        }
        let (rows, cols) = (cur.usize()?, cur.usize()?);
        if (rows, cols) != param.value.shape() {
            return Err(Error::ShapeMismatch(format!(
                "tensor {name} is {rows}x{cols}, model expects {}x{}",
                param.value.rows(),
                param.value.cols()
            )));
        }
        let values = (0..rows * cols).map(|_| cur.f64().map(T::lit)).collect::<Result<Vec<T>>>()?;
        param.value = Tensor2::from_vec(rows, cols, values)?;
    }
    if !cur.bytes.is_empty() {
        return Err(Error::MalformedModel(format!("{} trailing bytes", cur.bytes.len())));
    }
    Ok(model)
}

pub fn save_model<T: Scalar>(model: &GenderModel<T>, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<GenderModel<T>> {
    from_bytes(&fs::read(path)?)
}

/// Loads a model and insists on its architecture.
pub fn load_model_of_kind<T: Scalar>(path: &Path, expected: ModelKind) -> Result<GenderModel<T>> {
    let bytes = fs::read(path)?;
    let found = peek_kind(&bytes)?;
    if found != expected {
        return Err(Error::KindMismatch { expected, found });
    }
    from_bytes(&bytes)
}
