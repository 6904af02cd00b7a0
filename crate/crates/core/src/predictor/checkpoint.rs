//! Binary model checkpoint.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic      4 bytes  "CAPI"
//! version    u32      1
//! variant    u8       0 large, 1 small, 2 tiny, 3 custom
//! alphabet   u32 count, then count x u32 code points
//! labels     u32 count, then per label: u32 byte length + UTF-8 bytes
//! l0         u32
//! dropout    f64
//! init_std   f64
//! conv       u32 count, then per layer 5 x u32:
//!            in_features, out_features, kernel, stride, pool (0 = none)
//! fc_hidden  u32 count, then count x u32
//! layers     per layer (conv first, then fully connected):
//!            u64 n + n x f64 weights, u64 m + m x f64 biases
//! ```

use std::io::{self, Read, Write};
use std::path::Path;

use super::encoding::Alphabet;
use super::model::{ConvLayerCfg, ConvNetModel, ModelCfg, Variant};
use super::ModelError;
use crate::log_model::OutcomeLabel;

pub const MAGIC: &[u8; 4] = b"CAPI";
pub const VERSION: u32 = 1;

fn variant_code(v: Variant) -> u8 {
    match v {
        Variant::Large => 0,
        Variant::Small => 1,
        Variant::Tiny => 2,
        Variant::Custom => 3,
    }
}

fn variant_from(code: u8) -> Result<Variant, ModelError> {
    Ok(match code {
        0 => Variant::Large,
        1 => Variant::Small,
        2 => Variant::Tiny,
        3 => Variant::Custom,
        other => return Err(ModelError::Checkpoint(format!("unknown variant code {other}"))),
    })
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<(), ModelError> {
    let v = u32::try_from(v).map_err(|_| ModelError::Checkpoint("value exceeds u32".into()))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn to_bytes(model: &ConvNetModel) -> Result<Vec<u8>, ModelError> {
    let cfg = model.cfg();
    let mut out = Vec::with_capacity(64 + model.num_params() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(variant_code(cfg.variant));
    put_u32(&mut out, cfg.alphabet.len())?;
    for &c in cfg.alphabet.chars() {
        out.extend_from_slice(&(c as u32).to_le_bytes());
    }
    put_u32(&mut out, cfg.labels.len())?;
    for l in &cfg.labels {
        let bytes = l.as_str().as_bytes();
        put_u32(&mut out, bytes.len())?;
        out.extend_from_slice(bytes);
    }
    put_u32(&mut out, cfg.l0)?;
    out.extend_from_slice(&cfg.dropout.to_le_bytes());
    out.extend_from_slice(&cfg.init_std.to_le_bytes());
    put_u32(&mut out, cfg.conv.len())?;
    for l in &cfg.conv {
        for v in [l.in_features, l.out_features, l.kernel, l.stride, l.pool.unwrap_or(0)] {
            put_u32(&mut out, v)?;
        }
    }
    put_u32(&mut out, cfg.fc_hidden.len())?;
    for &h in &cfg.fc_hidden {
        put_u32(&mut out, h)?;
    }
    let params = model.params();
    for b in model.blocks() {
        put_f64s(&mut out, &params[b.weight_offset..b.weight_offset + b.weight_len]);
        put_f64s(&mut out, &params[b.bias_offset..b.bias_offset + b.bias_len]);
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], ModelError> {
        if self.buf.len() < n {
            return Err(ModelError::Checkpoint("truncated checkpoint".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, expected: usize, into: &mut Vec<f64>) -> Result<(), ModelError> {
        let n = self.u64()?;
        if n != expected as u64 {
            return Err(ModelError::Checkpoint(format!("array of {n} values, expected {expected}")));
        }
        let bytes = self.take(expected * 8)?;
        into.extend(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))));
        Ok(())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<ConvNetModel, ModelError> {
    let mut r = Reader { buf: bytes };
    if r.take(4)? != MAGIC {
        return Err(ModelError::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
    }
    let variant = variant_from(r.u8()?)?;
    let n_chars = r.u32()?;
    let mut chars = Vec::with_capacity(n_chars.min(1 << 16));
    for _ in 0..n_chars {
        let code = r.u32()? as u32;
        chars.push(char::from_u32(code).ok_or_else(|| ModelError::Checkpoint(format!("invalid char {code:#x}")))?);
    }
    let alphabet = Alphabet::new(chars)?;
    let n_labels = r.u32()?;
    let mut labels = Vec::new();
    for _ in 0..n_labels {
        let len = r.u32()?;
        let text = std::str::from_utf8(r.take(len)?).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        labels.push(OutcomeLabel::parse(text).map_err(ModelError::Checkpoint)?);
    }
    let l0 = r.u32()?;
    let dropout = r.f64()?;
    let init_std = r.f64()?;
    let n_conv = r.u32()?;
    let mut conv = Vec::new();
    for _ in 0..n_conv {
        let (i, o, k, d, p) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?);
        conv.push(ConvLayerCfg {
            in_features: i,
            out_features: o,
            kernel: k,
            stride: d,
            pool: (p > 0).then_some(p),
        });
    }
    let n_fc = r.u32()?;
    let fc_hidden = (0..n_fc).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
    let cfg = ModelCfg {
        variant,
        alphabet,
        l0,
        conv,
        fc_hidden,
        labels,
        dropout,
        init_std,
    };
    let shell = ConvNetModel::zeroed(cfg.clone())?;
    let mut params = Vec::with_capacity(shell.num_params());
    for b in shell.blocks() {
        r.f64s(b.weight_len, &mut params)?;
        r.f64s(b.bias_len, &mut params)?;
    }
    if !r.buf.is_empty() {
        return Err(ModelError::Checkpoint("trailing bytes".into()));
    }
    ConvNetModel::from_parts(cfg, params)
}

pub fn write_to(model: &ConvNetModel, mut w: impl Write) -> Result<(), ModelError> {
    w.write_all(&to_bytes(model)?)?;
    Ok(())
}

pub fn read_from(mut r: impl Read) -> Result<ConvNetModel, ModelError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    from_bytes(&buf)
}

pub fn save(model: &ConvNetModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, to_bytes(model)?)?;
    std::fs::rename(&tmp, path).map_err(|e: io::Error| e.into())
}

pub fn load(path: impl AsRef<Path>) -> Result<ConvNetModel, ModelError> {
    from_bytes(&std::fs::read(path)?)
}
