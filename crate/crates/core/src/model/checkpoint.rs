//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! magic "HOICKPT\0" | version u32 | config digest [32] | config json (u64 len + bytes)
//! tensor count u32 | per tensor: name (u32 len + utf8), ndim u32, dims u64.., data f64..
//! has_adam u8 | [lr, beta1, beta2, eps f64 | step u64 | m f64.. | v f64..]
//! sha256 of everything above [32]
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{AdamConfig, AdamState, ModelConfig, Parameters, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"HOICKPT\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: Parameters,
    pub adam: Option<AdamState>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn bytes(&mut self, v: &[u8]) {
        self.0.extend_from_slice(v);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(msg: &str) -> Error {
    Error::CorruptCheckpoint(msg.to_string())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("length overflow"))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| corrupt("length overflow"))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.bytes(&ckpt.config.digest());
    let json = serde_json::to_vec(&ckpt.config).expect("model config serializes");
    w.u64(json.len() as u64);
    w.bytes(&json);
    w.u32(ckpt.params.tensors.len() as u32);
    for t in &ckpt.params.tensors {
        w.u32(t.name.len() as u32);
        w.bytes(t.name.as_bytes());
        w.u32(t.shape.len() as u32);
        for &d in &t.shape {
            w.u64(d as u64);
        }
        w.f64s(&t.data);
    }
    match &ckpt.adam {
        None => w.u8(0),
        Some(a) => {
            w.u8(1);
            w.f64s(&[a.config.lr, a.config.beta1, a.config.beta2, a.config.eps]);
            w.u64(a.step);
            w.f64s(&a.m);
            w.f64s(&a.v);
        }
    }
    let sum: [u8; 32] = Sha256::digest(&w.0).into();
    w.bytes(&sum);
    w.0
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<Checkpoint> {
    if buf.len() < MAGIC.len() || &buf[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut r = Reader { buf, pos: MAGIC.len() };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    if buf.len() < r.pos + 32 + 32 {
        return Err(corrupt("truncated"));
    }
    let (body, sum) = buf.split_at(buf.len() - 32);
    if Sha256::digest(body).as_slice() != sum {
        return Err(corrupt("checksum mismatch"));
    }
    let mut r = Reader { buf: body, pos: r.pos };
    let digest: [u8; 32] = r.take(32)?.try_into().unwrap();
    let json_len = r.len()?;
    let config: ModelConfig = serde_json::from_slice(r.take(json_len)?).map_err(|e| corrupt(&e.to_string()))?;
    if config.digest() != digest {
        return Err(corrupt("config digest does not match embedded config"));
    }
    config.validate().map_err(|e| corrupt(&e.to_string()))?;
    let expected = Parameters::zeros(&config);
    let n_tensors = r.u32()? as usize;
    if n_tensors != expected.tensors.len() {
        return Err(corrupt("tensor count does not match config"));
    }
    let mut tensors = Vec::with_capacity(n_tensors);
    for want in &expected.tensors {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| corrupt("tensor name is not utf-8"))?;
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
        if name != want.name || shape != want.shape {
            return Err(corrupt(&format!("tensor {name} {shape:?} does not match config")));
        }
        let data = r.f64s(want.data.len())?;
        tensors.push(Tensor { name, shape, data });
    }
    let params = Parameters { tensors };
    let adam = match r.u8()? {
        0 => None,
        1 => {
            let h = r.f64s(4)?;
            let config = AdamConfig {
                lr: h[0],
                beta1: h[1],
                beta2: h[2],
                eps: h[3],
            };
            let step = r.u64()?;
            let n = params.count();
            let m = r.f64s(n)?;
            let v = r.f64s(n)?;
            Some(AdamState { config, step, m, v })
        }
        _ => return Err(corrupt("bad optimizer flag")),
    };
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes"));
    }
    Ok(Checkpoint { config, params, adam })
}

/// Writes atomically via a sibling temp file.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, encode_checkpoint(ckpt)).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&buf)
}

/// Loads and checks that the checkpoint was written for `expected`.
pub fn load_checkpoint_for(path: &Path, expected: &ModelConfig) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.config.digest() != expected.digest() {
        return Err(Error::ConfigMismatch);
    }
    Ok(ckpt)
}
