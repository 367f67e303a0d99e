//! Binary checkpoint container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "SSRNCKPT"
//! version    u8       1
//! sf, seq_len, d_model, n_heads, ff_width, seed   u64 each
//! clip flag  u8       0 = none, 1 = followed by f64 level
//! [clip      f64]
//! adam step  u64
//! count      u32      number of tensors
//! per tensor:
//!   name_len u16, name (UTF-8), rows u64, cols u64, rows*cols f64 (row-major)
//! ```
//!
//! Tensors are the 13 parameters followed by `adam.m/<name>` and
//! `adam.v/<name>` for each. Floats are stored bit-for-bit.

use std::path::Path;

use ndarray::Array2;

use super::adam::AdamState;
use super::params::{Params, TENSOR_COUNT, TENSOR_NAMES};
use super::{SrnConfig, SrnModel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SSRNCKPT";
const VERSION: u8 = 1;

pub fn encode_checkpoint(model: &SrnModel) -> Vec<u8> {
    let cfg = &model.config;
    let mut out = Vec::with_capacity(64 + 3 * 8 * model.params.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    for v in [cfg.sf, cfg.seq_len, cfg.d_model, cfg.n_heads, cfg.ff_width] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.extend_from_slice(&cfg.seed.to_le_bytes());
    match cfg.input_clip {
        Some(c) => {
            out.push(1);
            out.extend_from_slice(&c.to_le_bytes());
        }
        None => out.push(0),
    }
    out.extend_from_slice(&model.adam.step.to_le_bytes());
    out.extend_from_slice(&(3 * TENSOR_COUNT as u32).to_le_bytes());

    let groups: [(&str, &Params); 3] = [
        ("", &model.params),
        ("adam.m/", &model.adam.m),
        ("adam.v/", &model.adam.v),
    ];
    for (prefix, params) in groups {
        for (name, t) in params.named() {
            let full = format!("{prefix}{name}");
            out.extend_from_slice(&(full.len() as u16).to_le_bytes());
            out.extend_from_slice(full.as_bytes());
            out.extend_from_slice(&(t.nrows() as u64).to_le_bytes());
            out.extend_from_slice(&(t.ncols() as u64).to_le_bytes());
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format {
            line: 0,
            msg: format!("checkpoint truncated at byte {}", self.pos),
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| bad(format!("dimension {v} too large")))
    }
}

fn bad(msg: String) -> Error {
    Error::Format { line: 0, msg }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<SrnModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(bad("not a refiner checkpoint (bad magic)".into()));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let sf = r.usize()?;
    let seq_len = r.usize()?;
    let d_model = r.usize()?;
    let n_heads = r.usize()?;
    let ff_width = r.usize()?;
    let seed = r.u64()?;
    let input_clip = match r.u8()? {
        0 => None,
        1 => Some(r.f64()?),
        f => return Err(bad(format!("bad clip flag {f}"))),
    };
    let config = SrnConfig {
        sf,
        seq_len,
        d_model,
        n_heads,
        ff_width,
        seed,
        input_clip,
    };
    config.validate()?;
    let step = r.u64()?;
    let count = r.u32()? as usize;
    if count != 3 * TENSOR_COUNT {
        return Err(bad(format!(
            "expected {} tensors, found {count}",
            3 * TENSOR_COUNT
        )));
    }

    let shapes = Params::shapes(&config);
    let mut groups = [
        Params::zeros(&config),
        Params::zeros(&config),
        Params::zeros(&config),
    ];
    for (g, prefix) in groups.iter_mut().zip(["", "adam.m/", "adam.v/"]) {
        for (i, slot) in g.tensors_mut().into_iter().enumerate() {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| bad("tensor name is not UTF-8".into()))?;
            let want = format!("{prefix}{}", TENSOR_NAMES[i]);
            if name != want {
                return Err(bad(format!("expected tensor `{want}`, found `{name}`")));
            }
            let rows = r.usize()?;
            let cols = r.usize()?;
            if (rows, cols) != shapes[i] {
                return Err(Error::Shape(format!(
                    "tensor `{name}` is {rows}x{cols}, config implies {}x{}",
                    shapes[i].0, shapes[i].1
                )));
            }
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                data.push(r.f64()?);
            }
            *slot = Array2::from_shape_vec((rows, cols), data).expect("length checked");
        }
    }
    if r.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let [params, m, v] = groups;
    Ok(SrnModel {
        config,
        params,
        adam: AdamState { m, v, step },
    })
}

pub fn save_checkpoint(path: &Path, model: &SrnModel) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<SrnModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::srn::SrnBatch;
    use num_complex::Complex64;

    fn trained_model() -> SrnModel {
        let cfg = SrnConfig {
            sf: 2,
            seq_len: 4,
            d_model: 8,
            n_heads: 2,
            ff_width: 4,
            seed: 9,
            input_clip: Some(3.5),
        };
        let mut model = SrnModel::init(cfg).unwrap();
        let mut batch = SrnBatch::default();
        let z = |a: f64| Complex64::new(a, -a / 2.0);
        batch.push(
            (0..4).map(|i| z(i as f64 * 0.3)).collect(),
            (0..8).map(|i| z(i as f64 * -0.1)).collect(),
            (0..4).map(|i| z(1.0 - i as f64 * 0.2)).collect(),
            vec![true, false, false, false],
        );
        for _ in 0..3 {
            let g = model.backward(&batch).unwrap();
            model.adam_step(&g, 1e-2).unwrap();
        }
        model
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let model = trained_model();
        let bytes = encode_checkpoint(&model);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = trained_model();
        save_checkpoint(&path, &model).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), model);
        let missing = dir.path().join("absent.ckpt");
        assert!(matches!(load_checkpoint(&missing), Err(Error::Io { .. })));
    }

    #[test]
    fn rejects_damaged_input() {
        let bytes = encode_checkpoint(&trained_model());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(decode_checkpoint(&bad_magic).is_err());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(decode_checkpoint(&trailing).is_err());
        let mut version = bytes;
        version[8] = 2;
        assert!(decode_checkpoint(&version).is_err());
    }
}
