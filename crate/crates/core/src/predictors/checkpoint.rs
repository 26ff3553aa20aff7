//! `EESP` predictor checkpoint.
//!
//! | offset | size | field                                          |
//! |--------|------|------------------------------------------------|
//! | 0      | 4    | magic `EESP`                                   |
//! | 4      | 4    | version `u32` = 1                              |
//! | 8      | 4    | kind `u32` (0 mean_pool_identity, 1 linear_ar, 2 mlp) |
//! | 12     | 4    | dim `u32`                                      |
//! | 16     | 4    | levels `u32`                                   |
//! | 20     | 4    | window_cap `u32`                               |
//! | 24     | 4    | hidden `u32`                                   |
//! | 28     | 4    | reserved, 0                                    |
//! | 32     | 8    | learning_rate `f64`                            |
//! | 40     | 8    | seed `u64`                                     |
//! | 48     | ...  | parameter blocks, `f32`                        |
//! |        | 4    | attention flag `u32` (0 or 1)                  |
//! |        | ...  | if 1: query, key, value matrices, `d*d` `f32` each |
//!
//! Parameter blocks, for each level `l = 1..=levels` in order (`d` = dim,
//! `h` = hidden, matrices row-major):
//!
//! * `linear_ar`: weight `d x l*d`, bias `d`.
//! * `mlp`: abstraction hidden weight `h x d`, bias `h`, output weight `d x h`,
//!   bias `d`; then prediction hidden weight `h x l*d`, bias `h`, output weight
//!   `d x h`, bias `d`.
//! * `mean_pool_identity`: nothing.
//!
//! Everything is little-endian. Parameters are narrowed to `f32` on write.

use std::io::{Read, Write};

use super::{Affine, LevelParams, Mlp, PredictorConfig, PredictorKind, PredictorState};
use crate::error::{Error, Result};
use crate::hec::Projections;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"EESP";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_HEADER_SIZE: usize = 48;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub predictor: PredictorState,
    pub attention: Option<Projections>,
}

fn put_f32s(out: &mut Vec<u8>, values: impl IntoIterator<Item = f64>) {
    for v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn put_affine(out: &mut Vec<u8>, a: &Affine) {
    put_f32s(out, a.weight.iter().chain(&a.bias).copied());
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = self.predictor.config();
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        for v in [
            CHECKPOINT_VERSION,
            c.kind.code(),
            c.dim as u32,
            c.levels as u32,
            c.window_cap as u32,
            c.hidden as u32,
            0,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&c.learning_rate.to_le_bytes());
        out.extend_from_slice(&c.seed.to_le_bytes());
        for l in 1..=c.levels {
            match self.predictor.level_params(l) {
                LevelParams::Identity => {}
                LevelParams::Linear(map) => put_affine(&mut out, map),
                LevelParams::Mlp { abstraction, predictor } => {
                    for mlp in [abstraction, predictor] {
                        put_affine(&mut out, &mlp.hidden);
                        put_affine(&mut out, &mlp.output);
                    }
                }
            }
        }
        match &self.attention {
            None => out.extend_from_slice(&0u32.to_le_bytes()),
            Some(p) => {
                out.extend_from_slice(&1u32.to_le_bytes());
                for m in [&p.query, &p.key, &p.value] {
                    put_f32s(&mut out, m.iter().copied());
                }
            }
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic: [u8; 4] = cur.take(4)?.try_into().unwrap();
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic { expected: CHECKPOINT_MAGIC, found: magic });
        }
        let version = cur.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let kind_code = cur.u32()?;
        let kind = PredictorKind::from_code(kind_code)
            .ok_or_else(|| Error::Malformed(format!("unknown predictor kind code {kind_code}")))?;
        let dim = cur.u32()? as usize;
        let levels = cur.u32()? as usize;
        let window_cap = cur.u32()? as usize;
        let hidden = cur.u32()? as usize;
        let _reserved = cur.u32()?;
        let learning_rate = f64::from_le_bytes(cur.take(8)?.try_into().unwrap());
        let seed = u64::from_le_bytes(cur.take(8)?.try_into().unwrap());
        let config = PredictorConfig { kind, dim, levels, window_cap, hidden, learning_rate, seed };
        config.validate()?;

        let d = dim;
        let mut params = Vec::with_capacity(levels);
        for l in 1..=levels {
            params.push(match kind {
                PredictorKind::MeanPoolIdentity => LevelParams::Identity,
                PredictorKind::LinearAr => LevelParams::Linear(cur.affine(d, l * d)?),
                PredictorKind::Mlp => {
                    let abstraction = Mlp { hidden: cur.affine(hidden, d)?, output: cur.affine(d, hidden)? };
                    let predictor = Mlp { hidden: cur.affine(hidden, l * d)?, output: cur.affine(d, hidden)? };
                    LevelParams::Mlp { abstraction, predictor }
                }
            });
        }
        let attention = match cur.u32()? {
            0 => None,
            1 => Some(Projections {
                dim: d,
                query: cur.f32s(d * d)?,
                key: cur.f32s(d * d)?,
                value: cur.f32s(d * d)?,
            }),
            other => return Err(Error::Malformed(format!("attention flag {other}"))),
        };
        if cur.pos != bytes.len() {
            return Err(Error::Malformed(format!(
                "{} trailing bytes after checkpoint",
                bytes.len() - cur.pos
            )));
        }
        Ok(Self { predictor: PredictorState::from_parts(config, params)?, attention })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Malformed(format!("checkpoint truncated at byte {}", self.bytes.len())));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 4)?;
        let values: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Malformed("non-finite parameter in checkpoint".into()));
        }
        Ok(values)
    }

    fn affine(&mut self, rows: usize, cols: usize) -> Result<Affine> {
        Ok(Affine { rows, cols, weight: self.f32s(rows * cols)?, bias: self.f32s(rows)? })
    }
}
