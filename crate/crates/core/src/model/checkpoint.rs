//! Binary checkpoints: magic, dimensions, dropout rate, frozen flag, then the
//! four parameter arrays as little-endian `f64`.

use std::io::{Read, Write};

use super::ToyModel;
use crate::error::{invalid, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"BLTOYM01";

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

impl ToyModel {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        for d in [self.d_in, self.hidden, self.classes] {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        w.write_all(&self.dropout_rate.to_le_bytes())?;
        w.write_all(&[self.frozen_encoder as u8])?;
        for block in self.blocks() {
            for v in block {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(invalid("not a model checkpoint"));
        }
        let d_in = read_u64(r)? as usize;
        let hidden = read_u64(r)? as usize;
        let classes = read_u64(r)? as usize;
        let limit = 1usize << 32;
        if d_in == 0 || hidden == 0 || classes == 0 || d_in.saturating_mul(hidden) > limit || hidden.saturating_mul(classes) > limit {
            return Err(invalid("checkpoint has implausible dimensions"));
        }
        let mut rate = [0u8; 8];
        r.read_exact(&mut rate)?;
        let mut frozen = [0u8; 1];
        r.read_exact(&mut frozen)?;
        let model = ToyModel {
            d_in,
            hidden,
            classes,
            w1: read_f64s(r, d_in * hidden)?,
            b1: read_f64s(r, hidden)?,
            w2: read_f64s(r, hidden * classes)?,
            b2: read_f64s(r, classes)?,
            dropout_rate: f64::from_le_bytes(rate),
            frozen_encoder: frozen[0] != 0,
        };
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut bytes)
    }
}
