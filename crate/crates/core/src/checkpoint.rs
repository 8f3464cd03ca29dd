//! Encoder checkpoints.
//!
//! Layout (all integers and floats little endian):
//!
//! ```text
//! magic           5 bytes   "KSCL1"
//! step            u64       optimizer steps taken
//! key_momentum    f64
//! sgd_momentum    f64
//! weight_decay    f64
//! 3 × parameter block, in order: query encoder, key encoder, SGD velocity
//!     layers      u32
//!     layers × { out u32, in u32 }
//!     layers × { out·in f64 weights (row-major), out f64 bias }
//! digest          32 bytes  SHA-256 of every preceding byte
//! ```
//!
//! All three blocks must have identical shapes. Parameters are stored as
//! `f64` regardless of the in-memory scalar type.

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::encoder::{EncoderPair, Linear, Mlp, Sgd};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 5] = b"KSCL1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub step: u64,
    pub encoders: EncoderPair<T>,
    pub optimizer: Sgd<T>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.step.to_le_bytes());
        for x in [
            self.encoders.momentum(),
            self.optimizer.momentum,
            self.optimizer.weight_decay,
        ] {
            out.extend_from_slice(&x.as_f64().to_le_bytes());
        }
        for m in [
            &self.encoders.query,
            self.encoders.key(),
            self.optimizer.velocity(),
        ] {
            write_block(&mut out, m);
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 32 {
            return Err(corrupt("file too short"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if &body[..MAGIC.len()] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("digest mismatch"));
        }
        let mut r = Cursor {
            buf: body,
            pos: MAGIC.len(),
        };
        let step = r.u64()?;
        let key_momentum = r.f64()?;
        let sgd_momentum = r.f64()?;
        let weight_decay = r.f64()?;
        let query = read_block::<T>(&mut r)?;
        let key = read_block::<T>(&mut r)?;
        let velocity = read_block::<T>(&mut r)?;
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes"));
        }
        if !query.same_shape(&velocity) {
            return Err(corrupt("optimizer state shape differs from encoder"));
        }
        let encoders = EncoderPair::from_parts(query, key, T::lit(key_momentum))
            .map_err(|e| corrupt(&e.to_string()))?;
        let optimizer = Sgd::from_parts(T::lit(sgd_momentum), T::lit(weight_decay), velocity);
        Ok(Self {
            step,
            encoders,
            optimizer,
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::CheckpointCorrupt(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

fn corrupt(msg: &str) -> Error {
    Error::CheckpointCorrupt(msg.to_string())
}

fn write_block<T: Scalar>(out: &mut Vec<u8>, m: &Mlp<T>) {
    let shapes = m.shapes();
    out.extend_from_slice(&(shapes.len() as u32).to_le_bytes());
    for (o, i) in &shapes {
        out.extend_from_slice(&(*o as u32).to_le_bytes());
        out.extend_from_slice(&(*i as u32).to_le_bytes());
    }
    for p in m.params() {
        out.extend_from_slice(&p.as_f64().to_le_bytes());
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
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
        let x = f64::from_bits(self.u64()?);
        if x.is_finite() {
            Ok(x)
        } else {
            Err(corrupt("non-finite value"))
        }
    }
}

fn read_block<T: Scalar>(r: &mut Cursor<'_>) -> Result<Mlp<T>> {
    let n = r.u32()? as usize;
    if n == 0 || n > 1024 {
        return Err(corrupt("implausible layer count"));
    }
    let shapes = (0..n)
        .map(|_| Ok((r.u32()? as usize, r.u32()? as usize)))
        .collect::<Result<Vec<_>>>()?;
    let mut layers = Vec::with_capacity(n);
    for (out, inp) in shapes {
        let count = out
            .checked_mul(inp)
            .ok_or_else(|| corrupt("layer too large"))?;
        if count.saturating_mul(8) > r.buf.len() {
            return Err(corrupt("truncated"));
        }
        let weight = (0..count)
            .map(|_| r.f64().map(T::lit))
            .collect::<Result<Vec<_>>>()?;
        let bias = (0..out)
            .map(|_| r.f64().map(T::lit))
            .collect::<Result<Vec<_>>>()?;
        layers.push(Linear {
            weight: Matrix::from_row_major(out, inp, weight)?,
            bias,
        });
    }
    Mlp::new(layers).map_err(|e| corrupt(&e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = Mlp::init(&[4, 6, 3], &mut rng).unwrap();
        let mut encoders = EncoderPair::new(q, 0.99).unwrap();
        encoders.query = Mlp::init(&[4, 6, 3], &mut rng).unwrap();
        encoders.momentum_update().unwrap();
        let mut optimizer = Sgd::new(&encoders.query, 0.9, 1e-4).unwrap();
        let g = Mlp::init(&[4, 6, 3], &mut rng).unwrap();
        optimizer.step(&mut encoders.query, &g, 0.1).unwrap();
        Checkpoint {
            step: 42,
            encoders,
            optimizer,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let bytes = c.to_bytes();
        assert_eq!(&bytes[..5], b"KSCL1");
        let back = Checkpoint::<f64>::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn detects_corruption() {
        let bytes = sample().to_bytes();
        for i in [0usize, 7, 40, bytes.len() / 2, bytes.len() - 1] {
            let mut b = bytes.clone();
            b[i] ^= 0x10;
            assert!(matches!(
                Checkpoint::<f64>::from_bytes(&b),
                Err(Error::CheckpointCorrupt(_))
            ));
        }
        assert!(Checkpoint::<f64>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::<f64>::from_bytes(b"KSCL1").is_err());
    }

    #[test]
    fn loads_into_single_precision() {
        let c = sample();
        let back = Checkpoint::<f32>::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back.encoders.query.shapes(), c.encoders.query.shapes());
    }
}
