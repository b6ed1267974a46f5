//! Binary checkpoints of the potential `u`.
//!
//! Layout (little-endian): magic `KRFL`, format version `u16`, `n` as `u32`,
//! points per axis as `u32`, `t` as `f64`, then the values of `u` as `f64` in
//! storage order. Fiber-invariant surface grids are recognised by their value
//! count.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};

pub const MAGIC: &[u8; 4] = b"KRFL";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub t: f64,
    pub u: ScalarField,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let spec = self.u.spec();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.u.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(spec.n() as u32).to_le_bytes());
        out.extend_from_slice(&(spec.points() as u32).to_le_bytes());
        out.extend_from_slice(&self.t.to_le_bytes());
        for v in self.u.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Checkpoint(format!("truncated header ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Checkpoint(format!("bad magic {:?}", &bytes[..4])));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        let n = word(6);
        let points = word(10);
        let t = f64::from_le_bytes(bytes[14..22].try_into().unwrap());
        let body = &bytes[HEADER_LEN..];
        if body.len() % 8 != 0 {
            return Err(Error::Checkpoint("payload is not a whole number of f64".into()));
        }
        let count = body.len() / 8;
        let full = GridSpec::new(n, points).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let spec = if count == full.len() {
            full
        } else if n == 2 && count == points * points {
            GridSpec::fiber_invariant(points)?
        } else {
            return Err(Error::Checkpoint(format!(
                "expected {} values for n = {n}, N = {points}, found {count}",
                full.len()
            )));
        };
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let u = ScalarField::from_values(spec, values)?;
        u.check_finite()?;
        if !t.is_finite() {
            return Err(Error::Checkpoint(format!("non-finite time {t}")));
        }
        Ok(Self { t, u })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        f.sync_all()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = GridSpec::new(1, 8).unwrap();
        let u = ScalarField::from_fn(spec, |x| (x[0] + 0.3).sin() * 1e-7 + x[1].cos() / 3.0);
        let c = Checkpoint { t: 1.0 / 3.0, u };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.krfl");
        c.write(&p).unwrap();
        let back = Checkpoint::read(&p).unwrap();
        assert_eq!(back.t.to_bits(), c.t.to_bits());
        for (a, b) in back.u.values().iter().zip(c.u.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn fiber_invariant_grid_is_recognised() {
        let spec = GridSpec::fiber_invariant(8).unwrap();
        let c = Checkpoint {
            t: 2.0,
            u: ScalarField::constant(spec, 0.5),
        };
        assert_eq!(Checkpoint::from_bytes(&c.to_bytes()).unwrap().u.spec(), spec);
    }

    #[test]
    fn corruption_is_rejected() {
        let spec = GridSpec::new(1, 8).unwrap();
        let c = Checkpoint {
            t: 0.0,
            u: ScalarField::zeros(spec),
        };
        let mut bytes = c.to_bytes();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Checkpoint(_))));
        let bytes = c.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..10]).is_err());
    }
}
