//! Binary field snapshots.
//!
//! Layout (all little-endian): magic `b"PNLF"`, `u32` version, `u32` spatial
//! dimension `n`, `u32` component count `N`, `n` x `u32` nodes per axis, then
//! the node-major `f64` values (first axis slowest, components fastest).

use std::io::{Read, Write};

use crate::error::{PnlError, Result};

use super::grid::GridSpec;
use super::types::Field;

pub const MAGIC: &[u8; 4] = b"PNLF";
pub const VERSION: u32 = 1;

/// Decoded snapshot before it is attached to a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub components: usize,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Snapshot {
    /// Attaches the values to `grid`, checking that the node layout matches.
    pub fn into_field(self, grid: &GridSpec) -> Result<Field> {
        if grid.shape() != self.shape {
            return Err(PnlError::ShapeMismatch(format!(
                "snapshot shape {:?} differs from grid shape {:?}",
                self.shape,
                grid.shape()
            )));
        }
        Field::new(grid.clone(), self.components, self.values)
    }
}

pub fn encode(field: &Field) -> Vec<u8> {
    let shape = field.grid().shape();
    let mut buf = Vec::with_capacity(16 + 4 * shape.len() + 8 * field.values().len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(field.components() as u32).to_le_bytes());
    for m in &shape {
        buf.extend_from_slice(&(*m as u32).to_le_bytes());
    }
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn write_snapshot<W: Write>(field: &Field, mut out: W) -> Result<()> {
    out.write_all(&encode(field))?;
    Ok(())
}

fn take_u32(bytes: &[u8], at: &mut usize) -> Result<u32> {
    let end = *at + 4;
    let chunk = bytes
        .get(*at..end)
        .ok_or_else(|| PnlError::Format("truncated snapshot header".into()))?;
    *at = end;
    Ok(u32::from_le_bytes(chunk.try_into().expect("four bytes")))
}

pub fn decode(bytes: &[u8]) -> Result<Snapshot> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(PnlError::Format("missing PNLF magic".into()));
    }
    let mut at = 4;
    let version = take_u32(bytes, &mut at)?;
    if version != VERSION {
        return Err(PnlError::Format(format!("unsupported snapshot version {version}")));
    }
    let n = take_u32(bytes, &mut at)? as usize;
    let components = take_u32(bytes, &mut at)? as usize;
    if n == 0 || components == 0 {
        return Err(PnlError::Format("zero dimension or component count".into()));
    }
    let shape = (0..n).map(|_| take_u32(bytes, &mut at).map(|m| m as usize)).collect::<Result<Vec<_>>>()?;
    let count = shape
        .iter()
        .try_fold(components, |acc, m| acc.checked_mul(*m))
        .ok_or_else(|| PnlError::Format("snapshot size overflows".into()))?;
    let payload = &bytes[at..];
    if payload.len() != count * 8 {
        return Err(PnlError::Format(format!(
            "expected {} payload bytes, found {}",
            count * 8,
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
        .collect();
    Ok(Snapshot { components, shape, values })
}

pub fn read_snapshot<R: Read>(mut input: R) -> Result<Snapshot> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::grid::Boundary;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip(values in proptest::collection::vec(-1e6f64..1e6, 5 * 6 * 2)) {
            let g = GridSpec::new(vec![1.0, 2.0], vec![4, 5], Boundary::Dirichlet).unwrap();
            let f = Field::new(g.clone(), 2, values).unwrap();
            let back = decode(&encode(&f)).unwrap().into_field(&g).unwrap();
            prop_assert_eq!(back, f);
        }
    }

    #[test]
    fn header_layout() {
        let g = GridSpec::unit(2, 4, Boundary::Periodic).unwrap();
        let bytes = encode(&Field::zeros(&g, 3));
        assert_eq!(&bytes[..4], b"PNLF");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 3);
        assert_eq!(bytes.len(), 24 + 16 * 3 * 8);
    }

    #[test]
    fn rejects_corrupt_input() {
        let g = GridSpec::unit(1, 4, Boundary::Periodic).unwrap();
        let mut bytes = encode(&Field::zeros(&g, 1));
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(decode(&bytes).is_err());
        let other = GridSpec::unit(1, 5, Boundary::Periodic).unwrap();
        let snap = decode(&encode(&Field::zeros(&g, 1))).unwrap();
        assert!(snap.into_field(&other).is_err());
    }
}
