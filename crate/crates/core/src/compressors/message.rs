//! Compressed messages, their bit-cost model and canonical byte layout.
//!
//! Bit cost:
//! - sparse entries: `entries * (ceil(log2 d) + 32)`
//! - ternary block: `32 + 2 d`
//! - composite: sum of the parts
//!
//! Byte layout (little-endian): a tag byte, `dim` as `u32`, then the payload.
//! Sparse payloads are `count: u32` followed by `(index: u32, value: f32)`
//! pairs. Ternary payloads are `scale: f32` followed by 2-bit codes packed
//! four per byte, lowest bits first (`0` zero, `1` plus, `2` minus).
//! Composite payloads are the two parts' own layouts back to back.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::DenseVector;

const TAG_SPARSE: u8 = 0x01;
const TAG_TERNARY: u8 = 0x02;
const TAG_COMPOSITE: u8 = 0x03;

/// Bits charged for one transmitted real value.
pub const VALUE_BITS: u64 = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseEntry {
    pub index: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Sparse(Vec<SparseEntry>),
    /// `signs[i]` is `-1`, `0` or `1`; coordinate `i` decodes to `signs[i] * scale`.
    Ternary { scale: f64, signs: Vec<i8> },
    Composite(Box<CompressedMessage>, Box<CompressedMessage>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressedMessage {
    payload: Payload,
    dim: usize,
}

/// Bits needed to address one coordinate of a `dim`-vector.
pub fn index_bits(dim: usize) -> u64 {
    assert!(dim >= 1);
    (usize::BITS - (dim - 1).leading_zeros()) as u64
}

impl CompressedMessage {
    /// Sparse message from `(index, value)` pairs. Entries with value exactly
    /// zero are dropped; indices must be strictly increasing and below `dim`.
    pub fn sparse(dim: usize, entries: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let entries: Vec<SparseEntry> = entries
            .into_iter()
            .filter(|&(_, v)| v != 0.0)
            .map(|(index, value)| SparseEntry { index, value })
            .collect();
        check_sparse(dim, &entries)?;
        Ok(Self {
            payload: Payload::Sparse(entries),
            dim,
        })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            payload: Payload::Sparse(Vec::new()),
            dim,
        }
    }

    pub fn ternary(scale: f64, signs: Vec<i8>) -> Result<Self> {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::Format(format!("ternary scale {scale} is not finite and >= 0")));
        }
        if signs.iter().any(|s| !(-1..=1).contains(s)) {
            return Err(Error::Format("ternary code outside {-1, 0, 1}".into()));
        }
        if signs.is_empty() {
            return Err(Error::Format("ternary block of dimension 0".into()));
        }
        Ok(Self {
            dim: signs.len(),
            payload: Payload::Ternary { scale, signs },
        })
    }

    pub fn composite(first: CompressedMessage, second: CompressedMessage) -> Result<Self> {
        if first.dim != second.dim {
            return Err(Error::DimensionMismatch {
                expected: first.dim,
                got: second.dim,
            });
        }
        Ok(Self {
            dim: first.dim,
            payload: Payload::Composite(Box::new(first), Box::new(second)),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn bit_cost(&self) -> u64 {
        match &self.payload {
            Payload::Sparse(entries) => entries.len() as u64 * (index_bits(self.dim) + VALUE_BITS),
            Payload::Ternary { .. } => VALUE_BITS + 2 * self.dim as u64,
            Payload::Composite(a, b) => a.bit_cost() + b.bit_cost(),
        }
    }

    /// Number of transmitted nonzero values.
    pub fn nnz(&self) -> usize {
        match &self.payload {
            Payload::Sparse(entries) => entries.len(),
            Payload::Ternary { signs, .. } => signs.iter().filter(|&&s| s != 0).count(),
            Payload::Composite(a, b) => a.nnz() + b.nnz(),
        }
    }

    /// Adds the decoded message into `out`.
    pub fn accumulate_into(&self, factor: f64, out: &mut [f64]) -> Result<()> {
        if out.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: out.len(),
            });
        }
        match &self.payload {
            Payload::Sparse(entries) => {
                for e in entries {
                    let slot = out.get_mut(e.index).ok_or_else(|| {
                        Error::Format(format!("index {} out of range for dim {}", e.index, self.dim))
                    })?;
                    *slot += factor * e.value;
                }
            }
            Payload::Ternary { scale, signs } => {
                for (slot, &s) in out.iter_mut().zip(signs) {
                    if s != 0 {
                        *slot += factor * (s as f64 * scale);
                    }
                }
            }
            Payload::Composite(a, b) => {
                a.accumulate_into(factor, out)?;
                b.accumulate_into(factor, out)?;
            }
        }
        Ok(())
    }

    pub fn decompress(&self) -> Result<DenseVector> {
        let mut out = vec![0.0; self.dim];
        self.accumulate_into(1.0, &mut out)?;
        Ok(DenseVector::from_raw(out))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_bytes(&mut out);
        out
    }

    fn write_bytes(&self, out: &mut Vec<u8>) {
        let dim = self.dim as u32;
        match &self.payload {
            Payload::Sparse(entries) => {
                out.push(TAG_SPARSE);
                out.extend_from_slice(&dim.to_le_bytes());
                out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
                for e in entries {
                    out.extend_from_slice(&(e.index as u32).to_le_bytes());
                    out.extend_from_slice(&(e.value as f32).to_le_bytes());
                }
            }
            Payload::Ternary { scale, signs } => {
                out.push(TAG_TERNARY);
                out.extend_from_slice(&dim.to_le_bytes());
                out.extend_from_slice(&(*scale as f32).to_le_bytes());
                for chunk in signs.chunks(4) {
                    let mut byte = 0u8;
                    for (j, &s) in chunk.iter().enumerate() {
                        let code = match s {
                            1 => 1u8,
                            -1 => 2u8,
                            _ => 0u8,
                        };
                        byte |= code << (2 * j);
                    }
                    out.push(byte);
                }
            }
            Payload::Composite(a, b) => {
                out.push(TAG_COMPOSITE);
                out.extend_from_slice(&dim.to_le_bytes());
                a.write_bytes(out);
                b.write_bytes(out);
            }
        }
    }

    /// Decodes a canonical layout. Values come back at 32-bit precision.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut reader = Reader { bytes, pos: 0 };
        let msg = reader.message()?;
        if reader.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after message",
                bytes.len() - reader.pos
            )));
        }
        Ok(msg)
    }
}

fn check_sparse(dim: usize, entries: &[SparseEntry]) -> Result<()> {
    if dim == 0 {
        return Err(Error::Format("message of dimension 0".into()));
    }
    let mut prev: Option<usize> = None;
    for e in entries {
        if e.index >= dim {
            return Err(Error::Format(format!("index {} out of range for dim {dim}", e.index)));
        }
        if prev.is_some_and(|p| p >= e.index) {
            return Err(Error::Format("sparse indices not strictly increasing".into()));
        }
        if !e.value.is_finite() {
            return Err(Error::Format(format!("non-finite value at index {}", e.index)));
        }
        prev = Some(e.index);
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!("truncated message at byte {}", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self) -> Result<f32> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn message(&mut self) -> Result<CompressedMessage> {
        let tag = self.u8()?;
        let dim = self.u32()? as usize;
        match tag {
            TAG_SPARSE => {
                let count = self.u32()? as usize;
                if count > dim {
                    return Err(Error::Format(format!("{count} entries exceed dim {dim}")));
                }
                let mut entries = Vec::with_capacity(count);
                for _ in 0..count {
                    let index = self.u32()? as usize;
                    let value = self.f32()? as f64;
                    entries.push(SparseEntry { index, value });
                }
                check_sparse(dim, &entries)?;
                Ok(CompressedMessage {
                    payload: Payload::Sparse(entries),
                    dim,
                })
            }
            TAG_TERNARY => {
                let scale = self.f32()? as f64;
                let packed = self.take(dim.div_ceil(4))?;
                let mut signs = Vec::with_capacity(dim);
                for i in 0..dim {
                    let code = (packed[i / 4] >> (2 * (i % 4))) & 0b11;
                    signs.push(match code {
                        0 => 0,
                        1 => 1,
                        2 => -1,
                        _ => return Err(Error::Format(format!("invalid ternary code at {i}"))),
                    });
                }
                CompressedMessage::ternary(scale, signs)
            }
            TAG_COMPOSITE => {
                let first = self.message()?;
                let second = self.message()?;
                if first.dim != dim || second.dim != dim {
                    return Err(Error::Format("composite parts disagree on dim".into()));
                }
                CompressedMessage::composite(first, second)
            }
            other => Err(Error::Format(format!("unknown payload tag {other:#04x}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_bits_is_ceil_log2() {
        assert_eq!(index_bits(1), 0);
        assert_eq!(index_bits(2), 1);
        assert_eq!(index_bits(3), 2);
        assert_eq!(index_bits(4), 2);
        assert_eq!(index_bits(5), 3);
        assert_eq!(index_bits(1024), 10);
        assert_eq!(index_bits(1025), 11);
    }

    #[test]
    fn decompress_examples() {
        let m = CompressedMessage::sparse(4, [(0, 2.0), (2, 6.0)]).unwrap();
        assert_eq!(m.decompress().unwrap().as_slice(), &[2.0, 0.0, 6.0, 0.0]);

        let c = CompressedMessage::composite(
            CompressedMessage::sparse(3, [(2, 3.0)]).unwrap(),
            CompressedMessage::sparse(3, [(1, 6.0)]).unwrap(),
        )
        .unwrap();
        assert_eq!(c.decompress().unwrap().as_slice(), &[0.0, 6.0, 3.0]);

        let e = CompressedMessage::empty(5);
        assert!(e.decompress().unwrap().is_zero());
        assert_eq!(e.bit_cost(), 0);
    }

    #[test]
    fn zero_entries_are_dropped() {
        let m = CompressedMessage::sparse(3, [(0, 0.0), (1, 0.0)]).unwrap();
        assert_eq!(m.nnz(), 0);
        assert_eq!(m.bit_cost(), 0);
    }

    #[test]
    fn rejects_bad_indices() {
        assert!(CompressedMessage::sparse(3, [(3, 1.0)]).is_err());
        assert!(CompressedMessage::sparse(3, [(1, 1.0), (1, 2.0)]).is_err());
        assert!(CompressedMessage::sparse(3, [(2, 1.0), (1, 2.0)]).is_err());
        let a = CompressedMessage::empty(3);
        let b = CompressedMessage::empty(4);
        assert!(CompressedMessage::composite(a, b).is_err());
    }

    #[test]
    fn golden_sparse_layout() {
        let m = CompressedMessage::sparse(4, [(0, 2.0), (2, -6.0)]).unwrap();
        let expected: Vec<u8> = [
            &[0x01][..],
            &4u32.to_le_bytes(),
            &2u32.to_le_bytes(),
            &0u32.to_le_bytes(),
            &2.0f32.to_le_bytes(),
            &2u32.to_le_bytes(),
            &(-6.0f32).to_le_bytes(),
        ]
        .concat();
        assert_eq!(m.to_bytes(), expected);
        assert_eq!(
            hex(&m.to_bytes()),
            concat!("01", "04000000", "02000000", "00000000", "00000040", "02000000", "0000c0c0")
        );
    }

    #[test]
    fn golden_ternary_layout() {
        let m = CompressedMessage::ternary(4.0, vec![1, -1, 0, 0, -1]).unwrap();
        assert_eq!(hex(&m.to_bytes()), concat!("02", "05000000", "00008040", "09", "02"));
        assert_eq!(m.bit_cost(), 32 + 10);
    }

    #[test]
    fn golden_composite_layout() {
        let m = CompressedMessage::composite(
            CompressedMessage::sparse(2, [(1, 1.0)]).unwrap(),
            CompressedMessage::empty(2),
        )
        .unwrap();
        assert_eq!(
            hex(&m.to_bytes()),
            concat!(
                "03", "02000000",
                "01", "02000000", "01000000", "01000000", "0000803f",
                "01", "02000000", "00000000",
            )
        );
        assert_eq!(m.bit_cost(), 33);
    }

    #[test]
    fn decode_rejects_corrupt_payloads() {
        let mut bytes = CompressedMessage::sparse(4, [(2, 1.0)]).unwrap().to_bytes();
        bytes[9] = 9; // index byte
        assert!(matches!(CompressedMessage::from_bytes(&bytes), Err(Error::Format(_))));
        assert!(CompressedMessage::from_bytes(&[0x07, 1, 0, 0, 0]).is_err());
        assert!(CompressedMessage::from_bytes(&[0x01, 1, 0]).is_err());
        let mut ok = CompressedMessage::empty(2).to_bytes();
        ok.push(0);
        assert!(CompressedMessage::from_bytes(&ok).is_err());
    }

    fn hex(bytes: &[u8]) -> String {
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    }
}
