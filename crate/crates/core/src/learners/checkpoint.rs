//! Binary checkpoint layout, all integers little-endian:
//!
//! ```text
//! magic  "ALBM"
//! u16    version (1)
//! u8     model kind code
//! u8     flags (bit 0: loss head present)
//! u32    tensor count
//! per tensor: u8 ndim, ndim x u32 dims
//! payload: f32 values of every tensor in order
//! ```
//!
//! Parameters are stored as f32, so a reload is exact only to f32 precision.

use super::net::{ModelKind, Network};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ALBM";
pub const CHECKPOINT_VERSION: u16 = 1;

const FLAG_HEAD: u8 = 1;
const MAX_TENSORS: u32 = 64;
const MAX_PARAMS: usize = 1 << 28;

pub fn encode_checkpoint(net: &Network) -> Vec<u8> {
    let shapes = net.shapes();
    let mut out = Vec::with_capacity(16 + 4 * net.param_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(net.kind().code());
    out.push(if net.has_head() { FLAG_HEAD } else { 0 });
    out.extend_from_slice(&(shapes.len() as u32).to_le_bytes());
    for s in &shapes {
        out.push(s.len() as u8);
        for &d in s {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for &p in net.params() {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Strict decoder: rejects bad magic, unknown versions or kinds, shapes that
/// do not form a network, non-finite values and trailing bytes.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let code = r.u8()?;
    let kind = ModelKind::from_code(code)
        .ok_or_else(|| Error::Checkpoint(format!("unknown model kind {code}")))?;
    let flags = r.u8()?;
    if flags & !FLAG_HEAD != 0 {
        return Err(Error::Checkpoint(format!("unknown flags {flags:#04x}")));
    }
    let has_head = flags & FLAG_HEAD != 0;
    let count = r.u32()?;
    if count > MAX_TENSORS {
        return Err(Error::Checkpoint(format!("{count} tensors")));
    }
    let mut shapes = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let ndim = r.u8()?;
        if !(1..=2).contains(&ndim) {
            return Err(Error::Checkpoint(format!("tensor of rank {ndim}")));
        }
        let dims = (0..ndim)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        shapes.push(dims);
    }
    let sizes = sizes_from_shapes(&shapes, has_head)?;
    let total = shapes
        .iter()
        .try_fold(0usize, |acc, s| acc.checked_add(s.iter().product::<usize>()))
        .filter(|&t| t <= MAX_PARAMS)
        .ok_or_else(|| Error::Checkpoint("parameter count overflow".into()))?;
    let payload = r.take(total * 4)?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let params = payload
        .chunks_exact(4)
        .enumerate()
        .map(|(i, c)| {
            let v = f32::from_le_bytes(c.try_into().expect("4 bytes"));
            if v.is_finite() {
                Ok(v as f64)
            } else {
                Err(Error::Checkpoint(format!("non-finite parameter {i}")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let net = Network::from_parts(kind, sizes, has_head, params)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    if net.shapes() != shapes {
        return Err(Error::Checkpoint("shape table does not match architecture".into()));
    }
    if kind == ModelKind::Logistic && net.layers() != 1 {
        return Err(Error::Checkpoint("logistic model with hidden layers".into()));
    }
    Ok(net)
}

fn sizes_from_shapes(shapes: &[Vec<usize>], has_head: bool) -> Result<Vec<usize>> {
    let body = if has_head {
        shapes.len().checked_sub(2)
    } else {
        Some(shapes.len())
    }
    .filter(|&b| b >= 2 && b % 2 == 0)
    .ok_or_else(|| Error::Checkpoint(format!("{} tensors cannot form a network", shapes.len())))?;
    let mut sizes = Vec::with_capacity(body / 2 + 1);
    for pair in shapes[..body].chunks_exact(2) {
        let (w, b) = (&pair[0], &pair[1]);
        if w.len() != 2 || b.len() != 1 || w[0] != b[0] {
            return Err(Error::Checkpoint(format!("malformed layer {w:?} / {b:?}")));
        }
        match sizes.last() {
            None => sizes.push(w[1]),
            Some(&prev) if prev != w[1] => {
                return Err(Error::Checkpoint(format!("layer input {} after output {prev}", w[1])))
            }
            _ => {}
        }
        sizes.push(w[0]);
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::Checkpoint("zero-width layer".into()));
    }
    Ok(sizes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::ModelSpec;

    #[test]
    fn round_trip_to_f32_precision() {
        let net = ModelSpec::Mlp { hidden: [5, 4] }.build(3, 2, true, 9);
        let back = decode_checkpoint(&encode_checkpoint(&net)).unwrap();
        assert_eq!(back.sizes(), net.sizes());
        assert!(back.has_head());
        for (a, b) in net.params().iter().zip(back.params()) {
            assert_eq!(*b, *a as f32 as f64);
        }
    }

    #[test]
    fn rejects_corruption() {
        let net = ModelSpec::Logistic.build(2, 2, false, 0);
        let bytes = encode_checkpoint(&net);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(decode_checkpoint(&magic).is_err());
        let mut version = bytes.clone();
        version[4] = 2;
        assert!(decode_checkpoint(&version).is_err());
        let mut nan = bytes;
        let n = nan.len();
        nan[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode_checkpoint(&nan).is_err());
        assert!(decode_checkpoint(b"").is_err());
    }
}
