//! Named-tensor checkpoint container.
//!
//! Byte layout, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes   "GATARCK\0"
//! version    u32       1
//! header_len u32       length of the UTF-8 JSON header that follows
//! header     bytes
//! count      u32       number of tensors
//! per tensor:
//!   name_len u32, name bytes (UTF-8)
//!   ndim     u32, dims u64 x ndim
//!   data     f64 x product(dims)
//! ```

use std::io::{Read, Write};

use super::{NumericsError, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GATARCK\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: String,
    pub tensors: Vec<(String, Tensor)>,
}

fn io_err(e: std::io::Error) -> NumericsError {
    NumericsError::Checkpoint(e.to_string())
}

pub fn write_checkpoint(mut w: impl Write, ckpt: &Checkpoint) -> Result<(), NumericsError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(ckpt.header.len() as u32).to_le_bytes());
    buf.extend_from_slice(ckpt.header.as_bytes());
    buf.extend_from_slice(&(ckpt.tensors.len() as u32).to_le_bytes());
    for (name, t) in &ckpt.tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(io_err)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NumericsError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len()).ok_or_else(|| {
            NumericsError::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NumericsError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NumericsError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self, n: usize) -> Result<String, NumericsError> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| NumericsError::Checkpoint(e.to_string()))
    }
}

pub fn read_checkpoint(mut r: impl Read) -> Result<Checkpoint, NumericsError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(io_err)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(8)? != CHECKPOINT_MAGIC {
        return Err(NumericsError::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(NumericsError::Checkpoint(format!("unsupported version {version}")));
    }
    let hlen = c.u32()? as usize;
    let header = c.string(hlen)?;
    let count = c.u32()? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let nlen = c.u32()? as usize;
        let name = c.string(nlen)?;
        let ndim = c.u32()? as usize;
        let shape = (0..ndim).map(|_| c.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let bytes = c.take(n.checked_mul(8).ok_or_else(|| NumericsError::Checkpoint("tensor too large".into()))?)?;
        let data = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        tensors.push((name, Tensor::new(shape, data)?));
    }
    if c.pos != buf.len() {
        return Err(NumericsError::Checkpoint(format!("{} trailing bytes", buf.len() - c.pos)));
    }
    Ok(Checkpoint { header, tensors })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            header: r#"{"k":1}"#.into(),
            tensors: vec![
                ("w".into(), Tensor::matrix(2, 2, vec![1.0, -2.5, 3.0, f64::MIN_POSITIVE]).unwrap()),
                ("b".into(), Tensor::vector(vec![0.5])),
            ],
        }
    }

    #[test]
    fn round_trip() {
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &sample()).unwrap();
        assert_eq!(read_checkpoint(bytes.as_slice()).unwrap(), sample());
    }

    #[test]
    fn layout_is_little_endian() {
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &sample()).unwrap();
        assert_eq!(&bytes[..8], b"GATARCK\0");
        assert_eq!(&bytes[8..12], &[1, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[7, 0, 0, 0]);
        // last 8 bytes: 0.5
        assert_eq!(&bytes[bytes.len() - 8..], &0.5f64.to_le_bytes());
    }

    #[test]
    fn rejects_garbage_and_truncation() {
        assert!(read_checkpoint(&b"not a checkpoint"[..]).is_err());
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &sample()).unwrap();
        bytes.pop();
        assert!(read_checkpoint(bytes.as_slice()).is_err());
    }
}
