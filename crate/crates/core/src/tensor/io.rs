//! The `DGT1` tensor file format.
//!
//! Layout: magic `DGT1`, u8 dtype code (0 = f32, 1 = f64), u8 ndim, then
//! ndim little-endian u32 extents, then the row-major little-endian scalar
//! payload. Round-trips are bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{DType, Scalar};
use crate::tensor::Tensor;

pub(crate) const DGT1_MAGIC: &[u8; 4] = b"DGT1";

/// A tensor of either precision, for callers that inspect files generically.
#[derive(Clone, Debug)]
pub enum TensorAny {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl TensorAny {
    pub fn shape(&self) -> &[usize] {
        match self {
            TensorAny::F32(t) => t.shape(),
            TensorAny::F64(t) => t.shape(),
        }
    }

    pub fn dtype(&self) -> DType {
        match self {
            TensorAny::F32(_) => DType::F32,
            TensorAny::F64(_) => DType::F64,
        }
    }

    /// View the payload as f64 regardless of storage precision.
    pub fn to_f64(&self) -> Tensor<f64> {
        match self {
            TensorAny::F32(t) => t.cast::<f64>(),
            TensorAny::F64(t) => t.clone(),
        }
    }
}

/// Byte-counting reader so parse errors can name an offset.
pub(crate) struct Counted<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Counted<R> {
    pub(crate) fn new(inner: R) -> Counted<R> {
        Counted { inner, offset: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.offset
    }

    pub(crate) fn read_exact_or(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let at = self.offset;
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Err(Error::format_at(
                format!("file truncated while reading {what}"),
                at,
            )),
            Err(e) => Err(Error::Io(e)),
        }
    }

    pub(crate) fn read_u8(&mut self, what: &str) -> Result<u8> {
        let mut b = [0u8; 1];
        self.read_exact_or(&mut b, what)?;
        Ok(b[0])
    }

    pub(crate) fn read_u16(&mut self, what: &str) -> Result<u16> {
        let mut b = [0u8; 2];
        self.read_exact_or(&mut b, what)?;
        Ok(u16::from_le_bytes(b))
    }

    pub(crate) fn read_u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact_or(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    pub(crate) fn read_u64(&mut self, what: &str) -> Result<u64> {
        let mut b = [0u8; 8];
        self.read_exact_or(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }

    /// Succeeds with `None` exactly at end-of-stream, for optional trailers.
    pub(crate) fn read_u32_or_eof(&mut self, what: &str) -> Result<Option<u32>> {
        let mut b = [0u8; 4];
        let mut filled = 0;
        while filled < 4 {
            let n = self.inner.read(&mut b[filled..]).map_err(Error::Io)?;
            if n == 0 {
                if filled == 0 {
                    return Ok(None);
                }
                return Err(Error::format_at(
                    format!("file truncated while reading {what}"),
                    self.offset,
                ));
            }
            filled += n;
            self.offset += n as u64;
        }
        Ok(Some(u32::from_le_bytes(b)))
    }

    pub(crate) fn expect_eof(&mut self, what: &str) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::format_at(
                format!("trailing bytes after {what}"),
                self.offset,
            )),
            Err(e) => Err(Error::Io(e)),
        }
    }
}

/// Serialize one tensor in DGT1 form.
pub fn write_tensor<S: Scalar>(t: &Tensor<S>, out: &mut Vec<u8>) -> Result<()> {
    if t.shape().len() > u8::MAX as usize {
        return Err(Error::arg("dgt1", "rank exceeds 255"));
    }
    for &e in t.shape() {
        if e > u32::MAX as usize {
            return Err(Error::arg("dgt1", "extent exceeds u32"));
        }
    }
    out.extend_from_slice(DGT1_MAGIC);
    out.push(S::DTYPE.code());
    out.push(t.shape().len() as u8);
    for &e in t.shape() {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(out);
    }
    Ok(())
}

/// Parse one tensor of either precision from the reader.
pub(crate) fn read_tensor_any_from<R: Read>(r: &mut Counted<R>) -> Result<TensorAny> {
    let start = r.offset();
    let mut magic = [0u8; 4];
    r.read_exact_or(&mut magic, "DGT1 magic")?;
    if &magic != DGT1_MAGIC {
        return Err(Error::format_at(
            format!("bad DGT1 magic {magic:02x?}"),
            start,
        ));
    }
    let code = r.read_u8("dtype code")?;
    let dtype = DType::from_code(code)
        .ok_or_else(|| Error::format_at(format!("unknown dtype code {code}"), r.offset() - 1))?;
    let ndim = r.read_u8("rank")? as usize;
    let mut shape = Vec::with_capacity(ndim);
    for i in 0..ndim {
        let e = r.read_u32(&format!("extent {i}"))? as usize;
        if e == 0 {
            return Err(Error::format_at(format!("zero extent {i}"), r.offset() - 4));
        }
        shape.push(e);
    }
    let numel: usize = shape.iter().product();
    match dtype {
        DType::F32 => {
            let mut data = Vec::with_capacity(numel);
            let mut buf = [0u8; 4];
            for _ in 0..numel {
                r.read_exact_or(&mut buf, "f32 payload")?;
                data.push(f32::from_le_bytes(buf));
            }
            Ok(TensorAny::F32(Tensor::new(shape, data)?))
        }
        DType::F64 => {
            let mut data = Vec::with_capacity(numel);
            let mut buf = [0u8; 8];
            for _ in 0..numel {
                r.read_exact_or(&mut buf, "f64 payload")?;
                data.push(f64::from_le_bytes(buf));
            }
            Ok(TensorAny::F64(Tensor::new(shape, data)?))
        }
    }
}

/// Parse one tensor, requiring it to hold scalars of type `S`.
pub(crate) fn read_tensor_from<S: Scalar, R: Read>(r: &mut Counted<R>) -> Result<Tensor<S>> {
    let at = r.offset();
    match (read_tensor_any_from(r)?, S::DTYPE) {
        (TensorAny::F32(t), DType::F32) => Ok(t.cast::<S>()),
        (TensorAny::F64(t), DType::F64) => Ok(t.cast::<S>()),
        (got, want) => Err(Error::format_at(
            format!("tensor holds {}, expected {}", got.dtype(), want),
            at,
        )),
    }
}

/// Parse a standalone DGT1 byte buffer (must consume the whole buffer).
pub fn read_tensor<S: Scalar>(bytes: &[u8]) -> Result<Tensor<S>> {
    let mut r = Counted::new(bytes);
    let t = read_tensor_from::<S, _>(&mut r)?;
    r.expect_eof("tensor payload")?;
    Ok(t)
}

/// Write a tensor to a DGT1 file.
pub fn save_tensor<S: Scalar>(t: &Tensor<S>, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    write_tensor(t, &mut bytes)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Load a DGT1 file of either precision.
pub fn load_tensor(path: &Path) -> Result<TensorAny> {
    let f = std::fs::File::open(path)?;
    let mut r = Counted::new(std::io::BufReader::new(f));
    let t = read_tensor_any_from(&mut r)?;
    r.expect_eof("tensor payload")?;
    Ok(t)
}
