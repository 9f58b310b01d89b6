//! Binary parameter blocks: `"GGAN"`, format version, the network spec as
//! JSON, then every tensor as little-endian `f64`s in slot order.

use std::io::{Read, Write};
use std::path::Path;

use super::{NetworkSpec, NnError, ParameterSet, Result, Tensor};

pub const MAGIC: &[u8; 4] = b"GGAN";
pub const FORMAT_VERSION: u32 = 1;

pub struct BinWriter<W: Write> {
    inner: W,
}

impl<W: Write> BinWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner }
    }

    pub fn into_inner(self) -> W {
        self.inner
    }

    pub fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.inner.write_all(b)?;
        Ok(())
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn u128(&mut self, v: u128) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    /// Length-prefixed byte string.
    pub fn blob(&mut self, b: &[u8]) -> Result<()> {
        self.u64(b.len() as u64)?;
        self.bytes(b)
    }

    pub fn tensor(&mut self, t: &Tensor) -> Result<()> {
        self.u64(t.shape().len() as u64)?;
        for &d in t.shape() {
            self.u64(d as u64)?;
        }
        for &v in t.data() {
            self.f64(v)?;
        }
        Ok(())
    }

    pub fn header(&mut self) -> Result<()> {
        self.bytes(MAGIC)?;
        self.u32(FORMAT_VERSION)
    }
}

pub struct BinReader<R: Read> {
    inner: R,
}

/// Upper bound on any length prefix; guards allocation on corrupted input.
const MAX_LEN: u64 = 1 << 32;

impl<R: Read> BinReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner }
    }

    pub fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(eof_is_corruption)?;
        Ok(buf)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    pub fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.bytes()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    pub fn length(&mut self) -> Result<usize> {
        let n = self.u64()?;
        if n > MAX_LEN {
            return Err(NnError::Corrupt(format!("implausible length {n}")));
        }
        Ok(n as usize)
    }

    pub fn blob(&mut self) -> Result<Vec<u8>> {
        let n = self.length()?;
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf).map_err(eof_is_corruption)?;
        Ok(buf)
    }

    pub fn tensor(&mut self) -> Result<Tensor> {
        let ndim = self.length()?;
        if ndim > 8 {
            return Err(NnError::Corrupt(format!("tensor with {ndim} dimensions")));
        }
        let shape = (0..ndim).map(|_| self.length()).collect::<Result<Vec<_>>>()?;
        let count = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let count = match count {
            Some(c) if (c as u64) <= MAX_LEN => c,
            _ => return Err(NnError::Corrupt(format!("tensor shape {shape:?} too large"))),
        };
        let data = (0..count).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Tensor::from_vec(&shape, data)
    }

    pub fn header(&mut self) -> Result<()> {
        let magic: [u8; 4] = self.bytes()?;
        if &magic != MAGIC {
            return Err(NnError::Corrupt("bad magic".into()));
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(NnError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        Ok(())
    }

    /// Fails unless the stream is exhausted.
    pub fn finish(mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe)? {
            0 => Ok(()),
            _ => Err(NnError::Corrupt("trailing bytes".into())),
        }
    }
}

fn eof_is_corruption(e: std::io::Error) -> NnError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        NnError::Corrupt("truncated file".into())
    } else {
        NnError::Io(e)
    }
}

/// Writes a self-describing parameter block.
pub fn write_parameters<W: Write>(w: &mut BinWriter<W>, spec: &NetworkSpec, params: &ParameterSet) -> Result<()> {
    params.check_matches(spec)?;
    w.header()?;
    w.blob(serde_json::to_string(spec)?.as_bytes())?;
    w.u64(params.tensors().count() as u64)?;
    for t in params.tensors() {
        w.tensor(t)?;
    }
    Ok(())
}

/// Reads a parameter block, returning its embedded spec. When `expected` is
/// given, a differing embedded spec is refused.
pub fn read_parameters<R: Read>(
    r: &mut BinReader<R>,
    expected: Option<&NetworkSpec>,
) -> Result<(NetworkSpec, ParameterSet)> {
    r.header()?;
    let spec: NetworkSpec = serde_json::from_slice(&r.blob()?)?;
    if let Some(expected) = expected {
        if *expected != spec {
            return Err(NnError::SpecMismatch);
        }
    }
    let mut params = ParameterSet::zeros(&spec)?;
    let count = r.length()?;
    if count != params.tensors().count() {
        return Err(NnError::Corrupt(format!("{count} tensors in block")));
    }
    for slot in params.tensors_mut() {
        let t = r.tensor()?;
        if t.shape() != slot.shape() {
            return Err(NnError::Corrupt("tensor shape differs from spec".into()));
        }
        *slot = t;
    }
    Ok((spec, params))
}

pub fn save_parameters(path: &Path, spec: &NetworkSpec, params: &ParameterSet) -> Result<()> {
    let mut w = BinWriter::new(Vec::new());
    write_parameters(&mut w, spec, params)?;
    std::fs::write(path, w.into_inner())?;
    Ok(())
}

pub fn load_parameters(path: &Path, expected: Option<&NetworkSpec>) -> Result<(NetworkSpec, ParameterSet)> {
    let bytes = std::fs::read(path)?;
    let mut r = BinReader::new(&bytes[..]);
    let out = read_parameters(&mut r, expected)?;
    r.finish()?;
    Ok(out)
}
