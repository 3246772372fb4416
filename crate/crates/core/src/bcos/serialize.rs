//! Binary model container.
//!
//! All integers are little-endian `u32`, all reals little-endian IEEE-754
//! `f64`:
//!
//! ```text
//! magic          8 bytes  "BCOSNET\0"
//! format_version u32      currently 1
//! layer_count    u32      L
//! layer_dims     (L+1) × u32, input width first
//! exponents      L × f64, B of each layer
//! weights        for each layer: out × in f64, row-major
//! ```
//!
//! Nothing else is stored; there are no bias terms to store.

use std::io::{Read, Write};

use super::{BcosLayer, BcosNetwork};
use crate::error::{Error, Result};
use crate::numerics::Mat64;

pub const MAGIC: &[u8; 8] = b"BCOSNET\0";
pub const FORMAT_VERSION: u32 = 1;

impl BcosNetwork {
    pub fn to_bytes(&self) -> Vec<u8> {
        let dims = self.dims();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.depth() as u32).to_le_bytes());
        for d in &dims {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for layer in self.layers() {
            out.extend_from_slice(&layer.b().to_le_bytes());
        }
        for layer in self.layers() {
            for w in layer.weights().as_slice() {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(cur.err("bad magic"));
        }
        let version = cur.u32()?;
        if version != FORMAT_VERSION {
            return Err(cur.err(&format!("unsupported format version {version}")));
        }
        let layers = cur.u32()? as usize;
        if layers == 0 || layers > 1024 {
            return Err(cur.err(&format!("implausible layer count {layers}")));
        }
        let dims = (0..=layers)
            .map(|_| cur.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let bs = (0..layers).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        let mut built = Vec::with_capacity(layers);
        for (l, b) in bs.into_iter().enumerate() {
            let (rows, cols) = (dims[l + 1], dims[l]);
            let n = rows
                .checked_mul(cols)
                .filter(|n| n * 8 <= bytes.len())
                .ok_or_else(|| cur.err("layer too large for payload"))?;
            let data = (0..n).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
            built.push(BcosLayer::new(Mat64::new(rows, cols, data)?, b)?);
        }
        if cur.pos != bytes.len() {
            return Err(cur.err(&format!(
                "{} trailing bytes after model payload",
                bytes.len() - cur.pos
            )));
        }
        BcosNetwork::new(built)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::parse("<model>", format!("{msg} (byte offset {})", self.pos))
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.err("truncated model"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

pub fn write_model(net: &BcosNetwork, path: &std::path::Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&net.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &std::path::Path) -> Result<BcosNetwork> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    BcosNetwork::from_bytes(&bytes).map_err(|e| match e {
        Error::Parse { message, .. } => Error::parse(path, message),
        other => other,
    })
}
