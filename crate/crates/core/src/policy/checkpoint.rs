//! Versioned flat-binary parameter checkpoints.
//!
//! Layout (all integers in the byte order named by the endian tag):
//!
//! ```text
//! magic      4 bytes  "MAPW"
//! endian     1 byte   'L' little / 'B' big
//! reserved   3 bytes  zero
//! version    u32      1
//! blocks     u32      number of blocks that follow
//! per block:
//!   name_len u16, name (UTF-8)
//!   ndim     u8, dims u32 × ndim
//!   values   f64 × product(dims)
//! ```
//!
//! The last block is `meta.input_shape` holding `[rows, cols]` as f64.

use std::path::Path;

use crate::error::{Error, Result};
use crate::policy::network::PolicyNetwork;

pub const MAGIC: &[u8; 4] = b"MAPW";
pub const VERSION: u32 = 1;
const META_SHAPE: &str = "meta.input_shape";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

impl Endian {
    pub fn native() -> Self {
        if cfg!(target_endian = "big") {
            Endian::Big
        } else {
            Endian::Little
        }
    }

    fn tag(self) -> u8 {
        match self {
            Endian::Little => b'L',
            Endian::Big => b'B',
        }
    }
}

struct Writer {
    buf: Vec<u8>,
    endian: Endian,
}

macro_rules! put {
    ($self:ident, $v:expr) => {
        match $self.endian {
            Endian::Little => $self.buf.extend_from_slice(&$v.to_le_bytes()),
            Endian::Big => $self.buf.extend_from_slice(&$v.to_be_bytes()),
        }
    };
}

impl Writer {
    fn block(&mut self, name: &str, shape: &[usize], values: &[f64]) {
        put!(self, name.len() as u16);
        self.buf.extend_from_slice(name.as_bytes());
        self.buf.push(shape.len() as u8);
        for &d in shape {
            put!(self, d as u32);
        }
        for &v in values {
            put!(self, v);
        }
    }
}

pub fn to_bytes(net: &PolicyNetwork, endian: Endian) -> Vec<u8> {
    let mut w = Writer {
        buf: Vec::with_capacity(16 + net.param_count() * 8 + 512),
        endian,
    };
    w.buf.extend_from_slice(MAGIC);
    w.buf.push(endian.tag());
    w.buf.extend_from_slice(&[0; 3]);
    put!(w, VERSION);
    put!(w, (net.blocks().len() + 1) as u32);
    for b in net.blocks() {
        w.block(b.name, &b.shape, &net.params()[b.range()]);
    }
    let (rows, cols) = net.input_shape();
    w.block(META_SHAPE, &[2], &[rows as f64, cols as f64]);
    w.buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    endian: Endian,
}

macro_rules! take {
    ($self:ident, $t:ty) => {{
        const N: usize = std::mem::size_of::<$t>();
        let raw: [u8; N] = $self.take(N)?.try_into().expect("length checked");
        match $self.endian {
            Endian::Little => <$t>::from_le_bytes(raw),
            Endian::Big => <$t>::from_be_bytes(raw),
        }
    }};
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Checkpoint(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}

struct RawBlock {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

pub fn from_bytes(bytes: &[u8]) -> Result<PolicyNetwork> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::Checkpoint("missing MAPW magic".into()));
    }
    let endian = match bytes[4] {
        b'L' => Endian::Little,
        b'B' => Endian::Big,
        t => return Err(Error::Checkpoint(format!("unknown endian tag {t:#04x}"))),
    };
    let mut r = Reader {
        bytes,
        pos: 8,
        endian,
    };
    let version = take!(r, u32);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = take!(r, u32) as usize;
    let mut blocks = Vec::with_capacity(count);
    for _ in 0..count {
        let len = take!(r, u16) as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("block name is not UTF-8".into()))?
            .to_string();
        let ndim = r.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(take!(r, u32) as usize);
        }
        let n: usize = shape.iter().product();
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(take!(r, f64));
        }
        blocks.push(RawBlock {
            name,
            shape,
            values,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }

    let meta = blocks
        .iter()
        .find(|b| b.name == META_SHAPE)
        .ok_or_else(|| Error::Checkpoint(format!("missing `{META_SHAPE}` block")))?;
    let [rows, cols] = meta.values[..] else {
        return Err(Error::Checkpoint(format!(
            "`{META_SHAPE}` must hold two values"
        )));
    };
    let mut net = PolicyNetwork::zeros(rows as usize, cols as usize)?;
    let expected = net.blocks().to_vec();
    for want in &expected {
        let got = blocks
            .iter()
            .find(|b| b.name == want.name)
            .ok_or_else(|| Error::Checkpoint(format!("missing block `{}`", want.name)))?;
        if got.shape != want.shape {
            return Err(Error::Checkpoint(format!(
                "block `{}` has shape {:?}, expected {:?}",
                want.name, got.shape, want.shape
            )));
        }
        net.params_mut()[want.range()].copy_from_slice(&got.values);
    }
    Ok(net)
}

pub fn save(net: &PolicyNetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(net, Endian::native())).map_err(|e| Error::file(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<PolicyNetwork> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    from_bytes(&bytes)
}
