//! `PGNN` weights format: magic, version u32, layer count u32, then per
//! layer: kind u8, rank u8, dims u32 each, f32 parameters. All little-endian.

use std::fs;
use std::path::Path;

use super::layers::LayerKind;
use super::network::Network;
use super::tensor::Scalar;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PGNN";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode_weights<T: Scalar>(net: &Network<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for layer in net.layers() {
        let dims = layer.dims();
        out.push(layer.kind() as u8);
        out.push(dims.len() as u8);
        for d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for p in layer.params() {
            for v in &p.value {
                out.extend_from_slice(&(v.f64() as f32).to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        let s = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f32(&mut self) -> Option<f32> {
        self.take(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()))
    }
}

/// Loads parameters into `net`, whose architecture must match the file.
/// `net` is left unchanged on error.
pub fn decode_weights<T: Scalar>(net: &mut Network<T>, bytes: &[u8]) -> Result<()> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4) != Some(MAGIC.as_slice()) {
        return Err(Error::BadMagic);
    }
    let version = r.u32().ok_or(Error::BadMagic)?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let count = r.u32().ok_or(Error::Truncated { layer: 0 })? as usize;
    if count != net.layers().len() {
        return Err(Error::ArchitectureMismatch {
            layer: count.min(net.layers().len()),
            detail: format!("file has {count} layers, network has {}", net.layers().len()),
        });
    }
    let mut staged = net.clone();
    for (li, layer) in staged.layers_mut().iter_mut().enumerate() {
        let kind = r.u8().ok_or(Error::Truncated { layer: li })?;
        if LayerKind::from_u8(kind) != Some(layer.kind()) {
            return Err(Error::ArchitectureMismatch {
                layer: li,
                detail: format!("kind {kind} vs expected {:?}", layer.kind()),
            });
        }
        let rank = r.u8().ok_or(Error::Truncated { layer: li })? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32().ok_or(Error::Truncated { layer: li })? as usize);
        }
        if dims != layer.dims() {
            return Err(Error::ArchitectureMismatch {
                layer: li,
                detail: format!("dims {dims:?} vs expected {:?}", layer.dims()),
            });
        }
        for p in layer.params_mut() {
            for v in p.value.iter_mut() {
                let x = r.f32().ok_or(Error::Truncated { layer: li })?;
                *v = T::of(x as f64);
            }
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::ArchitectureMismatch {
            layer: net.layers().len(),
            detail: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    *net = staged;
    Ok(())
}

pub fn save_weights<T: Scalar>(net: &Network<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_weights(net)).map_err(|e| Error::io(path, e))
}

pub fn load_weights<T: Scalar>(net: &mut Network<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(net, &bytes)
}
