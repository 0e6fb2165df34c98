//! Network snapshot format.
//!
//! ```text
//! offset  size        field
//! 0       8           magic "QRLMLP01"
//! 8       4           u32 LE  layer count L
//! 12      4·(L+1)     u32 LE  layer sizes, input first
//! ..      L           u8      activation tags (0 identity, 1 relu, 2 tanh)
//! ..      8           u64 LE  parameter count P
//! ..      8·P         f64 LE  parameters in flat order
//! ```

use std::path::Path;

use super::{Activation, Mlp, NnError};

pub const MAGIC: &[u8; 8] = b"QRLMLP01";

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        if self.pos + n > self.buf.len() {
            return Err(NnError::Format(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Mlp {
    pub fn to_bytes(&self) -> Vec<u8> {
        let sizes = self.sizes();
        let mut out = Vec::with_capacity(8 + 4 + 4 * sizes.len() + self.layers.len() + 8 + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for s in sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        out.extend(self.layers.iter().map(|l| l.activation.tag()));
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, NnError> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(NnError::Format("bad magic".into()));
        }
        let n_layers = r.u32()? as usize;
        if n_layers == 0 || n_layers > 64 {
            return Err(NnError::Format(format!("implausible layer count {n_layers}")));
        }
        let sizes = (0..=n_layers).map(|_| r.u32().map(|s| s as usize)).collect::<Result<Vec<_>, _>>()?;
        let acts = r
            .take(n_layers)?
            .iter()
            .map(|&t| Activation::from_tag(t).ok_or_else(|| NnError::Format(format!("unknown activation tag {t}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let mut net = Mlp::new(&sizes, &acts)?;
        let count = r.u64()? as usize;
        if count != net.num_params() {
            return Err(NnError::Format(format!(
                "parameter count {count} does not match layer sizes ({})",
                net.num_params()
            )));
        }
        let raw = r.take(8 * count)?;
        for (p, chunk) in net.params_mut().iter_mut().zip(raw.chunks_exact(8)) {
            *p = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        if r.pos != buf.len() {
            return Err(NnError::Format("trailing bytes after parameters".into()));
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
