//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! magic      b"CARM"
//! version    u32 (= 1)
//! F H Q P K  u32 x 5      feature, hidden, groups, basis count, stages
//! seed       u64
//! E hidden   u32 x 2      embedding dim, FNN interior width
//! flags      u32          bit 0: recursive, bit 1: scale bits feed FNN_h
//! init_scale f64
//! basis      u32 x P      0 tanh, 1 ln(1+x), 2 x/sqrt(1+x^2), 3 sigmoid, 4 x
//! per stage  position u32, models u32, scale count u32, scales u32 x count
//! count      u64          number of parameters
//! params     f64 x count
//! ```
//!
//! Parameters are stored in layout order: `h_0`, then for each stage the model
//! embedding table, `FNN_0`, `FNN_1..FNN_P` and `FNN_h`, each net as
//! `W1 (row-major), b1, W2 (row-major), b2`.

use std::io::{Read, Write};
use std::path::Path;

use super::basis::{Basis, BasisSet};
use super::model::{RewardConfig, RewardModel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CARM";
const VERSION: u32 = 1;

impl RewardModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut out = Vec::with_capacity(128 + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        for v in [c.feature_dim, c.hidden_dim, c.groups, c.basis.len(), self.blocks.len()] {
            put_u32(&mut out, v as u32);
        }
        out.extend_from_slice(&c.seed.to_le_bytes());
        put_u32(&mut out, c.embed_dim as u32);
        put_u32(&mut out, c.fnn_hidden as u32);
        put_u32(&mut out, u32::from(c.recursive) | u32::from(c.scale_in_hidden) << 1);
        out.extend_from_slice(&c.init_scale.to_le_bytes());
        for b in c.basis.iter() {
            put_u32(&mut out, b.code());
        }
        for block in &self.blocks {
            put_u32(&mut out, block.position as u32);
            put_u32(&mut out, block.n_models as u32);
            let scales = block.encoder.scales();
            put_u32(&mut out, scales.len() as u32);
            for &s in scales {
                put_u32(&mut out, s);
            }
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let feature_dim = r.u32()? as usize;
        let hidden_dim = r.u32()? as usize;
        let groups = r.u32()? as usize;
        let p = r.u32()? as usize;
        let k = r.u32()? as usize;
        let seed = r.u64()?;
        let embed_dim = r.u32()? as usize;
        let fnn_hidden = r.u32()? as usize;
        let flags = r.u32()?;
        let init_scale = r.f64()?;
        let basis = (0..p).map(|_| r.u32().and_then(Basis::from_code)).collect::<Result<Vec<_>>>()?;
        let mut specs = Vec::with_capacity(k);
        for _ in 0..k {
            let position = r.u32()? as usize;
            let n_models = r.u32()? as usize;
            let n = r.u32()? as usize;
            let scales = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            specs.push((position, n_models, scales));
        }
        let config = RewardConfig {
            feature_dim,
            hidden_dim,
            embed_dim,
            fnn_hidden,
            groups,
            basis: BasisSet(basis),
            recursive: flags & 1 == 1,
            scale_in_hidden: flags & 2 == 2,
            init_scale,
            seed,
        };
        let mut model = RewardModel::build(config, &specs)?;
        let count = r.u64()? as usize;
        if count != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "header implies {} parameters but file stores {count}",
                model.params.len()
            )));
        }
        for p in model.params.iter_mut() {
            *p = r.f64()?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after parameters".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))?
            .read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let slice = self.bytes.get(self.pos..end).ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
