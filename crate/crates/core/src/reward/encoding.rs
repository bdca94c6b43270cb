//! Multi-hot item-scale encoding.
//!
//! The sorted scale set is cut into `Q` contiguous groups of (near) equal
//! count, extra members going to the lower groups. A scale in group `g`
//! (1-based) is encoded by setting the first `g` bits, so a larger scale never
//! carries fewer ones.

use serde::{Deserialize, Serialize};

use crate::chain::StageConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiHotScaleEncoding {
    pub bits: Vec<u8>,
    /// Smallest scale of each group.
    pub group_boundaries: Vec<u32>,
}

impl MultiHotScaleEncoding {
    /// Number of leading ones, i.e. the 1-based group index.
    pub fn group(&self) -> usize {
        self.bits.iter().take_while(|&&b| b == 1).count()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| f64::from(b)).collect()
    }
}

/// Per-stage scale encoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleEncoder {
    scales: Vec<u32>,
    q: usize,
}

impl ScaleEncoder {
    pub fn new(scales: Vec<u32>, q: usize) -> Result<Self> {
        if q == 0 {
            return Err(Error::Domain("Q must be at least 1".into()));
        }
        if q > scales.len() {
            return Err(Error::Domain(format!(
                "Q = {q} exceeds the {} scales in the set",
                scales.len()
            )));
        }
        if scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("scale set must be strictly increasing".into()));
        }
        Ok(Self { scales, q })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn scales(&self) -> &[u32] {
        &self.scales
    }

    fn group_of_position(&self, pos: usize) -> usize {
        pos * self.q / self.scales.len() + 1
    }

    /// 1-based group of `n`.
    pub fn group(&self, n: u32) -> Result<usize> {
        let pos = self
            .scales
            .binary_search(&n)
            .map_err(|_| Error::Domain(format!("item scale {n} is not in the scale set {:?}", self.scales)))?;
        Ok(self.group_of_position(pos))
    }

    pub fn boundaries(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.q);
        let mut last = 0;
        for (pos, &n) in self.scales.iter().enumerate() {
            let g = self.group_of_position(pos);
            if g != last {
                out.push(n);
                last = g;
            }
        }
        out
    }

    pub fn encode(&self, n: u32) -> Result<MultiHotScaleEncoding> {
        let g = self.group(n)?;
        Ok(MultiHotScaleEncoding { bits: prefix_bits(g, self.q), group_boundaries: self.boundaries() })
    }
}

pub(crate) fn prefix_bits(group: usize, q: usize) -> Vec<u8> {
    (0..q).map(|i| u8::from(i < group)).collect()
}

/// Encodes `n` against `stage`'s scale set split into `q` groups.
pub fn encode_scale(n: u32, stage: &StageConfig, q: usize) -> Result<MultiHotScaleEncoding> {
    ScaleEncoder::new(stage.scales.clone(), q)?.encode(n)
}
