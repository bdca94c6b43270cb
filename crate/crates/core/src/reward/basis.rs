use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar basis functions mixed into a stage's reward uplift. Every member is
/// non-decreasing and concave on `[0, inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Tanh,
    /// `ln(1 + x)`, finite at zero.
    Ln1p,
    /// `x / sqrt(1 + x^2)`
    Algebraic,
    Sigmoid,
    Identity,
}

impl Basis {
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Basis::Tanh => x.tanh(),
            Basis::Ln1p => x.ln_1p(),
            Basis::Algebraic => algebraic(x),
            Basis::Sigmoid => sigmoid(x),
            Basis::Identity => x,
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Basis::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Basis::Ln1p => 1.0 / (1.0 + x),
            Basis::Algebraic => {
                let s = 1.0 + x * x;
                1.0 / (s * s.sqrt())
            }
            Basis::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Basis::Identity => 1.0,
        }
    }

    pub(crate) fn code(self) -> u32 {
        match self {
            Basis::Tanh => 0,
            Basis::Ln1p => 1,
            Basis::Algebraic => 2,
            Basis::Sigmoid => 3,
            Basis::Identity => 4,
        }
    }

    pub(crate) fn from_code(code: u32) -> Result<Self> {
        Ok(match code {
            0 => Basis::Tanh,
            1 => Basis::Ln1p,
            2 => Basis::Algebraic,
            3 => Basis::Sigmoid,
            4 => Basis::Identity,
            other => return Err(Error::Checkpoint(format!("unknown basis code {other}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSet(pub Vec<Basis>);

impl BasisSet {
    /// `{tanh, ln(1+x), x/sqrt(1+x^2), sigmoid, x}`
    pub fn standard() -> Self {
        BasisSet(vec![Basis::Tanh, Basis::Ln1p, Basis::Algebraic, Basis::Sigmoid, Basis::Identity])
    }

    /// Single linear basis; the mixture head degenerates to `v_1`.
    pub fn identity_only() -> Self {
        BasisSet(vec![Basis::Identity])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Basis> + '_ {
        self.0.iter().copied()
    }
}

/// `x / sqrt(1 + x^2)` evaluated as `1 / sqrt(1 + 1/x^2)`: every step rounds
/// monotonically, so the result never decreases as `x` grows. The direct form
/// can drop by an ulp near saturation.
#[inline]
fn algebraic(x: f64) -> f64 {
    let a = 1.0 / (1.0 + 1.0 / (x * x)).sqrt();
    if x < 0.0 { -a } else { a }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}
