//! Two-layer feedforward nets over a shared flat parameter buffer.

use rand::Rng;

const LEAK: f64 = 0.01;

/// Hands out contiguous ranges of the flat parameter vector.
#[derive(Debug, Default)]
pub(crate) struct Layout {
    len: usize,
}

impl Layout {
    pub fn take(&mut self, n: usize) -> usize {
        let off = self.len;
        self.len += n;
        off
    }

    pub fn len(&self) -> usize {
        self.len
    }
}

/// `out = W2 * leaky(W1 * x + b1) + b2`, weights stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Mlp {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct MlpCache {
    pub x: Vec<f64>,
    pub pre: Vec<f64>,
}

impl Mlp {
    pub fn new(layout: &mut Layout, input: usize, hidden: usize, output: usize) -> Self {
        let w1 = layout.take(hidden * input);
        let b1 = layout.take(hidden);
        let w2 = layout.take(output * hidden);
        let b2 = layout.take(output);
        Self { input, hidden, output, w1, b1, w2, b2 }
    }

    pub fn init(&self, params: &mut [f64], rng: &mut impl Rng, scale: f64) {
        for w in &mut params[self.w1..self.w1 + self.hidden * self.input] {
            *w = rng.random_range(-scale..scale);
        }
        params[self.b1..self.b1 + self.hidden].fill(0.0);
        for w in &mut params[self.w2..self.w2 + self.output * self.hidden] {
            *w = rng.random_range(-scale..scale);
        }
        params[self.b2..self.b2 + self.output].fill(0.0);
    }

    /// Multiply-accumulate count of one forward pass.
    pub fn macs(&self) -> usize {
        self.hidden * self.input + self.output * self.hidden
    }

    pub fn forward(&self, params: &[f64], x: &[f64], out: &mut [f64], cache: Option<&mut MlpCache>) {
        debug_assert_eq!(x.len(), self.input);
        debug_assert_eq!(out.len(), self.output);
        let mut pre = vec![0.0; self.hidden];
        let w1 = &params[self.w1..self.w1 + self.hidden * self.input];
        let b1 = &params[self.b1..self.b1 + self.hidden];
        for (j, p) in pre.iter_mut().enumerate() {
            let row = &w1[j * self.input..(j + 1) * self.input];
            *p = b1[j] + dot(row, x);
        }
        let w2 = &params[self.w2..self.w2 + self.output * self.hidden];
        let b2 = &params[self.b2..self.b2 + self.output];
        let act: Vec<f64> = pre.iter().map(|&a| leaky(a)).collect();
        for (i, o) in out.iter_mut().enumerate() {
            *o = b2[i] + dot(&w2[i * self.hidden..(i + 1) * self.hidden], &act);
        }
        if let Some(cache) = cache {
            cache.x.clear();
            cache.x.extend_from_slice(x);
            cache.pre = pre;
        }
    }

    /// Accumulates parameter gradients into `grad` and input gradients into `dx`.
    pub fn backward(&self, params: &[f64], cache: &MlpCache, dout: &[f64], grad: &mut [f64], dx: &mut [f64]) {
        debug_assert_eq!(dout.len(), self.output);
        let act: Vec<f64> = cache.pre.iter().map(|&a| leaky(a)).collect();
        let w2 = &params[self.w2..self.w2 + self.output * self.hidden];
        let mut dact = vec![0.0; self.hidden];
        for (i, &d) in dout.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad[self.b2 + i] += d;
            let gw = &mut grad[self.w2 + i * self.hidden..self.w2 + (i + 1) * self.hidden];
            for (g, &a) in gw.iter_mut().zip(&act) {
                *g += d * a;
            }
            for (da, &w) in dact.iter_mut().zip(&w2[i * self.hidden..(i + 1) * self.hidden]) {
                *da += d * w;
            }
        }
        let w1 = &params[self.w1..self.w1 + self.hidden * self.input];
        for j in 0..self.hidden {
            let dpre = dact[j] * leaky_slope(cache.pre[j]);
            if dpre == 0.0 {
                continue;
            }
            grad[self.b1 + j] += dpre;
            let gw = &mut grad[self.w1 + j * self.input..self.w1 + (j + 1) * self.input];
            for (g, &xi) in gw.iter_mut().zip(&cache.x) {
                *g += dpre * xi;
            }
            for (d, &w) in dx.iter_mut().zip(&w1[j * self.input..(j + 1) * self.input]) {
                *d += dpre * w;
            }
        }
    }
}

#[inline]
fn leaky(a: f64) -> f64 {
    if a > 0.0 {
        a
    } else {
        LEAK * a
    }
}

#[inline]
fn leaky_slope(a: f64) -> f64 {
    if a > 0.0 {
        1.0
    } else {
        LEAK
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gradient_matches_finite_differences() {
        let mut layout = Layout::default();
        let net = Mlp::new(&mut layout, 4, 6, 3);
        let mut params = vec![0.0; layout.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        net.init(&mut params, &mut rng, 0.8);
        for p in params.iter_mut() {
            *p += rng.random_range(-0.1..0.1);
        }
        let x = [0.3, -1.2, 0.7, 2.0];
        let upstream = [1.0, -0.5, 0.25];
        let loss = |p: &[f64]| {
            let mut out = [0.0; 3];
            net.forward(p, &x, &mut out, None);
            out.iter().zip(&upstream).map(|(o, u)| o * u).sum::<f64>()
        };

        let mut cache = MlpCache::default();
        let mut out = [0.0; 3];
        net.forward(&params, &x, &mut out, Some(&mut cache));
        let mut grad = vec![0.0; params.len()];
        let mut dx = vec![0.0; 4];
        net.backward(&params, &cache, &upstream, &mut grad, &mut dx);

        let eps = 1e-6;
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] += eps;
            let up = loss(&p);
            p[i] -= 2.0 * eps;
            let down = loss(&p);
            let fd = (up - down) / (2.0 * eps);
            assert!((fd - grad[i]).abs() < 1e-6, "param {i}: {fd} vs {}", grad[i]);
        }
    }
}
