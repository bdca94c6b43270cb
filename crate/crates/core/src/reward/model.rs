//! Recursive multi-stage reward estimator.
//!
//! Each modelled stage owns a block `g_k` that maps the previous hidden state,
//! the request context and the chosen model's embedding to
//!
//! ```text
//! w   = softmax(FNN_0(h, f, m))
//! v_p = sum_q softplus(FNN_p(h, f, m))_q * bits_q
//! dr  = sum_p w_p * phi_p(v_p)
//! h'  = FNN_h(h, f, m)
//! ```
//!
//! and the chain reward is the sum of the per-stage uplifts. Since every
//! `phi_p` is non-decreasing, `w` is a distribution and the softplus terms are
//! non-negative, setting more encoding bits never lowers `dr`; and since `h'`
//! does not see the bits, later stages are unaffected, so the chain reward is
//! non-decreasing in every stage's scale.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::basis::{sigmoid, softmax, softplus, Basis, BasisSet};
use super::encoding::{prefix_bits, MultiHotScaleEncoding, ScaleEncoder};
use super::mlp::{Layout, Mlp, MlpCache};
use crate::chain::{ActionChain, StageConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Context feature dimension F.
    pub feature_dim: usize,
    /// Hidden state dimension H.
    pub hidden_dim: usize,
    pub embed_dim: usize,
    /// Width of the interior layer of every FNN.
    pub fnn_hidden: usize,
    /// Scale groups Q per stage (clamped to the stage's scale count).
    pub groups: usize,
    pub basis: BasisSet,
    /// Thread the hidden state from stage to stage.
    pub recursive: bool,
    /// Also feed a stage's scale bits into `FNN_h`. A larger scale can then
    /// lower later stages' uplifts, so the reward loses monotonicity.
    pub scale_in_hidden: bool,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            feature_dim: 12,
            hidden_dim: 16,
            embed_dim: 8,
            fnn_hidden: 32,
            groups: 4,
            basis: BasisSet::standard(),
            recursive: true,
            scale_in_hidden: false,
            init_scale: 0.05,
            seed: 7,
        }
    }
}

/// The four reward-model ablations: recursion on/off crossed with the full
/// basis set versus a single linear basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardVariant {
    Full,
    RecursiveOnly,
    BasisOnly,
    Neither,
}

impl RewardVariant {
    pub const ALL: [RewardVariant; 4] =
        [RewardVariant::Full, RewardVariant::RecursiveOnly, RewardVariant::BasisOnly, RewardVariant::Neither];

    pub fn apply(self, mut config: RewardConfig) -> RewardConfig {
        let (recursive, multi_basis) = match self {
            RewardVariant::Full => (true, true),
            RewardVariant::RecursiveOnly => (true, false),
            RewardVariant::BasisOnly => (false, true),
            RewardVariant::Neither => (false, false),
        };
        config.recursive = recursive;
        config.basis = if multi_basis { BasisSet::standard() } else { BasisSet::identity_only() };
        config
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct StageBlock {
    /// Position of the modelled stage within a chain's action list.
    pub position: usize,
    pub n_models: usize,
    pub encoder: ScaleEncoder,
    pub emb: usize,
    pub fnn0: Mlp,
    pub fnn_p: Vec<Mlp>,
    pub fnn_h: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    pub(crate) config: RewardConfig,
    pub(crate) blocks: Vec<StageBlock>,
    pub(crate) h0: usize,
    pub(crate) params: Vec<f64>,
}

/// Per-stage values needed by the backward pass.
#[derive(Debug, Clone, Default)]
struct StageTrace {
    model: usize,
    bits: Vec<f64>,
    c0: MlpCache,
    w: Vec<f64>,
    cp: Vec<MlpCache>,
    u: Vec<Vec<f64>>,
    v: Vec<f64>,
    ch: Option<MlpCache>,
}

/// A labelled `(context, chain, reward)` sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: Vec<f64>,
    pub chain: usize,
    pub reward: f64,
    /// Calibration field (user-activity bucket in the simulator).
    pub field: usize,
}

impl RewardModel {
    /// Model over every non-fixed stage.
    pub fn new(config: RewardConfig, stages: &[StageConfig]) -> Result<Self> {
        let positions: Vec<usize> = stages.iter().enumerate().filter(|(_, s)| !s.fixed).map(|(i, _)| i).collect();
        Self::for_positions(config, stages, &positions)
    }

    /// Model over an explicit subset of chain positions, in cascade order.
    pub fn for_positions(config: RewardConfig, stages: &[StageConfig], positions: &[usize]) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::config("reward model needs at least one modelled stage"));
        }
        if positions.windows(2).any(|w| w[0] >= w[1]) || *positions.last().unwrap() >= stages.len() {
            return Err(Error::config(format!("invalid modelled stage positions {positions:?}")));
        }
        let specs: Vec<(usize, usize, Vec<u32>)> = positions
            .iter()
            .map(|&p| (p, stages[p].models.len(), stages[p].scales.clone()))
            .collect();
        let mut model = Self::build(config, &specs)?;
        model.initialize();
        Ok(model)
    }

    /// Allocates the parameter layout; parameters start at zero.
    pub(crate) fn build(config: RewardConfig, specs: &[(usize, usize, Vec<u32>)]) -> Result<Self> {
        if config.feature_dim == 0 || config.hidden_dim == 0 || config.embed_dim == 0 || config.fnn_hidden == 0 {
            return Err(Error::config("reward: all dimensions must be positive"));
        }
        if config.basis.is_empty() {
            return Err(Error::config("reward: basis set is empty"));
        }
        let h = config.hidden_dim;
        let d = h + config.feature_dim + config.embed_dim;
        let p = config.basis.len();
        let mut layout = Layout::default();
        let h0 = layout.take(h);
        let mut blocks = Vec::with_capacity(specs.len());
        for (position, n_models, scales) in specs {
            if *n_models == 0 {
                return Err(Error::config(format!("reward: stage at position {position} has no models")));
            }
            let q = config.groups.min(scales.len());
            let encoder = ScaleEncoder::new(scales.clone(), q)?;
            let emb = layout.take(n_models * config.embed_dim);
            let fnn0 = Mlp::new(&mut layout, d, config.fnn_hidden, p);
            let fnn_p = (0..p).map(|_| Mlp::new(&mut layout, d, config.fnn_hidden, q)).collect();
            let hidden_in = if config.scale_in_hidden { d + q } else { d };
            let fnn_h = Mlp::new(&mut layout, hidden_in, config.fnn_hidden, h);
            blocks.push(StageBlock { position: *position, n_models: *n_models, encoder, emb, fnn0, fnn_p, fnn_h });
        }
        Ok(Self { config, blocks, h0, params: vec![0.0; layout.len()] })
    }

    /// Uniform(-s, s) weights and embeddings, zero biases and zero `h_0`.
    fn initialize(&mut self) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let s = self.config.init_scale;
        let e = self.config.embed_dim;
        let params = &mut self.params;
        for block in &self.blocks {
            use rand::Rng;
            for v in &mut params[block.emb..block.emb + block.n_models * e] {
                *v = rng.random_range(-s..s);
            }
            block.fnn0.init(params, &mut rng, s);
            for net in &block.fnn_p {
                net.init(params, &mut rng, s);
            }
            block.fnn_h.init(params, &mut rng, s);
        }
    }

    pub fn config(&self) -> &RewardConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_stages(&self) -> usize {
        self.blocks.len()
    }

    /// Chain positions of the modelled stages.
    pub fn positions(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.position).collect()
    }

    pub fn encoder(&self, stage: usize) -> &ScaleEncoder {
        &self.blocks[stage].encoder
    }

    /// Analytic inference FLOPs for one chain: two per multiply-accumulate.
    pub fn inference_flops_per_chain(&self) -> f64 {
        let macs: usize = self
            .blocks
            .iter()
            .map(|b| b.fnn0.macs() + b.fnn_p.iter().map(Mlp::macs).sum::<usize>() + b.fnn_h.macs())
            .sum();
        2.0 * macs as f64
    }

    fn initial_hidden(&self) -> Vec<f64> {
        if self.config.recursive {
            self.params[self.h0..self.h0 + self.config.hidden_dim].to_vec()
        } else {
            vec![0.0; self.config.hidden_dim]
        }
    }

    fn check_features(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.config.feature_dim {
            return Err(Error::config(format!(
                "feature vector has dimension {} but the model expects {}",
                f.len(),
                self.config.feature_dim
            )));
        }
        Ok(())
    }

    fn inputs(&self, block: &StageBlock, h: &[f64], f: &[f64], model: usize) -> Vec<f64> {
        let e = self.config.embed_dim;
        let mut x = Vec::with_capacity(h.len() + f.len() + e);
        x.extend_from_slice(h);
        x.extend_from_slice(f);
        x.extend_from_slice(&self.params[block.emb + model * e..block.emb + (model + 1) * e]);
        x
    }

    /// Mixture weights and per-basis pre-activations for one block input.
    fn heads(&self, block: &StageBlock, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let p = self.config.basis.len();
        let mut z0 = vec![0.0; p];
        block.fnn0.forward(&self.params, x, &mut z0, None);
        let mut w = vec![0.0; p];
        softmax(&z0, &mut w);
        let u = block
            .fnn_p
            .iter()
            .map(|net| {
                let mut u = vec![0.0; net.output];
                net.forward(&self.params, x, &mut u, None);
                u
            })
            .collect();
        (w, u)
    }

    fn next_hidden(&self, block: &StageBlock, x: &[f64], bits: &[f64], cache: Option<&mut MlpCache>) -> Vec<f64> {
        let mut xin = Vec::with_capacity(x.len() + bits.len());
        xin.extend_from_slice(x);
        if self.config.scale_in_hidden {
            xin.extend_from_slice(bits);
        }
        let mut h = vec![0.0; self.config.hidden_dim];
        block.fnn_h.forward(&self.params, &xin, &mut h, cache);
        h
    }

    fn resolve(&self, block: &StageBlock, stage_no: usize, chain: &ActionChain) -> Result<(usize, usize)> {
        let action = chain.actions.get(block.position).ok_or_else(|| {
            Error::config(format!("chain {} has no action for stage position {}", chain.index, block.position))
        })?;
        if action.model >= block.n_models {
            return Err(Error::config(format!(
                "chain {} uses model #{} but reward stage {stage_no} knows {} models",
                chain.index, action.model, block.n_models
            )));
        }
        let g = block.encoder.group(action.item_scale)?;
        Ok((action.model, g))
    }

    /// One block evaluation `(dr, h) = g_k(h_prev, f, m, n)`.
    pub fn stage_forward(
        &self,
        stage: usize,
        h_prev: &[f64],
        f: &[f64],
        model: usize,
        encoding: &MultiHotScaleEncoding,
    ) -> Result<(f64, Vec<f64>)> {
        let block = self
            .blocks
            .get(stage)
            .ok_or_else(|| Error::config(format!("reward model has no stage {stage}")))?;
        self.check_features(f)?;
        if h_prev.len() != self.config.hidden_dim
            || model >= block.n_models
            || encoding.bits.len() != block.encoder.q()
        {
            return Err(Error::config(format!("stage_forward: inconsistent dimensions at stage {stage}")));
        }
        let x = self.inputs(block, h_prev, f, model);
        let (w, u) = self.heads(block, &x);
        let bits = encoding.to_f64();
        let (dr, _) = mixture_uplift(&self.config.basis, &w, &u, &bits);
        let h = self.next_hidden(block, &x, &bits, None);
        ensure_finite(block.position + 1, dr, &h)?;
        Ok((dr, h))
    }

    /// Per-stage uplifts `dr_k` for one chain.
    pub fn stage_uplifts(&self, f: &[f64], chain: &ActionChain) -> Result<Vec<f64>> {
        self.check_features(f)?;
        let mut h = self.initial_hidden();
        let mut out = Vec::with_capacity(self.blocks.len());
        for (k, block) in self.blocks.iter().enumerate() {
            let (model, g) = self.resolve(block, k, chain)?;
            let x = self.inputs(block, &h, f, model);
            let (w, u) = self.heads(block, &x);
            let bits = bits_f64(g, block.encoder.q());
            let (dr, _) = mixture_uplift(&self.config.basis, &w, &u, &bits);
            if self.config.recursive && k + 1 < self.blocks.len() {
                h = self.next_hidden(block, &x, &bits, None);
            }
            ensure_finite(block.position + 1, dr, &h)?;
            out.push(dr);
        }
        Ok(out)
    }

    /// Predicted reward `R = sum_k dr_k`.
    pub fn predict(&self, f: &[f64], chain: &ActionChain) -> Result<f64> {
        Ok(self.stage_uplifts(f, chain)?.into_iter().fold(0.0, |acc, dr| acc + dr))
    }

    /// Predicted rewards for a whole chain set. Blocks are evaluated once per
    /// distinct `(model, group)` prefix; results equal [`Self::predict`] bit for bit.
    pub fn predict_all(&self, f: &[f64], chains: &[ActionChain]) -> Result<Vec<f64>> {
        self.check_features(f)?;
        let mut keys = Vec::with_capacity(chains.len());
        for chain in chains {
            let mut key = Vec::with_capacity(self.blocks.len());
            for (k, block) in self.blocks.iter().enumerate() {
                key.push(self.resolve(block, k, chain)?);
            }
            keys.push(key);
        }
        let mut out = vec![0.0; chains.len()];
        let members: Vec<usize> = (0..chains.len()).collect();
        self.eval_subtree(f, &keys, members, 0, &self.initial_hidden(), 0.0, &mut out)?;
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn eval_subtree(
        &self,
        f: &[f64],
        keys: &[Vec<(usize, usize)>],
        members: Vec<usize>,
        depth: usize,
        h: &[f64],
        acc: f64,
        out: &mut [f64],
    ) -> Result<()> {
        if depth == self.blocks.len() {
            for m in members {
                out[m] = acc;
            }
            return Ok(());
        }
        let block = &self.blocks[depth];
        let mut by_model: BTreeMap<usize, BTreeMap<usize, Vec<usize>>> = BTreeMap::new();
        for m in members {
            let (model, g) = keys[m][depth];
            by_model.entry(model).or_default().entry(g).or_default().push(m);
        }
        for (model, groups) in by_model {
            let x = self.inputs(block, h, f, model);
            let (w, u) = self.heads(block, &x);
            for (g, ms) in groups {
                let bits = bits_f64(g, block.encoder.q());
                let (dr, _) = mixture_uplift(&self.config.basis, &w, &u, &bits);
                let next = if self.config.recursive && depth + 1 < self.blocks.len() {
                    self.next_hidden(block, &x, &bits, None)
                } else {
                    h.to_vec()
                };
                ensure_finite(block.position + 1, dr, &next)?;
                self.eval_subtree(f, keys, ms, depth + 1, &next, acc + dr, out)?;
            }
        }
        Ok(())
    }

    fn forward_trace(&self, f: &[f64], chain: &ActionChain) -> Result<(f64, Vec<StageTrace>)> {
        self.check_features(f)?;
        let mut h = self.initial_hidden();
        let mut total = 0.0;
        let mut traces = Vec::with_capacity(self.blocks.len());
        let p = self.config.basis.len();
        for (k, block) in self.blocks.iter().enumerate() {
            let (model, g) = self.resolve(block, k, chain)?;
            let x = self.inputs(block, &h, f, model);
            let mut st = StageTrace { model, bits: bits_f64(g, block.encoder.q()), ..Default::default() };
            let mut z0 = vec![0.0; p];
            block.fnn0.forward(&self.params, &x, &mut z0, Some(&mut st.c0));
            st.w = vec![0.0; p];
            softmax(&z0, &mut st.w);
            st.cp = vec![MlpCache::default(); p];
            st.u = Vec::with_capacity(p);
            for (net, cache) in block.fnn_p.iter().zip(st.cp.iter_mut()) {
                let mut u = vec![0.0; net.output];
                net.forward(&self.params, &x, &mut u, Some(cache));
                st.u.push(u);
            }
            let (dr, v) = mixture_uplift(&self.config.basis, &st.w, &st.u, &st.bits);
            st.v = v;
            if self.config.recursive && k + 1 < self.blocks.len() {
                let mut cache = MlpCache::default();
                h = self.next_hidden(block, &x, &st.bits, Some(&mut cache));
                st.ch = Some(cache);
            }
            ensure_finite(block.position + 1, dr, &h)?;
            total += dr;
            traces.push(st);
        }
        Ok((total, traces))
    }

    fn backward(&self, traces: &[StageTrace], d_r: f64, grad: &mut [f64]) {
        let hd = self.config.hidden_dim;
        let fd = self.config.feature_dim;
        let e = self.config.embed_dim;
        let basis = &self.config.basis.0;
        let mut gh = vec![0.0; hd];
        for (block, st) in self.blocks.iter().zip(traces).rev() {
            let mut dx = vec![0.0; hd + fd + e];

            let a: Vec<f64> = basis.iter().zip(&st.v).map(|(b, &v)| b.eval(v)).collect();
            let mean: f64 = st.w.iter().zip(&a).map(|(w, a)| w * a).sum();
            let dz0: Vec<f64> = st.w.iter().zip(&a).map(|(w, a)| d_r * w * (a - mean)).collect();
            block.fnn0.backward(&self.params, &st.c0, &dz0, grad, &mut dx);

            for (p, net) in block.fnn_p.iter().enumerate() {
                let dv = d_r * st.w[p] * basis[p].derivative(st.v[p]);
                let du: Vec<f64> = st.u[p].iter().zip(&st.bits).map(|(&u, &b)| dv * b * sigmoid(u)).collect();
                net.backward(&self.params, &st.cp[p], &du, grad, &mut dx);
            }

            if let Some(cache) = &st.ch {
                let mut dxh = vec![0.0; block.fnn_h.input];
                block.fnn_h.backward(&self.params, cache, &gh, grad, &mut dxh);
                for (d, g) in dx.iter_mut().zip(&dxh) {
                    *d += g;
                }
            }

            let emb = block.emb + st.model * e;
            for (g, d) in grad[emb..emb + e].iter_mut().zip(&dx[hd + fd..]) {
                *g += d;
            }
            gh.copy_from_slice(&dx[..hd]);
        }
        if self.config.recursive {
            for (g, d) in grad[self.h0..self.h0 + hd].iter_mut().zip(&gh) {
                *g += d;
            }
        }
    }

    /// Mean squared error over `examples` and its gradient w.r.t. every parameter.
    pub fn loss_and_gradient(&self, examples: &[&Example], chains: &[ActionChain]) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.accumulate_gradient(examples, chains, &mut grad)?;
        Ok((loss, grad))
    }

    pub(crate) fn accumulate_gradient(
        &self,
        examples: &[&Example],
        chains: &[ActionChain],
        grad: &mut [f64],
    ) -> Result<f64> {
        if examples.is_empty() {
            return Ok(0.0);
        }
        let n = examples.len() as f64;
        let mut loss = 0.0;
        for ex in examples {
            let chain = chain_ref(chains, ex.chain)?;
            let (r, traces) = self.forward_trace(&ex.features, chain)?;
            let resid = r - ex.reward;
            loss += resid * resid;
            self.backward(&traces, 2.0 * resid / n, grad);
        }
        Ok(loss / n)
    }

    /// Mean squared error over a dataset.
    pub fn mse(&self, examples: &[Example], chains: &[ActionChain]) -> Result<f64> {
        if examples.is_empty() {
            return Ok(0.0);
        }
        let mut loss = 0.0;
        for ex in examples {
            let r = self.predict(&ex.features, chain_ref(chains, ex.chain)?)?;
            loss += (r - ex.reward) * (r - ex.reward);
        }
        Ok(loss / examples.len() as f64)
    }
}

pub(crate) fn chain_ref(chains: &[ActionChain], index: usize) -> Result<&ActionChain> {
    chains
        .get(index)
        .ok_or_else(|| Error::config(format!("example references chain {index} outside the chain set")))
}

fn bits_f64(group: usize, q: usize) -> Vec<f64> {
    prefix_bits(group, q).into_iter().map(f64::from).collect()
}

fn ensure_finite(stage_index: usize, dr: f64, h: &[f64]) -> Result<()> {
    if !dr.is_finite() {
        return Err(Error::Numeric { stage: stage_index, message: format!("reward uplift is {dr}") });
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric { stage: stage_index, message: "hidden state is not finite".into() });
    }
    Ok(())
}

/// Mixture head: `v_p = sum_q softplus(u_pq) * bits_q`, `dr = sum_p w_p phi_p(v_p)`.
/// Returns `(dr, v)`.
pub fn mixture_uplift(basis: &BasisSet, w: &[f64], pre: &[Vec<f64>], bits: &[f64]) -> (f64, Vec<f64>) {
    let v: Vec<f64> = pre
        .iter()
        .map(|u| u.iter().zip(bits).fold(0.0, |acc, (&u, &b)| acc + softplus(u) * b))
        .collect();
    let dr = basis.iter().zip(w).zip(&v).fold(0.0, |acc, ((b, &w), &v)| acc + w * Basis::eval(b, v));
    (dr, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{default_stages, generate_chains};

    fn features(seed: u64) -> Vec<f64> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_heads_give_ln2_per_set_bit() {
        let basis = BasisSet::standard();
        let w = vec![0.2; 5];
        let pre = vec![vec![0.0; 4]; 5];
        let (_, v) = mixture_uplift(&basis, &w, &pre, &[1.0, 0.0, 0.0, 0.0]);
        for vp in v {
            assert!((vp - std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_basis_passes_through() {
        let basis = BasisSet::standard();
        let w = [0.0, 0.0, 0.0, 0.0, 1.0];
        // softplus(u) = 3.0 on a single set bit.
        let u = (3.0f64.exp() - 1.0).ln();
        let pre = vec![vec![u, 0.0]; 5];
        let (dr, v) = mixture_uplift(&basis, &w, &pre, &[1.0, 0.0]);
        assert!((v[4] - 3.0).abs() < 1e-12);
        assert!((dr - 3.0).abs() < 1e-12);
    }

    #[test]
    fn all_ones_dominates_prefix() {
        let stages = default_stages();
        let model = RewardModel::new(RewardConfig::default(), &stages).unwrap();
        let f = features(1);
        let h = vec![0.1; 16];
        let q = model.encoder(1).q();
        let low = MultiHotScaleEncoding { bits: prefix_bits(1, q), group_boundaries: vec![] };
        let high = MultiHotScaleEncoding { bits: prefix_bits(q, q), group_boundaries: vec![] };
        let (a, _) = model.stage_forward(1, &h, &f, 1, &low).unwrap();
        let (b, _) = model.stage_forward(1, &h, &f, 1, &high).unwrap();
        assert!(b >= a);
    }

    #[test]
    fn single_stage_reward_is_its_uplift() {
        let stages = default_stages();
        let model = RewardModel::for_positions(RewardConfig::default(), &stages, &[2]).unwrap();
        let chains = generate_chains(&stages).unwrap();
        let f = features(2);
        let r = model.predict(&f, &chains[5]).unwrap();
        let ups = model.stage_uplifts(&f, &chains[5]).unwrap();
        assert_eq!(ups.len(), 1);
        assert_eq!(r, ups[0]);
    }

    #[test]
    fn predict_all_matches_predict_bitwise() {
        let stages = default_stages();
        let chains = generate_chains(&stages).unwrap();
        for variant in RewardVariant::ALL {
            let model = RewardModel::new(variant.apply(RewardConfig::default()), &stages).unwrap();
            let f = features(3);
            let all = model.predict_all(&f, &chains).unwrap();
            for (c, r) in chains.iter().zip(&all) {
                assert_eq!(model.predict(&f, c).unwrap().to_bits(), r.to_bits());
            }
        }
    }

    #[test]
    fn mismatched_inputs_are_config_errors() {
        let stages = default_stages();
        let chains = generate_chains(&stages).unwrap();
        let model = RewardModel::new(RewardConfig::default(), &stages).unwrap();
        assert!(matches!(model.predict(&[0.0; 3], &chains[0]), Err(Error::Config(_))));
        let mut short = chains[0].clone();
        short.actions.truncate(2);
        assert!(matches!(model.predict(&features(0), &short), Err(Error::Config(_))));
    }

    #[test]
    fn non_finite_features_surface_as_numeric_error() {
        let stages = default_stages();
        let chains = generate_chains(&stages).unwrap();
        let model = RewardModel::new(RewardConfig::default(), &stages).unwrap();
        let mut f = features(4);
        f[0] = f64::NAN;
        assert!(matches!(model.predict(&f, &chains[0]), Err(Error::Numeric { stage: 2, .. })));
    }

    #[test]
    fn identical_context_identical_rewards() {
        let stages = default_stages();
        let chains = generate_chains(&stages).unwrap();
        let model = RewardModel::new(RewardConfig::default(), &stages).unwrap();
        let a = model.predict_all(&features(9), &chains).unwrap();
        let b = model.predict_all(&features(9), &chains).unwrap();
        assert_eq!(a, b);
    }
}
