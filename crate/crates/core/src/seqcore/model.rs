use serde::{Deserialize, Serialize};

use super::layout::{InitKind, Layout, Ranges};
use super::ops::{
    all_finite, attention_backward, attention_forward, layernorm_backward, layernorm_forward,
    linear_backward, linear_forward,
};
use super::{Result, SeqError};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Emits a `d_s` vector (a normalized state delta) per action token.
    State,
    /// Emits one scalar per action token.
    Reward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_s: usize,
    pub d_a: usize,
    pub embed_dim: usize,
    pub n_layer: usize,
    pub n_head: usize,
    pub dropout: f64,
    /// Size of the learned step-embedding table; step indices must be below it.
    pub max_step: usize,
    /// Maximum number of `(state, action)` steps in a window.
    pub context_len: usize,
    pub head_kind: HeadKind,
}

impl ModelConfig {
    /// Full-size architecture: 128-wide, 10 blocks, 4 heads, 20-step context.
    pub fn full_scale(d_s: usize, d_a: usize, max_step: usize, head_kind: HeadKind) -> Self {
        Self {
            d_s,
            d_a,
            embed_dim: 128,
            n_layer: 10,
            n_head: 4,
            dropout: 0.1,
            max_step,
            context_len: 20,
            head_kind,
        }
    }

    /// Laptop-CPU architecture used by the default presets.
    pub fn desk_scale(d_s: usize, d_a: usize, max_step: usize, head_kind: HeadKind) -> Self {
        Self {
            d_s,
            d_a,
            embed_dim: 16,
            n_layer: 2,
            n_head: 2,
            dropout: 0.1,
            max_step,
            context_len: 4,
            head_kind,
        }
    }

    pub fn ff_dim(&self) -> usize {
        4 * self.embed_dim
    }

    pub fn out_dim(&self) -> usize {
        match self.head_kind {
            HeadKind::State => self.d_s,
            HeadKind::Reward => 1,
        }
    }

    pub fn with_head(&self, head_kind: HeadKind) -> Self {
        Self { head_kind, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_s", self.d_s),
            ("d_a", self.d_a),
            ("embed_dim", self.embed_dim),
            ("n_layer", self.n_layer),
            ("n_head", self.n_head),
            ("max_step", self.max_step),
            ("context_len", self.context_len),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(SeqError::Config(format!("{name} must be positive")));
        }
        if self.embed_dim % self.n_head != 0 {
            return Err(SeqError::Config("embed_dim must be divisible by n_head".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(SeqError::Config("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Interleaved `s_1, a_1, ..., s_n, a_n` tokens with their episode step
/// indices. Shorter histories are left-padded with zero steps marked invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenWindow {
    pub d_s: usize,
    pub d_a: usize,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub steps: Vec<usize>,
    pub valid: Vec<bool>,
}

impl TokenWindow {
    /// A fully valid window; `states` is `n x d_s`, `actions` is `n x d_a`.
    pub fn new(
        d_s: usize,
        d_a: usize,
        states: Vec<f64>,
        actions: Vec<f64>,
        steps: Vec<usize>,
    ) -> Result<Self> {
        let n = steps.len();
        if n == 0 {
            return Err(SeqError::InvalidWindow("window has no steps".into()));
        }
        if states.len() != n * d_s || actions.len() != n * d_a {
            return Err(SeqError::Shape(format!(
                "{n} steps need {} state and {} action values, got {} and {}",
                n * d_s,
                n * d_a,
                states.len(),
                actions.len()
            )));
        }
        Ok(Self { d_s, d_a, states, actions, steps, valid: vec![true; n] })
    }

    /// Left-pads to `len` slots with zero tokens marked invalid.
    pub fn left_padded(mut self, len: usize) -> Result<Self> {
        let n = self.len();
        if n > len {
            return Err(SeqError::WindowTooLong { got: n, max: len });
        }
        let pad = len - n;
        let mut states = vec![0.0; pad * self.d_s];
        states.extend_from_slice(&self.states);
        let mut actions = vec![0.0; pad * self.d_a];
        actions.extend_from_slice(&self.actions);
        let mut steps = vec![0; pad];
        steps.extend_from_slice(&self.steps);
        let mut valid = vec![false; pad];
        valid.extend_from_slice(&self.valid);
        self.states = states;
        self.actions = actions;
        self.steps = steps;
        self.valid = valid;
        Ok(self)
    }

    /// Number of step slots, padding included.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn first_valid(&self) -> usize {
        self.valid.iter().position(|&v| v).unwrap_or(self.len())
    }

    pub fn state(&self, slot: usize) -> &[f64] {
        &self.states[slot * self.d_s..(slot + 1) * self.d_s]
    }

    pub fn action(&self, slot: usize) -> &[f64] {
        &self.actions[slot * self.d_a..(slot + 1) * self.d_a]
    }

    fn check(&self, cfg: &ModelConfig) -> Result<()> {
        if self.len() > cfg.context_len {
            return Err(SeqError::WindowTooLong { got: self.len(), max: cfg.context_len });
        }
        if self.d_s != cfg.d_s || self.d_a != cfg.d_a {
            return Err(SeqError::Shape("window dims differ from model dims".into()));
        }
        if self.valid.len() != self.len()
            || self.states.len() != self.len() * self.d_s
            || self.actions.len() != self.len() * self.d_a
        {
            return Err(SeqError::Shape("window buffers have inconsistent lengths".into()));
        }
        let first = self.first_valid();
        if first == self.len() {
            return Err(SeqError::InvalidWindow("window has no valid steps".into()));
        }
        if !self.valid[first..].iter().all(|&v| v) {
            return Err(SeqError::InvalidWindow("padding must precede all valid steps".into()));
        }
        if let Some(&t) = self.steps[first..].iter().find(|&&t| t >= cfg.max_step) {
            return Err(SeqError::InvalidWindow(format!(
                "step index {t} exceeds step table of size {}",
                cfg.max_step
            )));
        }
        Ok(())
    }
}

/// One output row per window slot, read at the slot's action token.
/// Padded slots hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl Predictions {
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, slot: usize) -> &[f64] {
        &self.values[slot * self.dim..(slot + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.row(self.len() - 1)
    }
}

/// A training example: per-slot targets and the slots that contribute loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub window: TokenWindow,
    pub target: Vec<f64>,
    pub mask: Vec<bool>,
}

/// Mean squared error over the components of unmasked rows.
pub fn loss_mse(pred: &[f64], target: &[f64], mask: &[bool], dim: usize) -> Result<f64> {
    if pred.len() != target.len() || pred.len() != mask.len() * dim {
        return Err(SeqError::Shape(format!(
            "pred {} / target {} / mask {} x dim {dim}",
            pred.len(),
            target.len(),
            mask.len()
        )));
    }
    let mut count = 0usize;
    let mut sum = 0.0;
    for (r, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        count += 1;
        for c in r * dim..(r + 1) * dim {
            let e = pred[c] - target[c];
            sum += e * e;
        }
    }
    if count == 0 {
        return Err(SeqError::EmptyMask);
    }
    Ok(sum / (count * dim) as f64)
}

#[derive(Debug, Clone)]
pub struct SequenceModel {
    pub config: ModelConfig,
    pub params: Vec<f64>,
    layout: Layout,
    ranges: Ranges,
}

impl PartialEq for SequenceModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

struct BlockCache {
    x_in: Vec<f64>,
    ln1: Vec<f64>,
    ln1_mean: Vec<f64>,
    ln1_rstd: Vec<f64>,
    qkv: Vec<f64>,
    probs: Vec<f64>,
    att: Vec<f64>,
    drop1: Option<Vec<f64>>,
    x_mid: Vec<f64>,
    ln2: Vec<f64>,
    ln2_mean: Vec<f64>,
    ln2_rstd: Vec<f64>,
    fc_pre: Vec<f64>,
    fc_act: Vec<f64>,
    drop2: Option<Vec<f64>>,
}

struct Cache {
    first: usize,
    steps: usize,
    emb_pre: Vec<f64>,
    emb_mean: Vec<f64>,
    emb_rstd: Vec<f64>,
    emb_drop: Option<Vec<f64>>,
    blocks: Vec<BlockCache>,
    x_final: Vec<f64>,
    lnf_mean: Vec<f64>,
    lnf_rstd: Vec<f64>,
    head_in: Vec<f64>,
    out: Vec<f64>,
}

fn dropout_mask(len: usize, rate: f64, rng: &mut Option<&mut SplitMix64>) -> Option<Vec<f64>> {
    let rng = rng.as_deref_mut()?;
    if rate == 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some((0..len).map(|_| if rng.unit() < rate { 0.0 } else { keep }).collect())
}

fn apply_mask(x: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        x.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
    }
}

fn check_finite(xs: &[f64], layer: impl FnOnce() -> String) -> Result<()> {
    if all_finite(xs) {
        Ok(())
    } else {
        Err(SeqError::NonFinite { layer: layer() })
    }
}

impl SequenceModel {
    /// Gaussian(0, 0.02) weights, zero biases, unit layer-norm gains.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::with_init_std(config, seed, 0.02)
    }

    pub fn with_init_std(config: ModelConfig, seed: u64, std: f64) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        let mut rng = SplitMix64::new(seed);
        for seg in &model.layout.segments {
            let kind = seg.init_kind();
            for p in &mut model.params[seg.range()] {
                *p = match kind {
                    InitKind::Normal => std * rng.normal(),
                    InitKind::Zero => 0.0,
                    InitKind::One => 1.0,
                };
            }
        }
        Ok(model)
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (layout, ranges) = Layout::build(&config);
        let params = vec![0.0; layout.num_params()];
        Ok(Self { config, params, layout, ranges })
    }

    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        if params.len() != model.params.len() {
            return Err(SeqError::Shape(format!(
                "expected {} parameters, got {}",
                model.params.len(),
                params.len()
            )));
        }
        model.params = params;
        Ok(model)
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Evaluation-mode forward pass (no dropout).
    pub fn forward(&self, window: &TokenWindow) -> Result<Predictions> {
        let cache = self.run(window, None)?;
        Ok(self.predictions(window, &cache))
    }

    /// Training-mode forward pass; dropout masks are drawn from `rng`.
    pub fn forward_train(&self, window: &TokenWindow, rng: &mut SplitMix64) -> Result<Predictions> {
        let cache = self.run(window, Some(rng))?;
        Ok(self.predictions(window, &cache))
    }

    fn predictions(&self, window: &TokenWindow, cache: &Cache) -> Predictions {
        let dim = self.config.out_dim();
        let mut values = vec![0.0; window.len() * dim];
        values[cache.first * dim..].copy_from_slice(&cache.out);
        Predictions { dim, values }
    }

    /// Mean batch loss and its exact gradient. Dropout is active only when
    /// `rng` is given.
    pub fn loss_and_gradient(
        &self,
        batch: &[Sample],
        mut rng: Option<&mut SplitMix64>,
    ) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(SeqError::EmptyBatch);
        }
        let dim = self.config.out_dim();
        let inv_batch = 1.0 / batch.len() as f64;
        let mut grads = vec![0.0; self.params.len()];
        let mut total = 0.0;
        for sample in batch {
            let window = &sample.window;
            if sample.mask.len() != window.len() || sample.target.len() != window.len() * dim {
                return Err(SeqError::Shape("sample target/mask do not match window".into()));
            }
            if sample.mask.iter().zip(&window.valid).any(|(&m, &v)| m && !v) {
                return Err(SeqError::InvalidWindow("loss mask covers a padded slot".into()));
            }
            let cache = self.run(window, rng.as_deref_mut())?;
            let pred = self.predictions(window, &cache);
            total += loss_mse(&pred.values, &sample.target, &sample.mask, dim)? * inv_batch;

            let count = sample.mask.iter().filter(|&&m| m).count();
            let scale = 2.0 * inv_batch / (count * dim) as f64;
            let mut dout = vec![0.0; cache.steps * dim];
            for i in 0..cache.steps {
                let slot = cache.first + i;
                if sample.mask[slot] {
                    for c in 0..dim {
                        dout[i * dim + c] =
                            scale * (pred.values[slot * dim + c] - sample.target[slot * dim + c]);
                    }
                }
            }
            self.backward(window, &cache, &dout, &mut grads);
        }
        Ok((total, grads))
    }

    /// Gradient of the mean batch loss (evaluation mode).
    pub fn gradients(&self, batch: &[Sample]) -> Result<Vec<f64>> {
        Ok(self.loss_and_gradient(batch, None)?.1)
    }

    /// Mean batch loss in evaluation mode.
    pub fn batch_loss(&self, batch: &[Sample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(SeqError::EmptyBatch);
        }
        let dim = self.config.out_dim();
        let mut total = 0.0;
        for s in batch {
            let pred = self.forward(&s.window)?;
            total += loss_mse(&pred.values, &s.target, &s.mask, dim)?;
        }
        Ok(total / batch.len() as f64)
    }

    fn run(&self, window: &TokenWindow, mut rng: Option<&mut SplitMix64>) -> Result<Cache> {
        window.check(&self.config)?;
        let cfg = &self.config;
        let p = &self.params;
        let r = &self.ranges;
        let e = cfg.embed_dim;
        let f = cfg.ff_dim();
        let first = window.first_valid();
        let n = window.len() - first;
        let rows = 2 * n;

        let mut emb_pre = vec![0.0; rows * e];
        for i in 0..n {
            let slot = first + i;
            let step = &p[r.step.start + window.steps[slot] * e..r.step.start + (window.steps[slot] + 1) * e];
            let (s_row, a_row) = emb_pre[2 * i * e..(2 * i + 2) * e].split_at_mut(e);
            linear_forward(window.state(slot), 1, p, &r.state_w, &r.state_b, cfg.d_s, e, s_row);
            linear_forward(window.action(slot), 1, p, &r.action_w, &r.action_b, cfg.d_a, e, a_row);
            for c in 0..e {
                s_row[c] += step[c];
                a_row[c] += step[c];
            }
        }
        let mut x = vec![0.0; rows * e];
        let mut emb_mean = vec![0.0; rows];
        let mut emb_rstd = vec![0.0; rows];
        layernorm_forward(&emb_pre, rows, e, p, &r.emb_g, &r.emb_b, &mut x, &mut emb_mean, &mut emb_rstd);
        let emb_drop = dropout_mask(x.len(), cfg.dropout, &mut rng);
        apply_mask(&mut x, &emb_drop);
        check_finite(&x, || "embed".into())?;

        let mut blocks = Vec::with_capacity(cfg.n_layer);
        for (l, br) in r.blocks.iter().enumerate() {
            let x_in = x;
            let mut ln1 = vec![0.0; rows * e];
            let mut ln1_mean = vec![0.0; rows];
            let mut ln1_rstd = vec![0.0; rows];
            layernorm_forward(&x_in, rows, e, p, &br.ln1_g, &br.ln1_b, &mut ln1, &mut ln1_mean, &mut ln1_rstd);
            let mut qkv = vec![0.0; rows * 3 * e];
            linear_forward(&ln1, rows, p, &br.qkv_w, &br.qkv_b, e, 3 * e, &mut qkv);
            let mut probs = vec![0.0; cfg.n_head * rows * rows];
            let mut att = vec![0.0; rows * e];
            attention_forward(&qkv, rows, e, cfg.n_head, &mut att, &mut probs);
            let mut proj = vec![0.0; rows * e];
            linear_forward(&att, rows, p, &br.proj_w, &br.proj_b, e, e, &mut proj);
            let drop1 = dropout_mask(proj.len(), cfg.dropout, &mut rng);
            apply_mask(&mut proj, &drop1);
            let x_mid: Vec<f64> = x_in.iter().zip(&proj).map(|(a, b)| a + b).collect();

            let mut ln2 = vec![0.0; rows * e];
            let mut ln2_mean = vec![0.0; rows];
            let mut ln2_rstd = vec![0.0; rows];
            layernorm_forward(&x_mid, rows, e, p, &br.ln2_g, &br.ln2_b, &mut ln2, &mut ln2_mean, &mut ln2_rstd);
            let mut fc_pre = vec![0.0; rows * f];
            linear_forward(&ln2, rows, p, &br.fc_w, &br.fc_b, e, f, &mut fc_pre);
            let fc_act: Vec<f64> = fc_pre.iter().map(|&v| v.max(0.0)).collect();
            let mut mlp = vec![0.0; rows * e];
            linear_forward(&fc_act, rows, p, &br.out_w, &br.out_b, f, e, &mut mlp);
            let drop2 = dropout_mask(mlp.len(), cfg.dropout, &mut rng);
            apply_mask(&mut mlp, &drop2);
            x = x_mid.iter().zip(&mlp).map(|(a, b)| a + b).collect();
            check_finite(&x, || format!("blocks.{l}"))?;

            blocks.push(BlockCache {
                x_in,
                ln1,
                ln1_mean,
                ln1_rstd,
                qkv,
                probs,
                att,
                drop1,
                x_mid,
                ln2,
                ln2_mean,
                ln2_rstd,
                fc_pre,
                fc_act,
                drop2,
            });
        }

        let mut lnf = vec![0.0; rows * e];
        let mut lnf_mean = vec![0.0; rows];
        let mut lnf_rstd = vec![0.0; rows];
        layernorm_forward(&x, rows, e, p, &r.lnf_g, &r.lnf_b, &mut lnf, &mut lnf_mean, &mut lnf_rstd);
        let mut head_in = vec![0.0; n * e];
        for i in 0..n {
            head_in[i * e..(i + 1) * e].copy_from_slice(&lnf[(2 * i + 1) * e..(2 * i + 2) * e]);
        }
        let od = cfg.out_dim();
        let mut out = vec![0.0; n * od];
        linear_forward(&head_in, n, p, &r.head_w, &r.head_b, e, od, &mut out);
        check_finite(&out, || "head".into())?;

        Ok(Cache {
            first,
            steps: n,
            emb_pre,
            emb_mean,
            emb_rstd,
            emb_drop,
            blocks,
            x_final: x,
            lnf_mean,
            lnf_rstd,
            head_in,
            out,
        })
    }

    fn backward(&self, window: &TokenWindow, cache: &Cache, dout: &[f64], grads: &mut [f64]) {
        let cfg = &self.config;
        let p = &self.params;
        let r = &self.ranges;
        let e = cfg.embed_dim;
        let f = cfg.ff_dim();
        let n = cache.steps;
        let rows = 2 * n;
        let od = cfg.out_dim();

        let mut dhead_in = vec![0.0; n * e];
        linear_backward(&cache.head_in, n, p, grads, &r.head_w, &r.head_b, e, od, dout, Some(&mut dhead_in));
        let mut dlnf = vec![0.0; rows * e];
        for i in 0..n {
            dlnf[(2 * i + 1) * e..(2 * i + 2) * e].copy_from_slice(&dhead_in[i * e..(i + 1) * e]);
        }
        let mut dx = vec![0.0; rows * e];
        layernorm_backward(
            &cache.x_final, rows, e, p, grads, &r.lnf_g, &r.lnf_b, &cache.lnf_mean, &cache.lnf_rstd, &dlnf, &mut dx,
        );

        for (bc, br) in cache.blocks.iter().zip(&r.blocks).rev() {
            // x_out = x_mid + drop(mlp(ln2(x_mid)))
            let mut dmlp = dx.clone();
            apply_mask(&mut dmlp, &bc.drop2);
            let mut dfc = vec![0.0; rows * f];
            linear_backward(&bc.fc_act, rows, p, grads, &br.out_w, &br.out_b, f, e, &dmlp, Some(&mut dfc));
            for (d, &pre) in dfc.iter_mut().zip(&bc.fc_pre) {
                if pre <= 0.0 {
                    *d = 0.0;
                }
            }
            let mut dln2 = vec![0.0; rows * e];
            linear_backward(&bc.ln2, rows, p, grads, &br.fc_w, &br.fc_b, e, f, &dfc, Some(&mut dln2));
            let mut dx_mid = dx;
            layernorm_backward(
                &bc.x_mid, rows, e, p, grads, &br.ln2_g, &br.ln2_b, &bc.ln2_mean, &bc.ln2_rstd, &dln2, &mut dx_mid,
            );

            // x_mid = x_in + drop(proj(attn(qkv(ln1(x_in)))))
            let mut dproj = dx_mid.clone();
            apply_mask(&mut dproj, &bc.drop1);
            let mut datt = vec![0.0; rows * e];
            linear_backward(&bc.att, rows, p, grads, &br.proj_w, &br.proj_b, e, e, &dproj, Some(&mut datt));
            let mut dqkv = vec![0.0; rows * 3 * e];
            attention_backward(&bc.qkv, &bc.probs, rows, e, cfg.n_head, &datt, &mut dqkv);
            let mut dln1 = vec![0.0; rows * e];
            linear_backward(&bc.ln1, rows, p, grads, &br.qkv_w, &br.qkv_b, e, 3 * e, &dqkv, Some(&mut dln1));
            let mut dx_in = dx_mid;
            layernorm_backward(
                &bc.x_in, rows, e, p, grads, &br.ln1_g, &br.ln1_b, &bc.ln1_mean, &bc.ln1_rstd, &dln1, &mut dx_in,
            );
            dx = dx_in;
        }

        apply_mask(&mut dx, &cache.emb_drop);
        let mut demb = vec![0.0; rows * e];
        layernorm_backward(
            &cache.emb_pre, rows, e, p, grads, &r.emb_g, &r.emb_b, &cache.emb_mean, &cache.emb_rstd, &dx, &mut demb,
        );
        for i in 0..n {
            let slot = cache.first + i;
            let ds = &demb[2 * i * e..(2 * i + 1) * e];
            let da = &demb[(2 * i + 1) * e..(2 * i + 2) * e];
            linear_backward(window.state(slot), 1, p, grads, &r.state_w, &r.state_b, cfg.d_s, e, ds, None);
            linear_backward(window.action(slot), 1, p, grads, &r.action_w, &r.action_b, cfg.d_a, e, da, None);
            let off = r.step.start + window.steps[slot] * e;
            for c in 0..e {
                grads[off + c] += ds[c] + da[c];
            }
        }
    }
}
