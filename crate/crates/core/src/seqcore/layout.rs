use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::model::ModelConfig;

/// One named tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }

    /// Biases and layer-norm shifts initialise to zero, gains to one.
    pub(crate) fn init_kind(&self) -> InitKind {
        if self.name.ends_with(".gain") {
            InitKind::One
        } else if self.name.ends_with(".bias") {
            InitKind::Zero
        } else {
            InitKind::Normal
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum InitKind {
    Normal,
    Zero,
    One,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone)]
pub(crate) struct BlockRanges {
    pub ln1_g: Range<usize>,
    pub ln1_b: Range<usize>,
    pub qkv_w: Range<usize>,
    pub qkv_b: Range<usize>,
    pub proj_w: Range<usize>,
    pub proj_b: Range<usize>,
    pub ln2_g: Range<usize>,
    pub ln2_b: Range<usize>,
    pub fc_w: Range<usize>,
    pub fc_b: Range<usize>,
    pub out_w: Range<usize>,
    pub out_b: Range<usize>,
}

/// Resolved offsets used by the forward and backward passes.
#[derive(Debug, Clone)]
pub(crate) struct Ranges {
    pub state_w: Range<usize>,
    pub state_b: Range<usize>,
    pub action_w: Range<usize>,
    pub action_b: Range<usize>,
    pub step: Range<usize>,
    pub emb_g: Range<usize>,
    pub emb_b: Range<usize>,
    pub blocks: Vec<BlockRanges>,
    pub lnf_g: Range<usize>,
    pub lnf_b: Range<usize>,
    pub head_w: Range<usize>,
    pub head_b: Range<usize>,
}

struct Builder {
    segments: Vec<Segment>,
    offset: usize,
}

impl Builder {
    fn push(&mut self, name: String, shape: Vec<usize>) -> Range<usize> {
        let seg = Segment { name, shape, offset: self.offset };
        self.offset += seg.len();
        let r = seg.range();
        self.segments.push(seg);
        r
    }
}

impl Layout {
    pub(crate) fn build(cfg: &ModelConfig) -> (Layout, Ranges) {
        let e = cfg.embed_dim;
        let f = cfg.ff_dim();
        let mut b = Builder { segments: Vec::new(), offset: 0 };
        let state_w = b.push("embed_state.weight".into(), vec![e, cfg.d_s]);
        let state_b = b.push("embed_state.bias".into(), vec![e]);
        let action_w = b.push("embed_action.weight".into(), vec![e, cfg.d_a]);
        let action_b = b.push("embed_action.bias".into(), vec![e]);
        let step = b.push("embed_step.weight".into(), vec![cfg.max_step, e]);
        let emb_g = b.push("embed_ln.gain".into(), vec![e]);
        let emb_b = b.push("embed_ln.bias".into(), vec![e]);
        let blocks = (0..cfg.n_layer)
            .map(|l| BlockRanges {
                ln1_g: b.push(format!("blocks.{l}.ln1.gain"), vec![e]),
                ln1_b: b.push(format!("blocks.{l}.ln1.bias"), vec![e]),
                qkv_w: b.push(format!("blocks.{l}.attn.qkv.weight"), vec![3 * e, e]),
                qkv_b: b.push(format!("blocks.{l}.attn.qkv.bias"), vec![3 * e]),
                proj_w: b.push(format!("blocks.{l}.attn.proj.weight"), vec![e, e]),
                proj_b: b.push(format!("blocks.{l}.attn.proj.bias"), vec![e]),
                ln2_g: b.push(format!("blocks.{l}.ln2.gain"), vec![e]),
                ln2_b: b.push(format!("blocks.{l}.ln2.bias"), vec![e]),
                fc_w: b.push(format!("blocks.{l}.mlp.fc.weight"), vec![f, e]),
                fc_b: b.push(format!("blocks.{l}.mlp.fc.bias"), vec![f]),
                out_w: b.push(format!("blocks.{l}.mlp.proj.weight"), vec![e, f]),
                out_b: b.push(format!("blocks.{l}.mlp.proj.bias"), vec![e]),
            })
            .collect();
        let lnf_g = b.push("ln_f.gain".into(), vec![e]);
        let lnf_b = b.push("ln_f.bias".into(), vec![e]);
        let head_w = b.push("head.weight".into(), vec![cfg.out_dim(), e]);
        let head_b = b.push("head.bias".into(), vec![cfg.out_dim()]);
        let ranges = Ranges {
            state_w,
            state_b,
            action_w,
            action_b,
            step,
            emb_g,
            emb_b,
            blocks,
            lnf_g,
            lnf_b,
            head_w,
            head_b,
        };
        (Layout { segments: b.segments }, ranges)
    }

    pub fn num_params(&self) -> usize {
        self.segments.last().map_or(0, |s| s.offset + s.len())
    }

    pub fn get(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }
}
