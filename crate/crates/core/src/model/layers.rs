//! Building blocks: linear layers, multi-head attention, the post-norm
//! self-attention block and the dual-input encoder.

use crate::autodiff::{xavier_uniform_init, AutodiffError, ParamId, ParamStore, Tape, Tensor, Var};
use crate::env::Observation;
use crate::scalar::Scalar;
use crate::seed::derive_seed;

/// Registers parameters with deterministic per-tensor seeds.
pub(crate) struct Builder<'a, T: Scalar> {
    pub store: &'a mut ParamStore<T>,
    pub seed: u64,
}

impl<T: Scalar> Builder<'_, T> {
    fn next_seed(&self) -> u64 {
        derive_seed(self.seed, &[self.store.len() as u64])
    }

    pub fn weight(&mut self, name: &str, fan_in: usize, fan_out: usize) -> ParamId {
        let t = xavier_uniform_init(vec![fan_in, fan_out], fan_in, fan_out, self.next_seed());
        self.store.add(name, t)
    }

    pub fn filled(&mut self, name: &str, len: usize, value: f64) -> ParamId {
        let t = Tensor::new(vec![len], vec![T::of(value); len]).expect("length matches");
        self.store.add(name, t)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub(crate) fn new<T: Scalar>(b: &mut Builder<'_, T>, name: &str, fan_in: usize, fan_out: usize, bias: bool) -> Self {
        let weight = b.weight(&format!("{name}.weight"), fan_in, fan_out);
        let bias = bias.then(|| b.filled(&format!("{name}.bias"), fan_out, 0.0));
        Linear { weight, bias }
    }

    pub fn forward<'p, T: Scalar>(&self, tape: &mut Tape<'p, T>, store: &'p ParamStore<T>, x: Var) -> Result<Var, AutodiffError> {
        let w = tape.param(store, self.weight);
        let y = tape.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let bv = tape.param(store, b);
                tape.add_row(y, bv)
            }
            None => Ok(y),
        }
    }
}

/// Query/key/value/output projections of a multi-head attention layer.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub num_heads: usize,
}

impl MultiHeadAttention {
    pub(crate) fn new<T: Scalar>(b: &mut Builder<'_, T>, name: &str, dim: usize, num_heads: usize) -> Self {
        MultiHeadAttention {
            wq: b.weight(&format!("{name}.wq"), dim, dim),
            wk: b.weight(&format!("{name}.wk"), dim, dim),
            wv: b.weight(&format!("{name}.wv"), dim, dim),
            wo: b.weight(&format!("{name}.wo"), dim, dim),
            num_heads,
        }
    }

    /// Scaled dot-product attention of `queries` over `keys`/`values`, with
    /// `key_mask` hiding key positions. Output has the shape of `queries`.
    pub fn forward<'p, T: Scalar>(
        &self,
        tape: &mut Tape<'p, T>,
        store: &'p ParamStore<T>,
        queries: Var,
        keys: Var,
        values: Var,
        key_mask: &[bool],
    ) -> Result<Var, AutodiffError> {
        let (_, dim) = tape.dims(queries);
        let head = dim / self.num_heads;
        let scale = T::of(1.0 / (head as f64).sqrt());
        let (wq, wk, wv, wo) = (
            tape.param(store, self.wq),
            tape.param(store, self.wk),
            tape.param(store, self.wv),
            tape.param(store, self.wo),
        );
        let q = tape.matmul(queries, wq)?;
        let k = tape.matmul(keys, wk)?;
        let v = tape.matmul(values, wv)?;
        let mut heads = Vec::with_capacity(self.num_heads);
        for h in 0..self.num_heads {
            let qh = tape.narrow_cols(q, h * head, head)?;
            let kh = tape.narrow_cols(k, h * head, head)?;
            let vh = tape.narrow_cols(v, h * head, head)?;
            let logits = tape.matmul_t(qh, kh)?;
            let logits = tape.scale(logits, scale);
            let weights = tape.masked_softmax(logits, key_mask)?;
            heads.push(tape.matmul(weights, vh)?);
        }
        let joined = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads)? };
        tape.matmul(joined, wo)
    }
}

/// Masked self-attention, residual, layer norm, ReLU feed-forward,
/// residual, layer norm.
#[derive(Clone, Debug)]
pub struct AttentionBlock {
    pub attention: MultiHeadAttention,
    pub norm1: (ParamId, ParamId),
    pub ff1: Linear,
    pub ff2: Linear,
    pub norm2: (ParamId, ParamId),
}

impl AttentionBlock {
    pub(crate) fn new<T: Scalar>(b: &mut Builder<'_, T>, name: &str, dim: usize, heads: usize, ffn: usize) -> Self {
        AttentionBlock {
            attention: MultiHeadAttention::new(b, &format!("{name}.mha"), dim, heads),
            norm1: (b.filled(&format!("{name}.ln1.gain"), dim, 1.0), b.filled(&format!("{name}.ln1.bias"), dim, 0.0)),
            ff1: Linear::new(b, &format!("{name}.ff1"), dim, ffn, true),
            ff2: Linear::new(b, &format!("{name}.ff2"), ffn, dim, true),
            norm2: (b.filled(&format!("{name}.ln2.gain"), dim, 1.0), b.filled(&format!("{name}.ln2.bias"), dim, 0.0)),
        }
    }

    pub fn forward<'p, T: Scalar>(&self, tape: &mut Tape<'p, T>, store: &'p ParamStore<T>, x: Var, mask: &[bool]) -> Result<Var, AutodiffError> {
        let att = self.attention.forward(tape, store, x, x, x, mask)?;
        let res = tape.add(x, att)?;
        let (g1, b1) = (tape.param(store, self.norm1.0), tape.param(store, self.norm1.1));
        let h = tape.layer_norm(res, g1, b1)?;
        let inner = self.ff1.forward(tape, store, h)?;
        let inner = tape.relu(inner);
        let ff = self.ff2.forward(tape, store, inner)?;
        let res = tape.add(h, ff)?;
        let (g2, b2) = (tape.param(store, self.norm2.0), tape.param(store, self.norm2.1));
        tape.layer_norm(res, g2, b2)
    }
}

fn run_stack<'p, T: Scalar>(
    blocks: &[AttentionBlock],
    tape: &mut Tape<'p, T>,
    store: &'p ParamStore<T>,
    mut x: Var,
    mask: &[bool],
) -> Result<Var, AutodiffError> {
    for block in blocks {
        x = block.forward(tape, store, x, mask)?;
    }
    Ok(x)
}

/// Separate node and rule embeddings and self-attention stacks, followed by
/// a joint stack over the concatenation `[nodes..., rules...]`. No
/// positional encoding is applied anywhere.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub node_embed: Linear,
    pub rule_embed: Linear,
    pub node_blocks: Vec<AttentionBlock>,
    pub rule_blocks: Vec<AttentionBlock>,
    pub joint_blocks: Vec<AttentionBlock>,
}

pub(crate) struct EncoderShape {
    pub node_dim: usize,
    pub rule_dim: usize,
    pub embed: usize,
    pub heads: usize,
    pub ffn: usize,
    pub stacks: usize,
}

impl Encoder {
    pub(crate) fn new<T: Scalar>(b: &mut Builder<'_, T>, prefix: &str, s: &EncoderShape) -> Self {
        let blocks = |b: &mut Builder<'_, T>, part: &str| {
            (0..s.stacks)
                .map(|i| AttentionBlock::new(b, &format!("{prefix}.{part}.{i}"), s.embed, s.heads, s.ffn))
                .collect()
        };
        Encoder {
            node_embed: Linear::new(b, &format!("{prefix}.node_embed"), s.node_dim, s.embed, true),
            rule_embed: Linear::new(b, &format!("{prefix}.rule_embed"), s.rule_dim, s.embed, true),
            node_blocks: blocks(b, "node"),
            rule_blocks: blocks(b, "rule"),
            joint_blocks: blocks(b, "joint"),
        }
    }

    /// Returns the `(nodes + rules) × embed` encoding.
    pub fn forward<'p, T: Scalar>(&self, tape: &mut Tape<'p, T>, store: &'p ParamStore<T>, obs: &Observation<T>) -> Result<Var, AutodiffError> {
        let nodes = tape.constant(obs.num_nodes, obs.node_dim, obs.node_feats.clone())?;
        let nodes = self.node_embed.forward(tape, store, nodes)?;
        let nodes = run_stack(&self.node_blocks, tape, store, nodes, &obs.node_mask)?;
        let joined = if obs.num_rules == 0 {
            nodes
        } else {
            let rules = tape.constant(obs.num_rules, 3, obs.rule_feats.clone())?;
            let rules = self.rule_embed.forward(tape, store, rules)?;
            let rules = run_stack(&self.rule_blocks, tape, store, rules, &obs.rule_mask)?;
            tape.concat_rows(&[nodes, rules])?
        };
        run_stack(&self.joint_blocks, tape, store, joined, &obs.combined_mask())
    }
}
