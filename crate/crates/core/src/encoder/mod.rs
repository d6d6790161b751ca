//! Graph attention encoders over instance nodes: a flat stack with mean
//! readout and a hierarchical variant that pools nodes by learned scores.

pub mod checkpoint;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Graph, ParamId, ParamStore, Tensor, Var};
use crate::instance::{ProblemKind, RoutingInstance};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("encoder config: {0}")]
    Config(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderMode {
    Flat,
    Hierarchical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub embed_dim: usize,
    pub heads: usize,
    pub ff_hidden: usize,
    pub flat_layers: usize,
    pub hier_blocks: usize,
    pub layers_per_block: usize,
    pub pool_ratio: f64,
    pub mode: EncoderMode,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            heads: 8,
            ff_hidden: 512,
            flat_layers: 4,
            hier_blocks: 2,
            layers_per_block: 2,
            pool_ratio: 0.8,
            mode: EncoderMode::Hierarchical,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |m: String| Err(EncoderError::Config(m));
        if self.embed_dim == 0 || self.heads == 0 || self.ff_hidden == 0 {
            return bad("embed_dim, heads and ff_hidden must be positive".into());
        }
        if self.embed_dim % self.heads != 0 {
            return bad(format!("embed_dim {} not divisible by heads {}", self.embed_dim, self.heads));
        }
        if !(self.pool_ratio > 0.0 && self.pool_ratio < 1.0) {
            return bad(format!("pool_ratio {} outside (0, 1)", self.pool_ratio));
        }
        if self.hier_blocks == 0 {
            return bad("hier_blocks must be at least 1".into());
        }
        Ok(())
    }

    /// Length of the instance representation.
    pub fn output_dim(&self) -> usize {
        match self.mode {
            EncoderMode::Flat => self.embed_dim,
            EncoderMode::Hierarchical => 2 * self.embed_dim,
        }
    }
}

/// Nodes kept by one pooling step: `max(1, ⌊α·n⌋)`.
pub fn pooled_count(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64).floor() as usize).max(1)
}

/// Indices of the `keep` highest scores, ranked by (score desc, index asc)
/// and returned in ascending index order.
pub fn top_nodes(scores: &[f64], keep: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(keep);
    order.sort_unstable();
    order
}

/// Multi-head self-attention plus feed-forward, each added back through a
/// shared ReZero gate that starts at 0.
#[derive(Clone, Debug)]
pub struct AttentionLayer {
    heads: usize,
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    ff1: ParamId,
    b1: ParamId,
    ff2: ParamId,
    b2: ParamId,
    alpha: ParamId,
}

impl AttentionLayer {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        d: usize,
        heads: usize,
        ff: usize,
        rng: &mut R,
    ) -> Result<Self, EncoderError> {
        if heads == 0 || d % heads != 0 {
            return Err(EncoderError::Config(format!("embed_dim {d} not divisible by heads {heads}")));
        }
        Ok(Self {
            heads,
            wq: store.add_xavier(format!("{prefix}.wq"), d, d, rng),
            wk: store.add_xavier(format!("{prefix}.wk"), d, d, rng),
            wv: store.add_xavier(format!("{prefix}.wv"), d, d, rng),
            wo: store.add_xavier(format!("{prefix}.wo"), d, d, rng),
            ff1: store.add_xavier(format!("{prefix}.ff1"), d, ff, rng),
            b1: store.add_zeros(format!("{prefix}.b1"), 1, ff),
            ff2: store.add_xavier(format!("{prefix}.ff2"), ff, d, rng),
            b2: store.add_zeros(format!("{prefix}.b2"), 1, d),
            alpha: store.add_zeros(format!("{prefix}.alpha"), 1, 1),
        })
    }

    pub fn alpha(&self) -> ParamId {
        self.alpha
    }

    /// Fully connected attention over every node pair, self included.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, h: Var) -> Result<Var, AutodiffError> {
        self.forward_cross(g, store, h, h)
    }

    /// Rows of `query` attend over the rows of `context`; the residual path
    /// and feed-forward act on `query`.
    pub fn forward_cross(&self, g: &mut Graph, store: &ParamStore, query: Var, context: Var) -> Result<Var, AutodiffError> {
        let h = query;
        let d = g.value(h).cols();
        let dk = d / self.heads;
        let (wq, wk, wv, wo) = (
            g.param(store, self.wq),
            g.param(store, self.wk),
            g.param(store, self.wv),
            g.param(store, self.wo),
        );
        let q = g.matmul(h, wq)?;
        let k = g.matmul(context, wk)?;
        let v = g.matmul(context, wv)?;
        let scale = 1.0 / (dk as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for head in 0..self.heads {
            let (s, e) = (head * dk, (head + 1) * dk);
            let (qh, kh, vh) = if self.heads == 1 {
                (q, k, v)
            } else {
                (g.slice_cols(q, s, e)?, g.slice_cols(k, s, e)?, g.slice_cols(v, s, e)?)
            };
            let logits = g.matmul_nt(qh, kh)?;
            let logits = g.scale(logits, scale);
            let att = g.row_softmax(logits)?;
            outs.push(g.matmul(att, vh)?);
        }
        let cat = if outs.len() == 1 { outs[0] } else { g.concat_cols(&outs)? };
        let mha = g.matmul(cat, wo)?;
        let alpha = g.param(store, self.alpha);
        let gated = g.scalar_mul(mha, alpha)?;
        let h_hat = g.add(h, gated)?;

        let (ff1, b1, ff2, b2) = (
            g.param(store, self.ff1),
            g.param(store, self.b1),
            g.param(store, self.ff2),
            g.param(store, self.b2),
        );
        let hidden = g.matmul(h_hat, ff1)?;
        let hidden = g.add_row(hidden, b1)?;
        let hidden = g.relu(hidden);
        let out = g.matmul(hidden, ff2)?;
        let out = g.add_row(out, b2)?;
        let gated = g.scalar_mul(out, alpha)?;
        g.add(h_hat, gated)
    }
}

#[derive(Clone, Debug)]
struct HierBlock {
    layers: Vec<AttentionLayer>,
    score_layer: AttentionLayer,
    w_score: ParamId,
}

/// Output of one hierarchical block.
#[derive(Clone, Debug)]
pub struct PoolOutput {
    pub pooled: Var,
    pub readout: Var,
    pub kept: Vec<usize>,
}

/// Encoder parameters registered in a caller-owned [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Encoder {
    config: EncoderConfig,
    kind: ProblemKind,
    embed: ParamId,
    flat: Vec<AttentionLayer>,
    blocks: Vec<HierBlock>,
}

fn readout(g: &mut Graph, h: Var) -> Result<Var, AutodiffError> {
    let mean = g.mean_rows(h)?;
    let max = g.max_cols(h)?;
    let cat = g.concat_cols(&[mean, max])?;
    Ok(g.tanh(cat))
}

impl Encoder {
    pub fn new<R: Rng>(
        config: &EncoderConfig,
        kind: ProblemKind,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut R,
    ) -> Result<Self, EncoderError> {
        config.validate()?;
        let d = config.embed_dim;
        let embed = store.add_xavier(format!("{prefix}.embed"), kind.feature_width(), d, rng);
        let mut flat = Vec::new();
        let mut blocks = Vec::new();
        match config.mode {
            EncoderMode::Flat => {
                for l in 0..config.flat_layers {
                    flat.push(AttentionLayer::new(store, &format!("{prefix}.layer{l}"), d, config.heads, config.ff_hidden, rng)?);
                }
            }
            EncoderMode::Hierarchical => {
                for b in 0..config.hier_blocks {
                    let p = format!("{prefix}.block{b}");
                    let layers = (0..config.layers_per_block)
                        .map(|l| AttentionLayer::new(store, &format!("{p}.layer{l}"), d, config.heads, config.ff_hidden, rng))
                        .collect::<Result<Vec<_>, _>>()?;
                    let score_layer = AttentionLayer::new(store, &format!("{p}.score_layer"), d, config.heads, config.ff_hidden, rng)?;
                    let w_score = store.add_xavier(format!("{p}.w_score"), d, 1, rng);
                    blocks.push(HierBlock { layers, score_layer, w_score });
                }
            }
        }
        Ok(Self { config: config.clone(), kind, embed, flat, blocks })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    pub fn embed_param(&self) -> ParamId {
        self.embed
    }

    /// `H⁰ = xW` from the raw `N×2` or `N×3` node features.
    pub fn embed_nodes(&self, g: &mut Graph, store: &ParamStore, raw: Tensor) -> Result<Var, AutodiffError> {
        let x = g.constant(raw);
        let w = g.param(store, self.embed);
        g.matmul(x, w)
    }

    /// Runs one block: its attention layers, the score map, top-node
    /// selection and the pre-pooling readout.
    fn pool_block(&self, g: &mut Graph, store: &ParamStore, block: &HierBlock, h: Var) -> Result<PoolOutput, AutodiffError> {
        let mut h = h;
        for layer in &block.layers {
            h = layer.forward(g, store, h)?;
        }
        let s = block.score_layer.forward(g, store, h)?;
        let w = g.param(store, block.w_score);
        let z = g.matmul(s, w)?;
        let z = g.tanh(z);
        let keep = pooled_count(g.value(h).rows(), self.config.pool_ratio);
        let kept = top_nodes(g.value(z).data(), keep);
        let readout = readout(g, h)?;
        let shifted = g.broadcast_add_col(h, z)?;
        let pooled = g.gather_rows(shifted, &kept)?;
        Ok(PoolOutput { pooled, readout, kept })
    }

    /// Instance representation as a `1×output_dim` node.
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, inst: &RoutingInstance) -> Result<Var, EncoderError> {
        if inst.kind != self.kind {
            return Err(EncoderError::Config(format!(
                "encoder built for {} got a {} instance",
                self.kind.as_str(),
                inst.kind.as_str()
            )));
        }
        let w = self.kind.feature_width();
        let raw = Tensor::matrix(inst.scale(), w, inst.node_features());
        self.encode_raw(g, store, raw)
    }

    /// As [`Encoder::encode`] on an explicit feature matrix.
    pub fn encode_raw(&self, g: &mut Graph, store: &ParamStore, raw: Tensor) -> Result<Var, EncoderError> {
        let mut h = self.embed_nodes(g, store, raw)?;
        match self.config.mode {
            EncoderMode::Flat => {
                for layer in &self.flat {
                    h = layer.forward(g, store, h)?;
                }
                Ok(g.mean_rows(h)?)
            }
            EncoderMode::Hierarchical => {
                let mut total: Option<Var> = None;
                for block in &self.blocks {
                    let out = self.pool_block(g, store, block, h)?;
                    total = Some(match total {
                        None => out.readout,
                        Some(t) => g.add(t, out.readout)?,
                    });
                    h = out.pooled;
                }
                let last = readout(g, h)?;
                Ok(g.add(total.expect("at least one block"), last)?)
            }
        }
    }

    /// Kept node indices (relative to each block's input) for every block.
    pub fn pooling_trace(&self, store: &ParamStore, raw: Tensor) -> Result<Vec<Vec<usize>>, EncoderError> {
        let mut g = Graph::new();
        let mut h = self.embed_nodes(&mut g, store, raw)?;
        let mut trace = Vec::new();
        for block in &self.blocks {
            let out = self.pool_block(&mut g, store, block, h)?;
            trace.push(out.kept);
            h = out.pooled;
        }
        Ok(trace)
    }

    /// Forward pass returning plain values, for inference.
    pub fn represent(&self, store: &ParamStore, inst: &RoutingInstance) -> Result<Vec<f64>, EncoderError> {
        let mut g = Graph::new();
        let v = self.encode(&mut g, store, inst)?;
        Ok(g.value(v).data().to_vec())
    }
}

#[cfg(test)]
mod tests;
