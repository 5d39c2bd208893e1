use std::collections::HashMap;

use autodiff::{Graph, Mask, NodeId, Real, Tensor, DEFAULT_MASK_FILL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::DecoderInput;
use crate::codes::ParityCheckMatrix;

use super::mask::{build_mask, low_rank_width, resize_mask};
use super::TransformerError;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AttentionKind {
    Standard,
    Linear,
}

impl AttentionKind {
    pub fn name(self) -> &'static str {
        match self {
            AttentionKind::Standard => "standard",
            AttentionKind::Linear => "linear",
        }
    }
}

impl std::str::FromStr for AttentionKind {
    type Err = TransformerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(AttentionKind::Standard),
            "linear" => Ok(AttentionKind::Linear),
            _ => Err(TransformerError::Config(format!(
                "unknown attention kind `{s}` (expected standard or linear)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub n: usize,
    pub m: usize,
    pub d_model: usize,
    pub heads: usize,
    pub blocks: usize,
    pub attention: AttentionKind,
    /// Ratio `N / K` between sequence length and projected length.
    pub mask_div: usize,
    pub ff_mult: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(n: usize, m: usize, attention: AttentionKind) -> Self {
        ModelConfig {
            n,
            m,
            d_model: 32,
            heads: 4,
            blocks: 2,
            attention,
            mask_div: 2,
            ff_mult: 4,
            seed: 0,
        }
    }

    pub fn seq_len(&self) -> usize {
        self.n + self.m
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    /// Projected length `K`, for linear attention only.
    pub fn proj_len(&self) -> Option<usize> {
        match self.attention {
            AttentionKind::Standard => None,
            AttentionKind::Linear => Some(low_rank_width(self.seq_len(), self.mask_div)),
        }
    }

    pub fn validate(&self) -> Result<(), TransformerError> {
        let fail = |msg: String| Err(TransformerError::Config(msg));
        if self.n == 0 || self.m == 0 {
            return fail(format!("code dimensions n={} m={} must be positive", self.n, self.m));
        }
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return fail(format!(
                "hidden size {} must be a positive multiple of the head count {}",
                self.d_model, self.heads
            ));
        }
        if self.blocks == 0 || self.ff_mult == 0 {
            return fail("block count and feed-forward expansion must be positive".into());
        }
        if self.mask_div == 0 {
            return fail("mask division must be at least 1".into());
        }
        Ok(())
    }

    /// Text key-values, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        [
            ("n", self.n.to_string()),
            ("m", self.m.to_string()),
            ("d_model", self.d_model.to_string()),
            ("heads", self.heads.to_string()),
            ("blocks", self.blocks.to_string()),
            ("attention", self.attention.name().to_string()),
            ("mask_div", self.mask_div.to_string()),
            ("ff_mult", self.ff_mult.to_string()),
            ("seed", self.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self, TransformerError> {
        let get = |key: &str| -> Result<&str, TransformerError> {
            pairs
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| TransformerError::Format(format!("missing config key `{key}`")))
        };
        let num = |key: &str| -> Result<usize, TransformerError> {
            get(key)?
                .parse()
                .map_err(|_| TransformerError::Format(format!("config key `{key}` is not an integer")))
        };
        let cfg = ModelConfig {
            n: num("n")?,
            m: num("m")?,
            d_model: num("d_model")?,
            heads: num("heads")?,
            blocks: num("blocks")?,
            attention: get("attention")?.parse()?,
            mask_div: num("mask_div")?,
            ff_mult: num("ff_mult")?,
            seed: get("seed")?
                .parse()
                .map_err(|_| TransformerError::Format("config key `seed` is not an integer".into()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug)]
enum Init {
    Uniform(usize),
    Zeros,
    Ones,
}

fn layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let (seq, d, n) = (cfg.seq_len(), cfg.d_model, cfg.n);
    let ff = cfg.ff_mult * d;
    let mut out = vec![("embed".to_string(), vec![seq, d], Init::Uniform(1))];
    let mut push = |name: String, shape: Vec<usize>, init| out.push((name, shape, init));
    for b in 0..cfg.blocks {
        let p = |s: &str| format!("block{b}.{s}");
        push(p("ln1.gain"), vec![d], Init::Ones);
        push(p("ln1.bias"), vec![d], Init::Zeros);
        for w in ["q", "k", "v", "o"] {
            push(p(&format!("w{w}")), vec![d, d], Init::Uniform(d));
            push(p(&format!("b{w}")), vec![d], Init::Zeros);
        }
        if let Some(k) = cfg.proj_len() {
            push(p("pk"), vec![seq, k], Init::Uniform(seq));
            push(p("pv"), vec![seq, k], Init::Uniform(seq));
        }
        push(p("ln2.gain"), vec![d], Init::Ones);
        push(p("ln2.bias"), vec![d], Init::Zeros);
        push(p("ff1.w"), vec![d, ff], Init::Uniform(d));
        push(p("ff1.b"), vec![ff], Init::Zeros);
        push(p("ff2.w"), vec![ff, d], Init::Uniform(ff));
        push(p("ff2.b"), vec![d], Init::Zeros);
    }
    push("head.w".into(), vec![d, 1], Init::Uniform(d));
    push("head.b".into(), vec![1], Init::Zeros);
    push("fc.w".into(), vec![seq, n], Init::Uniform(seq));
    push("fc.b".into(), vec![n], Init::Zeros);
    out
}

/// Named parameter tensors in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> ModelParams<T> {
    /// Uniform `+-1/sqrt(fan_in)` weights, zero biases, unit gains.
    pub fn init(cfg: &ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (names, tensors) = layout(cfg)
            .into_iter()
            .map(|(name, shape, init)| {
                let t = match init {
                    Init::Zeros => Tensor::zeros(&shape),
                    Init::Ones => Tensor::full(&shape, T::one()),
                    Init::Uniform(fan_in) => {
                        let a = 1.0 / (fan_in as f64).sqrt();
                        Tensor::from_fn(&shape, |_| T::lit(rng.random_range(-a..a)))
                    }
                };
                (name, t)
            })
            .unzip();
        Self::from_parts(names, tensors)
    }

    fn from_parts(names: Vec<String>, tensors: Vec<Tensor<T>>) -> Self {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        ModelParams { names, tensors, index }
    }

    /// Checks `named` against the layout of `cfg` and takes ownership.
    pub fn from_named(cfg: &ModelConfig, named: Vec<(String, Tensor<T>)>) -> Result<Self, TransformerError> {
        let expected = layout(cfg);
        if named.len() != expected.len() {
            return Err(TransformerError::Format(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                named.len()
            )));
        }
        for ((name, t), (ename, eshape, _)) in named.iter().zip(&expected) {
            if name != ename || t.shape() != eshape.as_slice() {
                return Err(TransformerError::Format(format!(
                    "parameter `{name}` {:?} does not match expected `{ename}` {eshape:?}",
                    t.shape()
                )));
            }
        }
        let (names, tensors) = named.into_iter().unzip();
        Ok(Self::from_parts(names, tensors))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let tensors = self
            .tensors
            .iter()
            .map(|t| Tensor::from_f64(t.shape(), &t.to_f64()).expect("same shape"))
            .collect();
        ModelParams::from_parts(self.names.clone(), tensors)
    }
}

/// Parameters plus the masks derived from the code.
#[derive(Clone, Debug)]
pub struct Model<T> {
    config: ModelConfig,
    params: ModelParams<T>,
    code: ParityCheckMatrix,
    full_mask: Mask,
    low_mask: Option<Mask>,
}

impl<T: Real> Model<T> {
    pub fn new(config: ModelConfig, code: &ParityCheckMatrix) -> Result<Self, TransformerError> {
        config.validate()?;
        let params = ModelParams::init(&config);
        Self::with_params(config, code, params)
    }

    pub fn with_params(
        config: ModelConfig,
        code: &ParityCheckMatrix,
        params: ModelParams<T>,
    ) -> Result<Self, TransformerError> {
        config.validate()?;
        if code.n() != config.n || code.m() != config.m {
            return Err(TransformerError::Shape(format!(
                "model expects n={} m={}, code has n={} m={}",
                config.n,
                config.m,
                code.n(),
                code.m()
            )));
        }
        let params = ModelParams::from_named(&config, params.names.into_iter().zip(params.tensors).collect())?;
        let full = build_mask(code);
        let low_mask = match config.attention {
            AttentionKind::Standard => None,
            AttentionKind::Linear => Some(resize_mask(&full, config.mask_div)?.to_mask()),
        };
        Ok(Model {
            config,
            params,
            code: code.clone(),
            full_mask: full.to_mask(),
            low_mask,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams<T> {
        &mut self.params
    }

    pub fn code(&self) -> &ParityCheckMatrix {
        &self.code
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
            code: self.code.clone(),
            full_mask: self.full_mask.clone(),
            low_mask: self.low_mask.clone(),
        }
    }

    /// Adds every parameter to `g` as a leaf, in layout order.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Vec<NodeId> {
        self.params
            .tensors
            .iter()
            .map(|t| g.leaf(t.clone(), trainable))
            .collect()
    }

    /// Logits `(B, n)` from decoder inputs `x` of shape `(B, n+m)`, using
    /// parameter nodes from [`Model::bind`] (or any nodes in layout order).
    pub fn forward(&self, g: &mut Graph<T>, params: &[NodeId], x: NodeId) -> Result<NodeId, TransformerError> {
        let cfg = &self.config;
        let seq = cfg.seq_len();
        if params.len() != self.params.tensors.len() {
            return Err(TransformerError::Shape(format!(
                "{} parameter nodes for {} parameters",
                params.len(),
                self.params.tensors.len()
            )));
        }
        let xs = g.shape(x).to_vec();
        if xs.len() != 2 || xs[1] != seq {
            return Err(TransformerError::Shape(format!(
                "decoder input {xs:?}, expected (B, {seq})"
            )));
        }
        let batch = xs[0];
        let p = |name: &str| params[self.params.index[name]];

        let mut h = embed(g, x, p("embed"))?;
        for b in 0..cfg.blocks {
            let q = |s: &str| p(&format!("block{b}.{s}"));
            let block = BlockNodes {
                ln1: (q("ln1.gain"), q("ln1.bias")),
                wq: (q("wq"), q("bq")),
                wk: (q("wk"), q("bk")),
                wv: (q("wv"), q("bv")),
                wo: (q("wo"), q("bo")),
                proj: self.low_mask.as_ref().map(|_| (q("pk"), q("pv"))),
                ln2: (q("ln2.gain"), q("ln2.bias")),
                ff1: (q("ff1.w"), q("ff1.b")),
                ff2: (q("ff2.w"), q("ff2.b")),
            };
            let mask = self.low_mask.as_ref().unwrap_or(&self.full_mask);
            h = transformer_block(g, h, &block, cfg.heads, mask)?;
        }
        let h = dense(g, h, p("head.w"), p("head.b"))?;
        let h = g.reshape(h, &[batch, seq])?;
        Ok(dense(g, h, p("fc.w"), p("fc.b"))?)
    }

    /// Evaluation-only forward pass on a batch of decoder inputs.
    pub fn logits(&self, inputs: &Tensor<T>) -> Result<Tensor<T>, TransformerError> {
        let mut g = Graph::new();
        let params = self.bind(&mut g, false);
        let x = g.constant(inputs.clone());
        let out = self.forward(&mut g, &params, x)?;
        Ok(g.value(out).clone())
    }

    pub fn decode(&self, inputs: &[DecoderInput]) -> Result<Vec<Vec<u8>>, TransformerError> {
        let x = batch_tensor(inputs, self.config.seq_len())?;
        let logits = self.logits(&x)?;
        Ok(threshold(&logits))
    }
}

/// Stacks decoder inputs into a `(B, n+m)` tensor.
pub fn batch_tensor<T: Real>(inputs: &[DecoderInput], seq: usize) -> Result<Tensor<T>, TransformerError> {
    let mut data = Vec::with_capacity(inputs.len() * seq);
    for x in inputs {
        if x.len() != seq {
            return Err(TransformerError::Shape(format!(
                "decoder input of length {}, expected {seq}",
                x.len()
            )));
        }
        data.extend(x.values().iter().map(|&v| T::lit(v)));
    }
    Ok(Tensor::new(&[inputs.len(), seq], data)?)
}

fn dense<T: Real>(g: &mut Graph<T>, x: NodeId, w: NodeId, b: NodeId) -> autodiff::Result<NodeId> {
    let y = g.matmul(x, w)?;
    g.add(y, b)
}

/// `(B, N)` scalars times a learned per-position `(N, D)` direction.
pub fn embed<T: Real>(g: &mut Graph<T>, x: NodeId, weight: NodeId) -> Result<NodeId, TransformerError> {
    let xs = g.shape(x).to_vec();
    let ws = g.shape(weight).to_vec();
    if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
        return Err(TransformerError::Shape(format!("embedding {ws:?} for input {xs:?}")));
    }
    let col = g.reshape(x, &[xs[0], xs[1], 1])?;
    Ok(g.mul(col, weight)?)
}

/// Masked scaled dot-product attention over `(B, H, N, D_H)` tensors.
pub fn attention<T: Real>(
    g: &mut Graph<T>,
    q: NodeId,
    k: NodeId,
    v: NodeId,
    mask: &Mask,
) -> Result<NodeId, TransformerError> {
    let weights = attention_weights(g, q, k, mask)?;
    Ok(g.matmul(weights, v)?)
}

/// Post-softmax attention weights `(B, H, N, N)`.
pub fn attention_weights<T: Real>(
    g: &mut Graph<T>,
    q: NodeId,
    k: NodeId,
    mask: &Mask,
) -> Result<NodeId, TransformerError> {
    let dh = *g
        .shape(q)
        .last()
        .ok_or_else(|| TransformerError::Shape("scalar query".into()))?;
    let kt = g.transpose(k)?;
    let scores = g.matmul(q, kt)?;
    let scores = g.scale(scores, 1.0 / (dh as f64).sqrt())?;
    let rank = g.shape(scores).len();
    let scores = g.masked_fill(scores, mask, DEFAULT_MASK_FILL)?;
    Ok(g.softmax(scores, rank - 1)?)
}

/// Attention with the sequence axis of keys and values projected from `N`
/// to `K` by `P_K, P_V` of shape `(N, K)`; the mask is `(N, K)`.
pub fn linear_attention<T: Real>(
    g: &mut Graph<T>,
    q: NodeId,
    k: NodeId,
    v: NodeId,
    pk: NodeId,
    pv: NodeId,
    mask: &Mask,
) -> Result<NodeId, TransformerError> {
    let seq = g.shape(k)[g.shape(k).len() - 2];
    for p in [pk, pv] {
        let ps = g.shape(p);
        if ps.len() != 2 || ps[0] != seq {
            return Err(TransformerError::Shape(format!(
                "projection {ps:?} for sequence length {seq}"
            )));
        }
    }
    let pkt = g.transpose(pk)?;
    let pvt = g.transpose(pv)?;
    let k_proj = g.matmul(pkt, k)?;
    let v_proj = g.matmul(pvt, v)?;
    let weights = attention_weights(g, q, k_proj, mask)?;
    Ok(g.matmul(weights, v_proj)?)
}

/// `(weight, bias)` node pairs of one block.
#[derive(Clone, Copy, Debug)]
pub struct BlockNodes {
    pub ln1: (NodeId, NodeId),
    pub wq: (NodeId, NodeId),
    pub wk: (NodeId, NodeId),
    pub wv: (NodeId, NodeId),
    pub wo: (NodeId, NodeId),
    /// `(P_K, P_V)` for linear attention.
    pub proj: Option<(NodeId, NodeId)>,
    pub ln2: (NodeId, NodeId),
    pub ff1: (NodeId, NodeId),
    pub ff2: (NodeId, NodeId),
}

fn split_heads<T: Real>(g: &mut Graph<T>, x: NodeId, heads: usize) -> autodiff::Result<NodeId> {
    let s = g.shape(x).to_vec();
    let x = g.reshape(x, &[s[0], s[1], heads, s[2] / heads])?;
    g.permute(x, &[0, 2, 1, 3])
}

fn merge_heads<T: Real>(g: &mut Graph<T>, x: NodeId) -> autodiff::Result<NodeId> {
    let s = g.shape(x).to_vec();
    let x = g.permute(x, &[0, 2, 1, 3])?;
    g.reshape(x, &[s[0], s[2], s[1] * s[3]])
}

/// Pre-norm residual block on `(B, N, D)`.
pub fn transformer_block<T: Real>(
    g: &mut Graph<T>,
    x: NodeId,
    p: &BlockNodes,
    heads: usize,
    mask: &Mask,
) -> Result<NodeId, TransformerError> {
    let xs = g.shape(x).to_vec();
    if xs.len() != 3 || xs[2] % heads != 0 {
        return Err(TransformerError::Shape(format!(
            "block input {xs:?} with {heads} heads"
        )));
    }
    let h = g.layer_norm(x, 2, p.ln1.0, p.ln1.1, LAYER_NORM_EPS)?;
    let q = dense(g, h, p.wq.0, p.wq.1)?;
    let k = dense(g, h, p.wk.0, p.wk.1)?;
    let v = dense(g, h, p.wv.0, p.wv.1)?;
    let (q, k, v) = (
        split_heads(g, q, heads)?,
        split_heads(g, k, heads)?,
        split_heads(g, v, heads)?,
    );
    let a = match p.proj {
        None => attention(g, q, k, v, mask)?,
        Some((pk, pv)) => linear_attention(g, q, k, v, pk, pv, mask)?,
    };
    let a = merge_heads(g, a)?;
    let a = dense(g, a, p.wo.0, p.wo.1)?;
    let x = g.add(x, a)?;
    let h = g.layer_norm(x, 2, p.ln2.0, p.ln2.1, LAYER_NORM_EPS)?;
    let h = dense(g, h, p.ff1.0, p.ff1.1)?;
    let h = g.gelu(h)?;
    let h = dense(g, h, p.ff2.0, p.ff2.1)?;
    Ok(g.add(x, h)?)
}

/// Bit 1 where the logit is strictly positive.
pub fn threshold<T: Real>(logits: &Tensor<T>) -> Vec<Vec<u8>> {
    let width = *logits.shape().last().unwrap_or(&0);
    if width == 0 {
        return vec![Vec::new(); logits.shape().first().copied().unwrap_or(0)];
    }
    logits
        .data()
        .chunks(width)
        .map(|row| row.iter().map(|&z| (z > T::zero()) as u8).collect())
        .collect()
}

/// Exact counter charge of [`attention`] on `(B, H, N, D_H)` inputs.
pub fn attention_flops(batch: usize, heads: usize, seq: usize, head_dim: usize) -> u64 {
    (batch * heads * seq * seq * (4 * head_dim + 6)) as u64
}

/// Exact counter charge of [`linear_attention`] with projected length `K`.
pub fn linear_attention_flops(batch: usize, heads: usize, seq: usize, proj: usize, head_dim: usize) -> u64 {
    (batch * heads * seq * proj * (8 * head_dim + 6)) as u64
}

/// Exact counter charge of [`Model::forward`] on a batch of `batch` inputs.
pub fn model_forward_flops(cfg: &ModelConfig, batch: usize) -> u64 {
    let (b, s, d, n) = (batch, cfg.seq_len(), cfg.d_model, cfg.n);
    let ff = cfg.ff_mult * d;
    let tokens = b * s;
    let dense_cost = |inp: usize, out: usize| tokens * (2 * inp * out + out);
    let attn = match cfg.proj_len() {
        None => attention_flops(b, cfg.heads, s, cfg.head_dim()),
        Some(k) => linear_attention_flops(b, cfg.heads, s, k, cfg.head_dim()),
    } as usize;
    let block = 2 * 7 * tokens * d
        + 4 * dense_cost(d, d)
        + attn
        + 2 * tokens * d
        + dense_cost(d, ff)
        + 8 * tokens * ff
        + dense_cost(ff, d);
    let total = tokens * d + cfg.blocks * block + dense_cost(d, 1) + b * (2 * s * n + n);
    total as u64
}
