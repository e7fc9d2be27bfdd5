//! Transformer encoder with length-average pooling. The same parameter
//! blocks serve the live model and its frozen snapshot: a snapshot is a deep
//! copy of the parameter store taken at training start, never updated again.

use crate::error::{Error, Result};
use crate::layers::{Dropout, Embedding, FeedForward, LayerNorm, MhaCache, MultiHeadAttention};
use crate::layers::{FfnCache, LnCache};
use crate::param::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub dropout: f64,
    /// Sinusoidal positional encodings; disable to make pooling
    /// permutation-invariant (used by tests and diagnostics).
    pub use_positional: bool,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} must be divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.vocab_size == 0 || self.max_len == 0 {
            return Err(Error::Config("vocab_size and max_len must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0,1)", self.dropout)));
        }
        Ok(())
    }
}

/// Variable-length encoding of one sequence, L x d_model.
#[derive(Debug, Clone)]
pub struct EncoderOutput<F> {
    pub hidden: Tensor<F>,
    /// Set when the input exceeded `max_len` and was tail-truncated.
    pub truncated: bool,
}

/// Pre-norm transformer block: `x + attn(ln1(x))` then `a + ffn(ln2(a))`.
#[derive(Debug, Clone)]
pub struct TransformerBlock {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub ffn: FeedForward,
}

#[derive(Debug, Clone)]
pub struct BlockCache<F> {
    ln1: LnCache<F>,
    attn: MhaCache<F>,
    drop_a: Option<Tensor<F>>,
    ln2: LnCache<F>,
    ffn: FfnCache<F>,
    drop_f: Option<Tensor<F>>,
}

impl TransformerBlock {
    pub fn new<F: Scalar>(
        ps: &mut ParamStore<F>,
        name: &str,
        d_model: usize,
        n_heads: usize,
        ffn_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(TransformerBlock {
            ln1: LayerNorm::new(ps, &format!("{name}.ln1"), d_model),
            attn: MultiHeadAttention::new(ps, &format!("{name}.attn"), d_model, n_heads, rng)?,
            ln2: LayerNorm::new(ps, &format!("{name}.ln2"), d_model),
            ffn: FeedForward::new(ps, &format!("{name}.ffn"), d_model, ffn_dim, rng),
        })
    }

    pub fn forward<F: Scalar>(
        &self,
        ps: &ParamStore<F>,
        x: &Tensor<F>,
        causal: bool,
        dropout: Dropout,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (Tensor<F>, BlockCache<F>) {
        let (n1, ln1c) = self.ln1.forward(ps, x);
        let (att, attc) = self.attn.forward(ps, &n1, &n1, causal);
        let (att_d, drop_a) = dropout.forward(&att, rng.as_deref_mut());
        let mut a = x.clone();
        a.add_assign(&att_d);
        let (n2, ln2c) = self.ln2.forward(ps, &a);
        let (ff, ffc) = self.ffn.forward(ps, &n2);
        let (ff_d, drop_f) = dropout.forward(&ff, rng);
        let mut y = a;
        y.add_assign(&ff_d);
        (
            y,
            BlockCache {
                ln1: ln1c,
                attn: attc,
                drop_a,
                ln2: ln2c,
                ffn: ffc,
                drop_f,
            },
        )
    }

    pub fn backward<F: Scalar>(
        &self,
        ps: &mut ParamStore<F>,
        cache: &BlockCache<F>,
        dy: &Tensor<F>,
    ) -> Tensor<F> {
        let dff = Dropout::backward(dy, &cache.drop_f);
        let dn2 = self.ffn.backward(ps, &cache.ffn, &dff);
        let mut da = dy.clone();
        da.add_assign(&self.ln2.backward(ps, &cache.ln2, &dn2));
        let datt = Dropout::backward(&da, &cache.drop_a);
        let (dn1_q, dn1_kv) = self.attn.backward(ps, &cache.attn, &datt);
        let mut dn1 = dn1_q;
        dn1.add_assign(&dn1_kv);
        let mut dx = da;
        dx.add_assign(&self.ln1.backward(ps, &cache.ln1, &dn1));
        dx
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub embed: Embedding,
    pub blocks: Vec<TransformerBlock>,
    pub cfg: EncoderConfig,
}

#[derive(Debug, Clone)]
pub struct EncoderCache<F> {
    pub ids: Vec<usize>,
    drop0: Option<Tensor<F>>,
    blocks: Vec<BlockCache<F>>,
}

impl Encoder {
    pub fn new<F: Scalar>(
        ps: &mut ParamStore<F>,
        name: &str,
        cfg: &EncoderConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let embed = Embedding::new(ps, &format!("{name}.embed"), cfg.vocab_size, cfg.d_model, rng);
        let mut blocks = Vec::with_capacity(cfg.n_layers);
        for i in 0..cfg.n_layers {
            blocks.push(TransformerBlock::new(
                ps,
                &format!("{name}.layer{i}"),
                cfg.d_model,
                cfg.n_heads,
                cfg.ffn_dim,
                rng,
            )?);
        }
        Ok(Encoder {
            embed,
            blocks,
            cfg: cfg.clone(),
        })
    }

    /// Encode a token sequence. Inputs longer than `max_len` keep their most
    /// recent tokens and set the `truncated` flag.
    pub fn forward<F: Scalar>(
        &self,
        ps: &ParamStore<F>,
        tokens: &[usize],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(EncoderOutput<F>, EncoderCache<F>)> {
        if tokens.is_empty() {
            return Err(Error::Argument("cannot encode an empty sequence".into()));
        }
        let truncated = tokens.len() > self.cfg.max_len;
        let ids: Vec<usize> = if truncated {
            tokens[tokens.len() - self.cfg.max_len..].to_vec()
        } else {
            tokens.to_vec()
        };
        let mut x = self.embed.forward(ps, &ids)?;
        if self.cfg.use_positional {
            add_positional(&mut x);
        }
        let dropout = Dropout {
            p: self.cfg.dropout,
        };
        let (mut x, drop0) = dropout.forward(&x, rng.as_deref_mut());
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (y, c) = b.forward(ps, &x, false, dropout, rng.as_deref_mut());
            x = y;
            caches.push(c);
        }
        x.check_finite("encoder forward")?;
        Ok((
            EncoderOutput {
                hidden: x,
                truncated,
            },
            EncoderCache {
                ids,
                drop0,
                blocks: caches,
            },
        ))
    }

    /// Accumulate gradients for one earlier forward pass.
    pub fn backward<F: Scalar>(
        &self,
        ps: &mut ParamStore<F>,
        cache: &EncoderCache<F>,
        d_hidden: &Tensor<F>,
    ) {
        let mut dx = d_hidden.clone();
        for (b, c) in self.blocks.iter().zip(cache.blocks.iter()).rev() {
            dx = b.backward(ps, c, &dx);
        }
        let demb = Dropout::backward(&dx, &cache.drop0);
        self.embed.backward(ps, &cache.ids, &demb);
    }
}

/// Sinusoidal positional encodings added in place.
pub fn add_positional<F: Scalar>(x: &mut Tensor<F>) {
    let (l, d) = (x.rows(), x.cols());
    for pos in 0..l {
        let row = x.row_mut(pos);
        for i in 0..d / 2 {
            let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / d as f64);
            let angle = pos as f64 * freq;
            row[2 * i] += F::of(angle.sin());
            row[2 * i + 1] += F::of(angle.cos());
        }
    }
}

/// Arithmetic mean over the length dimension.
pub fn avg_pool<F: Scalar>(enc: &Tensor<F>) -> Vec<F> {
    let (l, d) = (enc.rows(), enc.cols());
    let inv = F::one() / F::of(l as f64);
    let mut out = vec![F::zero(); d];
    for i in 0..l {
        for (o, &v) in out.iter_mut().zip(enc.row(i).iter()) {
            *o += v;
        }
    }
    for o in out.iter_mut() {
        *o *= inv;
    }
    out
}

/// Gradient of [`avg_pool`]: spreads `d_pooled / L` over every position.
pub fn avg_pool_backward<F: Scalar>(d_pooled: &[F], l: usize) -> Tensor<F> {
    let d = d_pooled.len();
    let inv = F::one() / F::of(l as f64);
    let mut out = Tensor::zeros(&[l, d]);
    for i in 0..l {
        for (o, &g) in out.row_mut(i).iter_mut().zip(d_pooled.iter()) {
            *o = g * inv;
        }
    }
    out
}

/// Deep copy of the live parameters; later training steps never touch it.
pub fn snapshot_frozen<F: Scalar>(live: &ParamStore<F>) -> ParamStore<F> {
    live.clone()
}
