//! Network building blocks with explicit forward caches and hand-derived
//! backward passes. Each backward accumulates parameter gradients into the
//! store and returns the gradient w.r.t. its inputs.

use crate::error::{Error, Result};
use crate::ops::{softmax_backward_row, softmax_row};
use crate::param::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::{axpy, dot, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Xavier-uniform initialized matrix.
pub fn xavier<F: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<F> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let data: Vec<F> = (0..rows * cols)
        .map(|_| F::of(rng.gen_range(-a..a)))
        .collect();
    Tensor::from_vec(&[rows, cols], data).expect("xavier shape")
}

/// Affine map `y = x Wᵀ + b` with `W` of shape (out, in).
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new<F: Scalar>(
        ps: &mut ParamStore<F>,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = ps.add(format!("{name}.w"), xavier(rng, d_out, d_in));
        let b = ps.add(format!("{name}.b"), Tensor::zeros(&[d_out]));
        Linear { w, b, d_in, d_out }
    }

    pub fn forward<F: Scalar>(&self, ps: &ParamStore<F>, x: &Tensor<F>) -> Tensor<F> {
        let mut y = x.matmul_transb(ps.value(self.w)).expect("linear shapes");
        let b = ps.value(self.b).data();
        for i in 0..y.rows() {
            for (yv, &bv) in y.row_mut(i).iter_mut().zip(b.iter()) {
                *yv += bv;
            }
        }
        y
    }

    /// Accumulates dW and db, returns dx.
    pub fn backward<F: Scalar>(
        &self,
        ps: &mut ParamStore<F>,
        x: &Tensor<F>,
        dy: &Tensor<F>,
    ) -> Tensor<F> {
        let dw = dy.transa_matmul(x).expect("linear dW");
        ps.grad_mut(self.w).add_assign(&dw);
        {
            let db = ps.grad_mut(self.b).data_mut();
            for i in 0..dy.rows() {
                for (g, &d) in db.iter_mut().zip(dy.row(i).iter()) {
                    *g += d;
                }
            }
        }
        dy.matmul(ps.value(self.w)).expect("linear dx")
    }
}

/// Per-row layer normalization with learned gain and bias.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub g: ParamId,
    pub b: ParamId,
    pub dim: usize,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct LnCache<F> {
    x: Tensor<F>,
    mean: Vec<F>,
    rstd: Vec<F>,
}

impl LayerNorm {
    pub fn new<F: Scalar>(ps: &mut ParamStore<F>, name: &str, dim: usize) -> Self {
        let g = ps.add(format!("{name}.g"), Tensor::filled(&[dim], F::one()));
        let b = ps.add(format!("{name}.b"), Tensor::zeros(&[dim]));
        LayerNorm {
            g,
            b,
            dim,
            eps: 1e-5,
        }
    }

    pub fn forward<F: Scalar>(
        &self,
        ps: &ParamStore<F>,
        x: &Tensor<F>,
    ) -> (Tensor<F>, LnCache<F>) {
        let rows = x.rows();
        let d = F::of(self.dim as f64);
        let g = ps.value(self.g).data();
        let b = ps.value(self.b).data();
        let mut y = x.clone();
        let mut mean = Vec::with_capacity(rows);
        let mut rstd = Vec::with_capacity(rows);
        for i in 0..rows {
            let row = y.row_mut(i);
            let mu = row.iter().copied().sum::<F>() / d;
            let mut var = F::zero();
            for &v in row.iter() {
                let c = v - mu;
                var += c * c;
            }
            var /= d;
            let rs = F::one() / (var + F::of(self.eps)).sqrt();
            for (j, v) in row.iter_mut().enumerate() {
                *v = g[j] * ((*v - mu) * rs) + b[j];
            }
            mean.push(mu);
            rstd.push(rs);
        }
        (
            y,
            LnCache {
                x: x.clone(),
                mean,
                rstd,
            },
        )
    }

    pub fn backward<F: Scalar>(
        &self,
        ps: &mut ParamStore<F>,
        cache: &LnCache<F>,
        dy: &Tensor<F>,
    ) -> Tensor<F> {
        let rows = dy.rows();
        let d = F::of(self.dim as f64);
        let mut dx = Tensor::zeros(dy.shape());
        let g_vals: Vec<F> = ps.value(self.g).data().to_vec();
        for i in 0..rows {
            let x_row = cache.x.row(i);
            let dy_row = dy.row(i);
            let mu = cache.mean[i];
            let rs = cache.rstd[i];
            let xhat: Vec<F> = x_row.iter().map(|&v| (v - mu) * rs).collect();
            {
                let dg = ps.grad_mut(self.g).data_mut();
                for ((gd, &dyv), &xh) in dg.iter_mut().zip(dy_row.iter()).zip(xhat.iter()) {
                    *gd += dyv * xh;
                }
            }
            {
                let db = ps.grad_mut(self.b).data_mut();
                for (bd, &dyv) in db.iter_mut().zip(dy_row.iter()) {
                    *bd += dyv;
                }
            }
            let dxhat: Vec<F> = dy_row
                .iter()
                .zip(g_vals.iter())
                .map(|(&dyv, &gv)| dyv * gv)
                .collect();
            let m1 = dxhat.iter().copied().sum::<F>() / d;
            let m2 = dxhat
                .iter()
                .zip(xhat.iter())
                .map(|(&a, &b)| a * b)
                .sum::<F>()
                / d;
            let dx_row = dx.row_mut(i);
            for ((o, &dxh), &xh) in dx_row.iter_mut().zip(dxhat.iter()).zip(xhat.iter()) {
                *o = rs * (dxh - m1 - xh * m2);
            }
        }
        dx
    }
}

/// Token embedding table of shape (vocab, dim).
#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamId,
    pub dim: usize,
    pub vocab: usize,
}

impl Embedding {
    pub fn new<F: Scalar>(
        ps: &mut ParamStore<F>,
        name: &str,
        vocab: usize,
        dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let table = ps.add(format!("{name}.table"), xavier(rng, vocab, dim));
        Embedding { table, dim, vocab }
    }

    pub fn forward<F: Scalar>(&self, ps: &ParamStore<F>, ids: &[usize]) -> Result<Tensor<F>> {
        let table = ps.value(self.table);
        let mut out = Tensor::zeros(&[ids.len(), self.dim]);
        for (i, &id) in ids.iter().enumerate() {
            if id >= self.vocab {
                return Err(Error::Argument(format!(
                    "token id {id} out of range for vocab {}",
                    self.vocab
                )));
            }
            out.row_mut(i).copy_from_slice(table.row(id));
        }
        Ok(out)
    }

    pub fn backward<F: Scalar>(&self, ps: &mut ParamStore<F>, ids: &[usize], dy: &Tensor<F>) {
        let grad = ps.grad_mut(self.table);
        for (i, &id) in ids.iter().enumerate() {
            axpy(F::one(), dy.row(i), grad.row_mut(id));
        }
    }
}

/// Standard multi-head scaled dot-product attention.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
    pub d_model: usize,
}

#[derive(Debug, Clone)]
pub struct MhaCache<F> {
    q_in: Tensor<F>,
    kv_in: Tensor<F>,
    q: Tensor<F>,
    k: Tensor<F>,
    v: Tensor<F>,
    /// Post-softmax attention per head, each (Lq x Lk).
    pub attn: Vec<Tensor<F>>,
    ctx: Tensor<F>,
}

impl MultiHeadAttention {
    pub fn new<F: Scalar>(
        ps: &mut ParamStore<F>,
        name: &str,
        d_model: usize,
        heads: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if heads == 0 || d_model % heads != 0 {
            return Err(Error::Config(format!(
                "d_model {d_model} not divisible by {heads} heads"
            )));
        }
        Ok(MultiHeadAttention {
            wq: Linear::new(ps, &format!("{name}.wq"), d_model, d_model, rng),
            wk: Linear::new(ps, &format!("{name}.wk"), d_model, d_model, rng),
            wv: Linear::new(ps, &format!("{name}.wv"), d_model, d_model, rng),
            wo: Linear::new(ps, &format!("{name}.wo"), d_model, d_model, rng),
            heads,
            d_model,
        })
    }

    pub fn forward<F: Scalar>(
        &self,
        ps: &ParamStore<F>,
        q_in: &Tensor<F>,
        kv_in: &Tensor<F>,
        causal: bool,
    ) -> (Tensor<F>, MhaCache<F>) {
        let q = self.wq.forward(ps, q_in);
        let k = self.wk.forward(ps, kv_in);
        let v = self.wv.forward(ps, kv_in);
        let (lq, lk) = (q.rows(), k.rows());
        let dh = self.d_model / self.heads;
        let scale = F::one() / F::of(dh as f64).sqrt();
        let mut attn = Vec::with_capacity(self.heads);
        let mut ctx = Tensor::zeros(&[lq, self.d_model]);
        for h in 0..self.heads {
            let lo = h * dh;
            let hi = lo + dh;
            let mut a = Tensor::zeros(&[lq, lk]);
            for i in 0..lq {
                let q_h = &q.row(i)[lo..hi];
                let row = a.row_mut(i);
                for (j, slot) in row.iter_mut().enumerate() {
                    if causal && j > i {
                        *slot = F::neg_infinity();
                    } else {
                        *slot = dot(q_h, &k.row(j)[lo..hi]) * scale;
                    }
                }
                softmax_row(row);
            }
            for i in 0..lq {
                let a_row = a.row(i);
                // Split so ctx row borrow does not alias v.
                let mut acc = vec![F::zero(); dh];
                for (j, &w) in a_row.iter().enumerate() {
                    if w != F::zero() {
                        axpy(w, &v.row(j)[lo..hi], &mut acc);
                    }
                }
                ctx.row_mut(i)[lo..hi].copy_from_slice(&acc);
            }
            attn.push(a);
        }
        let y = self.wo.forward(ps, &ctx);
        (
            y,
            MhaCache {
                q_in: q_in.clone(),
                kv_in: kv_in.clone(),
                q,
                k,
                v,
                attn,
                ctx,
            },
        )
    }

    /// Returns (d_q_in, d_kv_in). For self-attention the caller adds them.
    pub fn backward<F: Scalar>(
        &self,
        ps: &mut ParamStore<F>,
        cache: &MhaCache<F>,
        dy: &Tensor<F>,
    ) -> (Tensor<F>, Tensor<F>) {
        let dctx = self.wo.backward(ps, &cache.ctx, dy);
        let (lq, lk) = (cache.q.rows(), cache.k.rows());
        let dh = self.d_model / self.heads;
        let scale = F::one() / F::of(dh as f64).sqrt();
        let mut dq = Tensor::zeros(&[lq, self.d_model]);
        let mut dk = Tensor::zeros(&[lk, self.d_model]);
        let mut dv = Tensor::zeros(&[lk, self.d_model]);
        for h in 0..self.heads {
            let lo = h * dh;
            let hi = lo + dh;
            let a = &cache.attn[h];
            for i in 0..lq {
                let a_row = a.row(i);
                let dctx_h = &dctx.row(i)[lo..hi];
                // dattn and dv.
                let mut da = vec![F::zero(); lk];
                for (j, daj) in da.iter_mut().enumerate() {
                    *daj = dot(dctx_h, &cache.v.row(j)[lo..hi]);
                }
                for (j, &w) in a_row.iter().enumerate() {
                    if w != F::zero() {
                        axpy(w, dctx_h, &mut dv.row_mut(j)[lo..hi]);
                    }
                }
                // Through the softmax; masked slots have a == 0 so ds == 0.
                let ds = softmax_backward_row(a_row, &da);
                let q_h: Vec<F> = cache.q.row(i)[lo..hi].to_vec();
                let mut dq_acc = vec![F::zero(); dh];
                for (j, &dsj) in ds.iter().enumerate() {
                    if dsj != F::zero() {
                        axpy(dsj * scale, &cache.k.row(j)[lo..hi], &mut dq_acc);
                        axpy(dsj * scale, &q_h, &mut dk.row_mut(j)[lo..hi]);
                    }
                }
                axpy(F::one(), &dq_acc, &mut dq.row_mut(i)[lo..hi]);
            }
        }
        let dq_in = self.wq.backward(ps, &cache.q_in, &dq);
        let mut dkv_in = self.wk.backward(ps, &cache.kv_in, &dk);
        dkv_in.add_assign(&self.wv.backward(ps, &cache.kv_in, &dv));
        (dq_in, dkv_in)
    }
}

/// Two-layer feed-forward with ReLU.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub w1: Linear,
    pub w2: Linear,
}

#[derive(Debug, Clone)]
pub struct FfnCache<F> {
    x: Tensor<F>,
    h_pre: Tensor<F>,
    h: Tensor<F>,
}

impl FeedForward {
    pub fn new<F: Scalar>(
        ps: &mut ParamStore<F>,
        name: &str,
        d_model: usize,
        d_ffn: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        FeedForward {
            w1: Linear::new(ps, &format!("{name}.w1"), d_model, d_ffn, rng),
            w2: Linear::new(ps, &format!("{name}.w2"), d_ffn, d_model, rng),
        }
    }

    pub fn forward<F: Scalar>(&self, ps: &ParamStore<F>, x: &Tensor<F>) -> (Tensor<F>, FfnCache<F>) {
        let h_pre = self.w1.forward(ps, x);
        let h = h_pre.map(|v| if v > F::zero() { v } else { F::zero() });
        let y = self.w2.forward(ps, &h);
        (
            y,
            FfnCache {
                x: x.clone(),
                h_pre,
                h,
            },
        )
    }

    pub fn backward<F: Scalar>(
        &self,
        ps: &mut ParamStore<F>,
        cache: &FfnCache<F>,
        dy: &Tensor<F>,
    ) -> Tensor<F> {
        let dh = self.w2.backward(ps, &cache.h, dy);
        let mut dh_pre = dh;
        for (g, &pre) in dh_pre.data_mut().iter_mut().zip(cache.h_pre.data().iter()) {
            if pre <= F::zero() {
                *g = F::zero();
            }
        }
        self.w1.backward(ps, &cache.x, &dh_pre)
    }
}

/// Inverted dropout. `None` rng or p == 0 means identity (evaluation mode).
#[derive(Debug, Clone, Copy)]
pub struct Dropout {
    pub p: f64,
}

impl Dropout {
    pub fn forward<F: Scalar>(
        &self,
        x: &Tensor<F>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> (Tensor<F>, Option<Tensor<F>>) {
        match rng {
            Some(r) if self.p > 0.0 => {
                let keep = 1.0 - self.p;
                let inv = F::of(1.0 / keep);
                let mut mask = Tensor::zeros(x.shape());
                for m in mask.data_mut() {
                    if r.gen_range(0.0..1.0) < keep {
                        *m = inv;
                    }
                }
                let mut y = x.clone();
                for (yv, &m) in y.data_mut().iter_mut().zip(mask.data().iter()) {
                    *yv *= m;
                }
                (y, Some(mask))
            }
            _ => (x.clone(), None),
        }
    }

    pub fn backward<F: Scalar>(dy: &Tensor<F>, mask: &Option<Tensor<F>>) -> Tensor<F> {
        match mask {
            Some(m) => {
                let mut dx = dy.clone();
                for (g, &mv) in dx.data_mut().iter_mut().zip(m.data().iter()) {
                    *g *= mv;
                }
                dx
            }
            None => dy.clone(),
        }
    }
}

/// Standalone multi-head attention over given q/kv matrices, the spec-level
/// building block. Fails when the model width is not divisible by `heads`.
pub fn attention_block<F: Scalar>(
    ps: &ParamStore<F>,
    mha: &MultiHeadAttention,
    q: &Tensor<F>,
    kv: &Tensor<F>,
) -> Result<Tensor<F>> {
    if q.cols() != mha.d_model || kv.cols() != mha.d_model {
        return Err(Error::shape(
            "attention_block",
            format!(
                "inputs {:?}/{:?} vs d_model {}",
                q.shape(),
                kv.shape(),
                mha.d_model
            ),
        ));
    }
    Ok(mha.forward(ps, q, kv, false).0)
}
