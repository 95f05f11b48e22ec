//! Multi-head scaled dot-product attention with an explicit backward pass.

use super::ops::{linear_backward, linear_forward, softmax_backward_scaled, softmax_scaled};
use super::{NumericsError, Tensor2};

/// Borrowed projection weights. Every matrix is `(dim, dim)` and every bias has
/// length `dim`.
#[derive(Debug, Clone, Copy)]
pub struct AttentionWeights<'a> {
    pub wq: &'a Tensor2,
    pub bq: &'a [f64],
    pub wk: &'a Tensor2,
    pub bk: &'a [f64],
    pub wv: &'a Tensor2,
    pub bv: &'a [f64],
    pub wo: &'a Tensor2,
    pub bo: &'a [f64],
    pub heads: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    queries: Tensor2,
    keys: Tensor2,
    values: Tensor2,
    q: Tensor2,
    k: Tensor2,
    v: Tensor2,
    /// One `(tq, tk)` probability matrix per head.
    probs: Vec<Tensor2>,
    /// Concatenated head outputs before the output projection.
    mixed: Tensor2,
}

impl AttentionCache {
    pub fn probabilities(&self) -> &[Tensor2] {
        &self.probs
    }

    pub fn mixed_values(&self) -> &Tensor2 {
        &self.mixed
    }
}

#[derive(Debug, Clone)]
pub struct AttentionGrads {
    pub dqueries: Tensor2,
    pub dkeys: Tensor2,
    pub dvalues: Tensor2,
    pub dwq: Tensor2,
    pub dbq: Vec<f64>,
    pub dwk: Tensor2,
    pub dbk: Vec<f64>,
    pub dwv: Tensor2,
    pub dbv: Vec<f64>,
    pub dwo: Tensor2,
    pub dbo: Vec<f64>,
}

fn check(queries: &Tensor2, keys: &Tensor2, values: &Tensor2, w: &AttentionWeights) -> Result<usize, NumericsError> {
    let dim = w.wq.rows();
    if w.heads == 0 || !dim.is_multiple_of(w.heads) {
        return Err(NumericsError::InvalidHeadCount { dim, heads: w.heads });
    }
    for (name, t) in [("wq", w.wq), ("wk", w.wk), ("wv", w.wv), ("wo", w.wo)] {
        if t.shape() != (dim, dim) {
            return Err(NumericsError::DimensionMismatch(format!("{name} {:?}, expected ({dim}, {dim})", t.shape())));
        }
    }
    for (name, t) in [("queries", queries), ("keys", keys), ("values", values)] {
        if t.cols() != dim {
            return Err(NumericsError::DimensionMismatch(format!("{name} width {} != {dim}", t.cols())));
        }
    }
    if keys.rows() != values.rows() || keys.rows() == 0 {
        return Err(NumericsError::DimensionMismatch(format!(
            "{} keys vs {} values",
            keys.rows(),
            values.rows()
        )));
    }
    Ok(dim / w.heads)
}

pub fn multi_head_attention(
    queries: &Tensor2,
    keys: &Tensor2,
    values: &Tensor2,
    w: &AttentionWeights,
) -> Result<(Tensor2, AttentionCache), NumericsError> {
    let head_dim = check(queries, keys, values, w)?;
    let scale = 1.0 / (head_dim as f64).sqrt();
    let q = linear_forward(queries, w.wq, w.bq)?;
    let k = linear_forward(keys, w.wk, w.bk)?;
    let v = linear_forward(values, w.wv, w.bv)?;
    let mut mixed = Tensor2::zeros(queries.rows(), q.cols());
    let mut probs = Vec::with_capacity(w.heads);
    for h in 0..w.heads {
        let start = h * head_dim;
        let (qh, kh, vh) = (q.columns(start, head_dim), k.columns(start, head_dim), v.columns(start, head_dim));
        let scores = qh.matmul_t(&kh)?;
        let mut p = Tensor2::zeros(scores.rows(), scores.cols());
        for r in 0..scores.rows() {
            p.row_mut(r).copy_from_slice(&softmax_scaled(scores.row(r), scale));
        }
        mixed.set_columns(start, &p.matmul(&vh)?);
        probs.push(p);
    }
    let out = linear_forward(&mixed, w.wo, w.bo)?;
    let cache = AttentionCache {
        queries: queries.clone(),
        keys: keys.clone(),
        values: values.clone(),
        q,
        k,
        v,
        probs,
        mixed,
    };
    Ok((out, cache))
}

pub fn multi_head_attention_backward(
    cache: &AttentionCache,
    w: &AttentionWeights,
    dout: &Tensor2,
) -> Result<AttentionGrads, NumericsError> {
    let head_dim = check(&cache.queries, &cache.keys, &cache.values, w)?;
    let scale = 1.0 / (head_dim as f64).sqrt();
    let out_grads = linear_backward(&cache.mixed, w.wo, dout)?;
    let dmixed = out_grads.dx;
    let mut dq = Tensor2::zeros(cache.q.rows(), cache.q.cols());
    let mut dk = Tensor2::zeros(cache.k.rows(), cache.k.cols());
    let mut dv = Tensor2::zeros(cache.v.rows(), cache.v.cols());
    for (h, p) in cache.probs.iter().enumerate() {
        let start = h * head_dim;
        let (qh, kh, vh) = (
            cache.q.columns(start, head_dim),
            cache.k.columns(start, head_dim),
            cache.v.columns(start, head_dim),
        );
        let dmh = dmixed.columns(start, head_dim);
        let dp = dmh.matmul_t(&vh)?;
        dv.set_columns(start, &p.t_matmul(&dmh)?);
        let mut dscores = Tensor2::zeros(p.rows(), p.cols());
        for r in 0..p.rows() {
            dscores.row_mut(r).copy_from_slice(&softmax_backward_scaled(p.row(r), dp.row(r), scale));
        }
        dq.set_columns(start, &dscores.matmul(&kh)?);
        dk.set_columns(start, &dscores.t_matmul(&qh)?);
    }
    let gq = linear_backward(&cache.queries, w.wq, &dq)?;
    let gk = linear_backward(&cache.keys, w.wk, &dk)?;
    let gv = linear_backward(&cache.values, w.wv, &dv)?;
    Ok(AttentionGrads {
        dqueries: gq.dx,
        dkeys: gk.dx,
        dvalues: gv.dx,
        dwq: gq.dw,
        dbq: gq.db,
        dwk: gk.dw,
        dbk: gk.db,
        dwv: gv.dw,
        dbv: gv.db,
        dwo: out_grads.dw,
        dbo: out_grads.db,
    })
}
