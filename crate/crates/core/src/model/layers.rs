//! Parameterised layers bound to a [`ParamStore`]. Forward passes borrow the
//! store immutably and return a cache; backward passes accumulate parameter
//! gradients into the store and return the input gradient.

use rand::Rng;

use crate::numerics::{
    gelu, gelu_grad, layer_norm, layer_norm_backward, linear_backward, linear_forward, multi_head_attention,
    multi_head_attention_backward, AttentionCache, AttentionWeights, LayerNormCache, NumericsError, ParamId,
    ParamStore, Tensor2,
};

/// Weights drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, rounded to f32 so
/// freshly initialised models survive a checkpoint round trip unchanged.
pub(crate) fn init_matrix<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor2 {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor2::from_fn(fan_in, fan_out, |_, _| rng.random_range(-bound..bound) as f32 as f64)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, name: &str, fan_in: usize, fan_out: usize) -> Result<Self, NumericsError> {
        let w = store.add(format!("{name}.w"), init_matrix(rng, fan_in, fan_out))?;
        let b = store.add(format!("{name}.b"), Tensor2::zeros(1, fan_out))?;
        Ok(Linear { w, b })
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor2) -> Result<Tensor2, NumericsError> {
        linear_forward(x, store.value(self.w), store.value(self.b).data())
    }

    pub fn backward(&self, store: &mut ParamStore, x: &Tensor2, dy: &Tensor2) -> Result<Tensor2, NumericsError> {
        let g = linear_backward(x, store.value(self.w), dy)?;
        store.accumulate(self.w, &g.dw)?;
        store.accumulate_slice(self.b, &g.db)?;
        Ok(g.dx)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Norm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl Norm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self, NumericsError> {
        let gain = store.add(format!("{name}.gain"), Tensor2::from_fn(1, dim, |_, _| 1.0))?;
        let bias = store.add(format!("{name}.bias"), Tensor2::zeros(1, dim))?;
        Ok(Norm { gain, bias })
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor2) -> Result<(Tensor2, LayerNormCache), NumericsError> {
        layer_norm(x, store.value(self.gain).data(), store.value(self.bias).data())
    }

    pub fn backward(&self, store: &mut ParamStore, cache: &LayerNormCache, dy: &Tensor2) -> Result<Tensor2, NumericsError> {
        let g = layer_norm_backward(cache, store.value(self.gain).data(), dy)?;
        store.accumulate_slice(self.gain, &g.dgain)?;
        store.accumulate_slice(self.bias, &g.dbias)?;
        Ok(g.dx)
    }
}

/// Linear layers with GELU between them (none after the last).
#[derive(Debug, Clone)]
pub(crate) struct Mlp {
    pub layers: Vec<Linear>,
}

#[derive(Debug, Clone)]
pub(crate) struct MlpCache {
    /// Input to each linear layer.
    inputs: Vec<Tensor2>,
    /// Pre-activation output of each hidden layer.
    hidden: Vec<Tensor2>,
}

impl Mlp {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, name: &str, input: usize, dims: &[usize]) -> Result<Self, NumericsError> {
        let mut layers = Vec::with_capacity(dims.len());
        let mut fan_in = input;
        for (i, &d) in dims.iter().enumerate() {
            layers.push(Linear::new(store, rng, &format!("{name}.{i}"), fan_in, d)?);
            fan_in = d;
        }
        Ok(Mlp { layers })
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor2) -> Result<(Tensor2, MlpCache), NumericsError> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut hidden = Vec::with_capacity(self.layers.len().saturating_sub(1));
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let y = layer.forward(store, &cur)?;
            inputs.push(cur);
            if i + 1 < self.layers.len() {
                let mut act = y.clone();
                act.data_mut().iter_mut().for_each(|v| *v = gelu(*v));
                hidden.push(y);
                cur = act;
            } else {
                cur = y;
            }
        }
        Ok((cur, MlpCache { inputs, hidden }))
    }

    pub fn backward(&self, store: &mut ParamStore, cache: &MlpCache, dy: &Tensor2) -> Result<Tensor2, NumericsError> {
        let mut grad = dy.clone();
        for i in (0..self.layers.len()).rev() {
            if i + 1 < self.layers.len() {
                for (g, &pre) in grad.data_mut().iter_mut().zip(cache.hidden[i].data()) {
                    *g *= gelu_grad(pre);
                }
            }
            grad = self.layers[i].backward(store, &cache.inputs[i], &grad)?;
        }
        Ok(grad)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

impl Attention {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, name: &str, dim: usize, heads: usize) -> Result<Self, NumericsError> {
        Ok(Attention {
            q: Linear::new(store, rng, &format!("{name}.q"), dim, dim)?,
            k: Linear::new(store, rng, &format!("{name}.k"), dim, dim)?,
            v: Linear::new(store, rng, &format!("{name}.v"), dim, dim)?,
            o: Linear::new(store, rng, &format!("{name}.o"), dim, dim)?,
            heads,
        })
    }

    fn weights<'a>(&self, store: &'a ParamStore) -> AttentionWeights<'a> {
        AttentionWeights {
            wq: store.value(self.q.w),
            bq: store.value(self.q.b).data(),
            wk: store.value(self.k.w),
            bk: store.value(self.k.b).data(),
            wv: store.value(self.v.w),
            bv: store.value(self.v.b).data(),
            wo: store.value(self.o.w),
            bo: store.value(self.o.b).data(),
            heads: self.heads,
        }
    }

    /// Self-attention over the rows of `x`.
    pub fn forward(&self, store: &ParamStore, x: &Tensor2) -> Result<(Tensor2, AttentionCache), NumericsError> {
        multi_head_attention(x, x, x, &self.weights(store))
    }

    pub fn backward(&self, store: &mut ParamStore, cache: &AttentionCache, dy: &Tensor2) -> Result<Tensor2, NumericsError> {
        let g = multi_head_attention_backward(cache, &self.weights(store), dy)?;
        store.accumulate(self.q.w, &g.dwq)?;
        store.accumulate_slice(self.q.b, &g.dbq)?;
        store.accumulate(self.k.w, &g.dwk)?;
        store.accumulate_slice(self.k.b, &g.dbk)?;
        store.accumulate(self.v.w, &g.dwv)?;
        store.accumulate_slice(self.v.b, &g.dbv)?;
        store.accumulate(self.o.w, &g.dwo)?;
        store.accumulate_slice(self.o.b, &g.dbo)?;
        let mut dx = g.dqueries;
        dx.add_assign(&g.dkeys)?;
        dx.add_assign(&g.dvalues)?;
        Ok(dx)
    }
}

/// Pre-norm transformer block: `h = x + Attn(LN(x))`, `y = h + MLP(LN(h))`.
#[derive(Debug, Clone)]
pub(crate) struct FusionBlock {
    pub norm1: Norm,
    pub attn: Attention,
    pub norm2: Norm,
    pub mlp: Mlp,
}

#[derive(Debug, Clone)]
pub(crate) struct FusionBlockCache {
    norm1: LayerNormCache,
    attn: AttentionCache,
    norm2: LayerNormCache,
    mlp: MlpCache,
}

impl FusionBlock {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, name: &str, dim: usize, heads: usize, hidden: usize) -> Result<Self, NumericsError> {
        Ok(FusionBlock {
            norm1: Norm::new(store, &format!("{name}.norm1"), dim)?,
            attn: Attention::new(store, rng, &format!("{name}.attn"), dim, heads)?,
            norm2: Norm::new(store, &format!("{name}.norm2"), dim)?,
            mlp: Mlp::new(store, rng, &format!("{name}.mlp"), dim, &[hidden, dim])?,
        })
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor2) -> Result<(Tensor2, FusionBlockCache), NumericsError> {
        let (n1, norm1) = self.norm1.forward(store, x)?;
        let (a, attn) = self.attn.forward(store, &n1)?;
        let h = x.add(&a)?;
        let (n2, norm2) = self.norm2.forward(store, &h)?;
        let (m, mlp) = self.mlp.forward(store, &n2)?;
        Ok((h.add(&m)?, FusionBlockCache { norm1, attn, norm2, mlp }))
    }

    pub fn backward(&self, store: &mut ParamStore, cache: &FusionBlockCache, dy: &Tensor2) -> Result<Tensor2, NumericsError> {
        let dn2 = self.mlp.backward(store, &cache.mlp, dy)?;
        let mut dh = self.norm2.backward(store, &cache.norm2, &dn2)?;
        dh.add_assign(dy)?;
        let dn1 = self.attn.backward(store, &cache.attn, &dh)?;
        let mut dx = self.norm1.backward(store, &cache.norm1, &dn1)?;
        dx.add_assign(&dh)?;
        Ok(dx)
    }
}
