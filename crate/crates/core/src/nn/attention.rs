use ndarray::{s, Array2, ArrayView2};

use super::linear::Linear;
use super::ops::{softmax_rows, softmax_rows_backward};
use super::params::{Grads, Init, ParamStore};
use crate::scalar::Scalar;

/// Multi-head scaled dot-product self-attention over all tokens.
#[derive(Debug, Clone)]
pub struct Attention {
    pub qkv: Linear,
    pub out: Linear,
    pub dim: usize,
    pub heads: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache<S> {
    x: Array2<S>,
    qkv: Array2<S>,
    /// Per-head N×N attention probabilities.
    probs: Vec<Array2<S>>,
    context: Array2<S>,
}

impl<S> AttentionCache<S> {
    pub fn probs(&self) -> &[Array2<S>] {
        &self.probs
    }
}

impl Attention {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        init: &mut Init,
        name: &str,
        dim: usize,
        heads: usize,
    ) -> Self {
        assert!(heads > 0 && dim % heads == 0, "dim {dim} not divisible by {heads} heads");
        Attention {
            qkv: Linear::new(store, init, &format!("{name}.qkv"), dim, 3 * dim),
            out: Linear::new(store, init, &format!("{name}.out"), dim, dim),
            dim,
            heads,
        }
    }

    fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    fn q_cols(&self, h: usize) -> std::ops::Range<usize> {
        h * self.head_dim()..(h + 1) * self.head_dim()
    }

    pub fn forward<S: Scalar>(
        &self,
        p: &ParamStore<S>,
        x: ArrayView2<'_, S>,
    ) -> (Array2<S>, AttentionCache<S>) {
        let n = x.nrows();
        let c = self.dim;
        let scale = S::one() / S::from_usize_lossy(self.head_dim()).sqrt();
        let qkv = self.qkv.forward(p, x);
        let mut context = Array2::zeros((n, c));
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let r = self.q_cols(h);
            let q = qkv.slice(s![.., r.clone()]);
            let k = qkv.slice(s![.., c + r.start..c + r.end]);
            let v = qkv.slice(s![.., 2 * c + r.start..2 * c + r.end]);
            let a = softmax_rows((&q * scale).dot(&k.t()));
            context.slice_mut(s![.., r]).assign(&a.dot(&v));
            probs.push(a);
        }
        let y = self.out.forward(p, context.view());
        (
            y,
            AttentionCache {
                x: x.to_owned(),
                qkv,
                probs,
                context,
            },
        )
    }

    pub fn backward<S: Scalar>(
        &self,
        p: &ParamStore<S>,
        cache: &AttentionCache<S>,
        dy: ArrayView2<'_, S>,
        g: &mut Grads<S>,
    ) -> Array2<S> {
        let c = self.dim;
        let scale = S::one() / S::from_usize_lossy(self.head_dim()).sqrt();
        let dcontext = self.out.backward(p, cache.context.view(), dy, g);
        let mut dqkv = Array2::zeros(cache.qkv.raw_dim());
        for h in 0..self.heads {
            let r = self.q_cols(h);
            let (qr, kr, vr) = (
                r.clone(),
                c + r.start..c + r.end,
                2 * c + r.start..2 * c + r.end,
            );
            let q = cache.qkv.slice(s![.., qr.clone()]);
            let k = cache.qkv.slice(s![.., kr.clone()]);
            let v = cache.qkv.slice(s![.., vr.clone()]);
            let a = &cache.probs[h];
            let dout = dcontext.slice(s![.., r]);
            let da = dout.dot(&v.t());
            dqkv.slice_mut(s![.., vr]).assign(&a.t().dot(&dout));
            let ds = softmax_rows_backward(a.view(), da);
            dqkv.slice_mut(s![.., qr]).assign(&(ds.dot(&k) * scale));
            dqkv.slice_mut(s![.., kr]).assign(&(ds.t().dot(&q) * scale));
        }
        self.qkv.backward(p, cache.x.view(), dqkv.view(), g)
    }
}
