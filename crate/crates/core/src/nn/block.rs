use ndarray::{Array2, ArrayView2};

use super::attention::{Attention, AttentionCache};
use super::layernorm::{LayerNorm, LayerNormCache};
use super::linear::Linear;
use super::ops::{all_finite, gelu, gelu_grad};
use super::params::{Grads, Init, ParamStore};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Pre-norm transformer block:
/// `x1 = x + MHSA(LN1(x))`, `y = x1 + FFN(LN2(x1))`, FFN = Linear → GELU → Linear.
#[derive(Debug, Clone)]
pub struct Block {
    pub ln1: LayerNorm,
    pub attn: Attention,
    pub ln2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Debug, Clone)]
pub struct BlockCache<S> {
    ln1: LayerNormCache<S>,
    pub attn: AttentionCache<S>,
    ln2: LayerNormCache<S>,
    h2: Array2<S>,
    pre_act: Array2<S>,
    act: Array2<S>,
}

impl Block {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        init: &mut Init,
        name: &str,
        dim: usize,
        heads: usize,
        ffn_ratio: usize,
    ) -> Self {
        Block {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), dim),
            attn: Attention::new(store, init, &format!("{name}.attn"), dim, heads),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim),
            fc1: Linear::new(store, init, &format!("{name}.fc1"), dim, ffn_ratio * dim),
            fc2: Linear::new(store, init, &format!("{name}.fc2"), ffn_ratio * dim, dim),
        }
    }

    pub fn forward<S: Scalar>(
        &self,
        p: &ParamStore<S>,
        x: ArrayView2<'_, S>,
    ) -> (Array2<S>, BlockCache<S>) {
        let (h1, ln1) = self.ln1.forward(p, x);
        let (a, attn) = self.attn.forward(p, h1.view());
        let x1 = &x + &a;
        let (h2, ln2) = self.ln2.forward(p, x1.view());
        let pre_act = self.fc1.forward(p, h2.view());
        let act = pre_act.mapv(gelu);
        let f = self.fc2.forward(p, act.view());
        let y = x1 + f;
        (
            y,
            BlockCache {
                ln1,
                attn,
                ln2,
                h2,
                pre_act,
                act,
            },
        )
    }

    pub fn backward<S: Scalar>(
        &self,
        p: &ParamStore<S>,
        cache: &BlockCache<S>,
        dy: ArrayView2<'_, S>,
        g: &mut Grads<S>,
    ) -> Array2<S> {
        let dact = self.fc2.backward(p, cache.act.view(), dy, g);
        let mut dpre = dact;
        dpre.zip_mut_with(&cache.pre_act, |d, &z| *d *= gelu_grad(z));
        let dh2 = self.fc1.backward(p, cache.h2.view(), dpre.view(), g);
        let mut dx1 = self.ln2.backward(p, &cache.ln2, dh2.view(), g);
        dx1 += &dy;
        let dh1 = self.attn.backward(p, &cache.attn, dx1.view(), g);
        let mut dx = self.ln1.backward(p, &cache.ln1, dh1.view(), g);
        dx += &dx1;
        dx
    }
}

/// A sequence of blocks at one width.
#[derive(Debug, Clone)]
pub struct Stack {
    pub blocks: Vec<Block>,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct StackCache<S> {
    pub blocks: Vec<BlockCache<S>>,
}

impl Stack {
    #[allow(clippy::too_many_arguments)]
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        init: &mut Init,
        name: &str,
        depth: usize,
        dim: usize,
        heads: usize,
        ffn_ratio: usize,
    ) -> Self {
        let blocks = (0..depth)
            .map(|i| Block::new(store, init, &format!("{name}.blocks.{i}"), dim, heads, ffn_ratio))
            .collect();
        Stack { blocks, dim }
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    pub fn forward<S: Scalar>(
        &self,
        p: &ParamStore<S>,
        x: ArrayView2<'_, S>,
    ) -> Result<(Array2<S>, StackCache<S>)> {
        if x.ncols() != self.dim {
            return Err(Error::Shape(format!(
                "token width {} but stack expects {}",
                x.ncols(),
                self.dim
            )));
        }
        let mut h = x.to_owned();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for (i, block) in self.blocks.iter().enumerate() {
            let (y, c) = block.forward(p, h.view());
            if !all_finite(y.iter()) {
                return Err(Error::NonFinite(format!("activations after block {i}")));
            }
            h = y;
            caches.push(c);
        }
        Ok((h, StackCache { blocks: caches }))
    }

    pub fn backward<S: Scalar>(
        &self,
        p: &ParamStore<S>,
        cache: &StackCache<S>,
        dy: ArrayView2<'_, S>,
        g: &mut Grads<S>,
    ) -> Array2<S> {
        let mut d = dy.to_owned();
        for (block, c) in self.blocks.iter().zip(&cache.blocks).rev() {
            d = block.backward(p, c, d.view(), g);
        }
        d
    }
}
