//! The ViT trunk: pre-norm transformer blocks over every token.

use ndarray::{Array2, ArrayView2};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::{Grads, Init, ParamStore, Stack, StackCache};
use crate::scalar::Scalar;
use crate::tokenizer::TokenGrid;

#[derive(Debug, Clone)]
pub struct Encoder {
    pub stack: Stack,
}

pub type EncoderCache<S> = StackCache<S>;

impl Encoder {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, init: &mut Init, cfg: &ModelConfig) -> Self {
        Encoder {
            stack: Stack::new(
                store,
                init,
                "encoder",
                cfg.encoder_depth,
                cfg.embed_dim,
                cfg.num_heads,
                cfg.ffn_ratio,
            ),
        }
    }

    pub fn depth(&self) -> usize {
        self.stack.depth()
    }

    /// F_o: same shape as the input grid.
    pub fn encode<S: Scalar>(
        &self,
        p: &ParamStore<S>,
        tokens: &TokenGrid<S>,
    ) -> Result<(TokenGrid<S>, EncoderCache<S>)> {
        let (out, cache) = self.stack.forward(p, tokens.tokens.view())?;
        Ok((tokens.with_tokens(out), cache))
    }

    pub fn backward<S: Scalar>(
        &self,
        p: &ParamStore<S>,
        cache: &EncoderCache<S>,
        grad_out: ArrayView2<'_, S>,
        g: &mut Grads<S>,
    ) -> Array2<S> {
        self.stack.backward(p, cache, grad_out, g)
    }

    /// Per-head N×N attention probabilities of block `block_index`.
    pub fn attention_weights<S: Scalar>(
        &self,
        p: &ParamStore<S>,
        tokens: &TokenGrid<S>,
        block_index: usize,
    ) -> Result<Vec<Array2<S>>> {
        if block_index >= self.depth() {
            return Err(Error::IndexOutOfRange {
                index: block_index,
                len: self.depth(),
            });
        }
        let mut h = tokens.tokens.clone();
        for block in &self.stack.blocks[..block_index] {
            h = block.forward(p, h.view()).0;
        }
        let (_, cache) = self.stack.blocks[block_index].forward(p, h.view());
        Ok(cache.attn.probs().to_vec())
    }
}
