//! Layers with hand-written backward passes.
//!
//! Every layer stores only [`ParamId`]s; parameter values live in a
//! [`ParamStore`] and gradients accumulate into a matching [`Grads`]. A
//! forward pass returns its output together with a cache; the backward pass
//! consumes that cache, so a backward call without a forward cannot be
//! expressed.

pub mod attention;
pub mod block;
pub mod deconv;
pub mod layernorm;
pub mod linear;
pub mod ops;
pub mod params;

pub use attention::{Attention, AttentionCache};
pub use block::{Block, BlockCache, Stack, StackCache};
pub use deconv::Deconv2d;
pub use layernorm::{LayerNorm, LayerNormCache};
pub use linear::Linear;
pub use params::{Grads, Init, ParamId, ParamStore};
