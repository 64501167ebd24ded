//! Masked auto-encoder pre-training.
//!
//! The encoder always sees every token. Masking happens on its output: masked
//! latents are swapped for a learned mask token, the rest are projected to
//! the decoder width, and a shallow transformer predicts the raw pressure
//! cube of every token. Only masked cubes are scored.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{masked_count, ModelConfig};
use crate::error::{Error, Result};
use crate::nn::{Grads, Init, Linear, ParamId, ParamStore, Stack, StackCache};
use crate::scalar::Scalar;
use crate::tokenizer::{CubeTargets, TokenGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct MaskSpec {
    /// `true` = masked.
    pub masked: Vec<bool>,
    pub ratio: f64,
    pub seed: u64,
}

impl MaskSpec {
    pub fn len(&self) -> usize {
        self.masked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masked.is_empty()
    }

    pub fn num_masked(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }

    /// A mask with nothing hidden.
    pub fn none(len: usize) -> Self {
        MaskSpec {
            masked: vec![false; len],
            ratio: 0.0,
            seed: 0,
        }
    }

    pub fn from_flags(masked: Vec<bool>) -> Self {
        let ratio = masked.iter().filter(|&&m| m).count() as f64 / masked.len().max(1) as f64;
        MaskSpec {
            masked,
            ratio,
            seed: 0,
        }
    }
}

/// Exactly round(ratio · n) distinct indices, uniformly without replacement.
pub fn sample_mask(token_count: usize, ratio: f64, seed: u64) -> Result<MaskSpec> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::MaskRatio(ratio));
    }
    if token_count == 0 {
        return Err(Error::Shape("cannot mask zero tokens".into()));
    }
    let k = masked_count(token_count, ratio);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masked = vec![false; token_count];
    for i in rand::seq::index::sample(&mut rng, token_count, k) {
        masked[i] = true;
    }
    Ok(MaskSpec {
        masked,
        ratio,
        seed,
    })
}

/// Fixed sin-cos table over (slot, row, col); each axis gets an equal even
/// share of the width (sin half, cos half) and any remainder stays zero.
pub fn sincos_position_table<S: Scalar>(slots: usize, rows: usize, cols: usize, dim: usize) -> Array2<S> {
    let part = dim / 6 * 2;
    let mut table = Array2::zeros((slots * rows * cols, dim));
    if part == 0 {
        return table;
    }
    let half = part / 2;
    for (i, mut row) in table.rows_mut().into_iter().enumerate() {
        let coords = [i / (rows * cols), (i / cols) % rows, i % cols];
        for (axis, &pos) in coords.iter().enumerate() {
            for k in 0..half {
                let freq = 1.0 / 10000f64.powf(k as f64 / half as f64);
                let angle = pos as f64 * freq;
                row[axis * part + k] = S::lit(angle.sin());
                row[axis * part + half + k] = S::lit(angle.cos());
            }
        }
    }
    table
}

#[derive(Debug, Clone)]
pub struct MaeDecoder {
    pub embed: Linear,
    pub mask_token: ParamId,
    pub pos_embed: ParamId,
    pub stack: Stack,
    pub pred: Linear,
}

#[derive(Debug, Clone)]
pub struct MaeCache<S> {
    f_o: Array2<S>,
    masked: Vec<bool>,
    stack: StackCache<S>,
    stack_out: Array2<S>,
}

impl MaeDecoder {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, init: &mut Init, cfg: &ModelConfig) -> Self {
        let dd = cfg.decoder_dim;
        MaeDecoder {
            embed: Linear::new(store, init, "decoder.embed", cfg.embed_dim, dd),
            mask_token: store.register("decoder.mask_token", init.trunc_normal(&[dd])),
            pos_embed: store.register(
                "decoder.pos_embed",
                sincos_position_table::<S>(cfg.slots_t(), cfg.patches_h(), cfg.patches_w(), dd).into_dyn(),
            ),
            stack: Stack::new(
                store,
                init,
                "decoder",
                cfg.decoder_depth,
                dd,
                cfg.decoder_heads,
                cfg.ffn_ratio,
            ),
            pred: Linear::new(store, init, "decoder.pred", dd, cfg.cube_len()),
        }
    }

    /// One raw-cube prediction per token.
    pub fn decode<S: Scalar>(
        &self,
        p: &ParamStore<S>,
        f_o: &TokenGrid<S>,
        mask: &MaskSpec,
    ) -> Result<(Array2<S>, MaeCache<S>)> {
        let n = f_o.len();
        if mask.len() != n {
            return Err(Error::Shape(format!(
                "mask covers {} tokens, encoder produced {n}",
                mask.len()
            )));
        }
        let pos = p.get2(self.pos_embed);
        if pos.nrows() != n {
            return Err(Error::Shape(format!(
                "decoder expects {} tokens, got {n}",
                pos.nrows()
            )));
        }
        let mut z = self.embed.forward(p, f_o.tokens.view());
        let token = p.get1(self.mask_token);
        for (mut row, &m) in z.rows_mut().into_iter().zip(&mask.masked) {
            if m {
                row.assign(&token);
            }
        }
        z += &pos;
        let (stack_out, stack) = self.stack.forward(p, z.view())?;
        let pred = self.pred.forward(p, stack_out.view());
        Ok((
            pred,
            MaeCache {
                f_o: f_o.tokens.clone(),
                masked: mask.masked.clone(),
                stack,
                stack_out,
            },
        ))
    }

    /// Returns dL/dF_o; rows of masked tokens are zero.
    pub fn backward<S: Scalar>(
        &self,
        p: &ParamStore<S>,
        cache: &MaeCache<S>,
        dpred: ArrayView2<'_, S>,
        g: &mut Grads<S>,
    ) -> Array2<S> {
        let dstack_out = self.pred.backward(p, cache.stack_out.view(), dpred, g);
        let mut dz = self.stack.backward(p, &cache.stack, dstack_out.view(), g);
        {
            let mut gp = g.mut2(self.pos_embed);
            gp += &dz;
        }
        {
            let mut gt = g.mut1(self.mask_token);
            for (row, &m) in dz.rows().into_iter().zip(&cache.masked) {
                if m {
                    gt += &row;
                }
            }
        }
        for (mut row, &m) in dz.rows_mut().into_iter().zip(&cache.masked) {
            if m {
                row.fill(S::zero());
            }
        }
        self.embed.backward(p, cache.f_o.view(), dz.view(), g)
    }
}

fn check_recon_shapes<S: Scalar>(
    pred: ArrayView2<'_, S>,
    target: &CubeTargets<S>,
    mask: &MaskSpec,
) -> Result<usize> {
    if pred.dim() != target.cubes.dim() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.cubes.dim()
        )));
    }
    if mask.len() != pred.nrows() {
        return Err(Error::Shape(format!(
            "mask covers {} tokens, prediction has {}",
            mask.len(),
            pred.nrows()
        )));
    }
    match mask.num_masked() {
        0 => Err(Error::EmptyMask),
        k => Ok(k),
    }
}

/// Mean squared error over masked tokens × cube elements.
pub fn masked_recon_loss<S: Scalar>(
    pred: ArrayView2<'_, S>,
    target: &CubeTargets<S>,
    mask: &MaskSpec,
) -> Result<S> {
    let k = check_recon_shapes(pred, target, mask)?;
    let mut sum = S::zero();
    for ((p, t), &m) in pred.rows().into_iter().zip(target.cubes.rows()).zip(&mask.masked) {
        if m {
            for (&a, &b) in p.iter().zip(t.iter()) {
                sum += (a - b) * (a - b);
            }
        }
    }
    Ok(sum / S::from_usize_lossy(k * pred.ncols()))
}

/// Gradient of [`masked_recon_loss`] with respect to `pred`.
pub fn masked_recon_grad<S: Scalar>(
    pred: ArrayView2<'_, S>,
    target: &CubeTargets<S>,
    mask: &MaskSpec,
) -> Result<Array2<S>> {
    let k = check_recon_shapes(pred, target, mask)?;
    let scale = S::lit(2.0) / S::from_usize_lossy(k * pred.ncols());
    let mut g = Array2::zeros(pred.raw_dim());
    for (((mut gr, p), t), &m) in g
        .rows_mut()
        .into_iter()
        .zip(pred.rows())
        .zip(target.cubes.rows())
        .zip(&mask.masked)
    {
        if m {
            for ((o, &a), &b) in gr.iter_mut().zip(p.iter()).zip(t.iter()) {
                *o = scale * (a - b);
            }
        }
    }
    Ok(g)
}
