//! Space-time cube tokenization via a factorized (2+1)D convolution.
//!
//! Per frame, a d×d stride-d convolution maps every patch to C channels;
//! a d_t stride-d_t temporal convolution then folds d_t consecutive patch
//! embeddings at the same location into one token, followed by a C→C linear
//! projection and learned positional embeddings.
//!
//! Token `i` sits at `(slot, row, col)` with
//! `i = (slot · patches_h + row) · patches_w + col`.

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3};

use crate::config::{validate_model, ModelConfig};
use crate::dataio::PressureSequence;
use crate::error::{Error, Result};
use crate::nn::{Grads, Init, Linear, ParamId, ParamStore};
use crate::scalar::Scalar;

/// Embedded tokens, one row per space-time cube.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid<S> {
    pub tokens: Array2<S>,
    pub slots_t: usize,
    pub rows: usize,
    pub cols: usize,
}

impl<S: Scalar> TokenGrid<S> {
    pub fn len(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.tokens.ncols()
    }

    /// `(slot, row, col)` of token `i`.
    pub fn position(&self, i: usize) -> (usize, usize, usize) {
        (i / (self.rows * self.cols), (i / self.cols) % self.rows, i % self.cols)
    }

    pub fn with_tokens(&self, tokens: Array2<S>) -> Self {
        TokenGrid {
            tokens,
            slots_t: self.slots_t,
            rows: self.rows,
            cols: self.cols,
        }
    }
}

/// Raw pressure cubes, one row of d_t·d·d values per token, ordered
/// (frame offset, row offset, column offset).
#[derive(Debug, Clone, PartialEq)]
pub struct CubeTargets<S> {
    pub cubes: Array2<S>,
}

fn check_input<S: Scalar>(cfg: &ModelConfig, x: ArrayView3<'_, S>) -> Result<()> {
    validate_model(cfg).into_result()?;
    let (t, h, w) = x.dim();
    if (t, h, w) != (cfg.frames_t, cfg.grid_h, cfg.grid_w) {
        return Err(Error::Shape(format!(
            "input is {t}x{h}x{w} (T x H x W), model expects {}x{}x{}",
            cfg.frames_t, cfg.grid_h, cfg.grid_w
        )));
    }
    Ok(())
}

/// Per-frame d×d patches: rows ordered (frame, row, col), columns (dy, dx).
fn frame_patches<S: Scalar>(cfg: &ModelConfig, x: ArrayView3<'_, S>) -> Array2<S> {
    let d = cfg.spatial_crop;
    let (ph, pw) = (cfg.patches_h(), cfg.patches_w());
    let mut out = Array2::zeros((cfg.frames_t * ph * pw, d * d));
    for t in 0..cfg.frames_t {
        for r in 0..ph {
            for c in 0..pw {
                let mut row = out.row_mut((t * ph + r) * pw + c);
                for dy in 0..d {
                    for dx in 0..d {
                        row[dy * d + dx] = x[[t, r * d + dy, c * d + dx]];
                    }
                }
            }
        }
    }
    out
}

fn frame_patches_backward<S: Scalar>(cfg: &ModelConfig, dp: ArrayView2<'_, S>) -> Array3<S> {
    let d = cfg.spatial_crop;
    let (ph, pw) = (cfg.patches_h(), cfg.patches_w());
    let mut dx = Array3::zeros((cfg.frames_t, cfg.grid_h, cfg.grid_w));
    for t in 0..cfg.frames_t {
        for r in 0..ph {
            for c in 0..pw {
                let row = dp.row((t * ph + r) * pw + c);
                for dy in 0..d {
                    for dx_ in 0..d {
                        dx[[t, r * d + dy, c * d + dx_]] = row[dy * d + dx_];
                    }
                }
            }
        }
    }
    dx
}

/// Stacks d_t consecutive per-frame rows: `(T·P) × w` → `(T/d_t·P) × (d_t·w)`.
fn fold_time<S: Scalar>(cfg: &ModelConfig, per_frame: ArrayView2<'_, S>) -> Array2<S> {
    let dt = cfg.temporal_crop;
    let p = cfg.patches_per_slot();
    let w = per_frame.ncols();
    let mut out = Array2::zeros((cfg.num_tokens(), dt * w));
    for slot in 0..cfg.slots_t() {
        for k in 0..dt {
            let src = per_frame.slice(s![(slot * dt + k) * p..(slot * dt + k + 1) * p, ..]);
            out.slice_mut(s![slot * p..(slot + 1) * p, k * w..(k + 1) * w])
                .assign(&src);
        }
    }
    out
}

fn unfold_time<S: Scalar>(cfg: &ModelConfig, folded: ArrayView2<'_, S>) -> Array2<S> {
    let dt = cfg.temporal_crop;
    let p = cfg.patches_per_slot();
    let w = folded.ncols() / dt;
    let mut out = Array2::zeros((cfg.frames_t * p, w));
    for slot in 0..cfg.slots_t() {
        for k in 0..dt {
            out.slice_mut(s![(slot * dt + k) * p..(slot * dt + k + 1) * p, ..])
                .assign(&folded.slice(s![slot * p..(slot + 1) * p, k * w..(k + 1) * w]));
        }
    }
    out
}

/// Partition of the input into d_t×d×d cubes, one per token.
pub fn extract_cube_targets<S: Scalar>(
    cfg: &ModelConfig,
    x: &PressureSequence<S>,
) -> Result<CubeTargets<S>> {
    check_input(cfg, x.frames.view())?;
    let patches = frame_patches(cfg, x.frames.view());
    Ok(CubeTargets {
        cubes: fold_time(cfg, patches.view()),
    })
}

/// Inverse of [`extract_cube_targets`].
pub fn reassemble_cubes<S: Scalar>(
    cfg: &ModelConfig,
    cubes: &CubeTargets<S>,
) -> Result<PressureSequence<S>> {
    validate_model(cfg).into_result()?;
    if cubes.cubes.dim() != (cfg.num_tokens(), cfg.cube_len()) {
        return Err(Error::Shape(format!(
            "cubes are {:?}, expected ({}, {})",
            cubes.cubes.dim(),
            cfg.num_tokens(),
            cfg.cube_len()
        )));
    }
    let per_frame = unfold_time(cfg, cubes.cubes.view());
    Ok(PressureSequence {
        frames: frame_patches_backward(cfg, per_frame.view()),
    })
}

#[derive(Debug, Clone)]
pub struct Tokenizer {
    pub cfg: ModelConfig,
    pub spatial: Linear,
    pub temporal: Linear,
    pub proj: Linear,
    pub pos_embed: ParamId,
}

#[derive(Debug, Clone)]
pub struct TokenizerCache<S> {
    patches: Array2<S>,
    folded: Array2<S>,
    temporal_out: Array2<S>,
}

impl Tokenizer {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, init: &mut Init, cfg: &ModelConfig) -> Self {
        let c = cfg.embed_dim;
        let d = cfg.spatial_crop;
        let spatial = Linear::new_xavier(store, init, "tokenizer.spatial", d * d, c);
        let temporal = Linear::new_xavier(store, init, "tokenizer.temporal", cfg.temporal_crop * c, c);
        let proj = Linear::new_xavier(store, init, "tokenizer.proj", c, c);
        let pos_embed = store.register("tokenizer.pos_embed", init.trunc_normal(&[cfg.num_tokens(), c]));
        Tokenizer {
            cfg: cfg.clone(),
            spatial,
            temporal,
            proj,
            pos_embed,
        }
    }

    pub fn forward<S: Scalar>(
        &self,
        p: &ParamStore<S>,
        x: ArrayView3<'_, S>,
    ) -> Result<(TokenGrid<S>, TokenizerCache<S>)> {
        check_input(&self.cfg, x)?;
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tokenizer input at flat index {i}")));
        }
        let patches = frame_patches(&self.cfg, x);
        let spatial_out = self.spatial.forward(p, patches.view());
        let folded = fold_time(&self.cfg, spatial_out.view());
        let temporal_out = self.temporal.forward(p, folded.view());
        let mut tokens = self.proj.forward(p, temporal_out.view());
        tokens += &p.get2(self.pos_embed);
        Ok((
            TokenGrid {
                tokens,
                slots_t: self.cfg.slots_t(),
                rows: self.cfg.patches_h(),
                cols: self.cfg.patches_w(),
            },
            TokenizerCache {
                patches,
                folded,
                temporal_out,
            },
        ))
    }

    /// Accumulates parameter gradients and returns dL/dx (T × H × W).
    pub fn backward<S: Scalar>(
        &self,
        p: &ParamStore<S>,
        cache: &TokenizerCache<S>,
        grad_tokens: ArrayView2<'_, S>,
        g: &mut Grads<S>,
    ) -> Array3<S> {
        {
            let mut gp = g.mut2(self.pos_embed);
            gp += &grad_tokens;
        }
        let d_temporal_out = self.proj.backward(p, cache.temporal_out.view(), grad_tokens, g);
        let d_folded = self.temporal.backward(p, cache.folded.view(), d_temporal_out.view(), g);
        let d_spatial_out = unfold_time(&self.cfg, d_folded.view());
        let d_patches = self.spatial.backward(p, cache.patches.view(), d_spatial_out.view(), g);
        frame_patches_backward(&self.cfg, d_patches.view())
    }
}
