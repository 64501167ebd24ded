//! Pose regression head, target heatmap rendering and soft-argmax decoding.
//!
//! Each temporal slot of F_o is reshaped to a `(H/d) × (W/d) × C` image and
//! up-sampled twice by stride-2 transposed convolutions (each followed by a
//! per-pixel channel LayerNorm and ReLU). A 1×1 convolution then emits
//! `d_t · J` heatmap channels and `d_t · J` depth channels, which are
//! unfolded into `d_t` frames of the slot.
//!
//! Coordinates: full-resolution cell `k` is centred at coordinate `k`, so a
//! heatmap cell `q` with stride `s` is centred at `(q + 0.5) · s − 0.5`
//! (`4q + 1.5` in strict geometry).

use ndarray::{s, Array2, Array3, Array4, ArrayView2, Axis};

use crate::config::ModelConfig;
use crate::dataio::PoseSequence;
use crate::error::{Error, Result};
use crate::nn::ops::softmax_inplace;
use crate::nn::{Deconv2d, Grads, Init, LayerNorm, LayerNormCache, Linear, ParamStore};
use crate::scalar::Scalar;
use crate::tokenizer::TokenGrid;

/// Per-frame, per-joint heatmaps and depth maps, `T × J × rows × cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStack<S> {
    pub heatmaps: Array4<S>,
    pub depth: Array4<S>,
}

impl<S: Scalar> HeatmapStack<S> {
    pub fn zeros(t: usize, j: usize, rows: usize, cols: usize) -> Self {
        HeatmapStack {
            heatmaps: Array4::zeros((t, j, rows, cols)),
            depth: Array4::zeros((t, j, rows, cols)),
        }
    }

    pub fn dim(&self) -> (usize, usize, usize, usize) {
        self.heatmaps.dim()
    }
}

/// Decoded `T × J × (x, y, z)` keypoints in full-resolution cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Keypoints<S> {
    pub coords: Array3<S>,
}

impl<S: Scalar> Keypoints<S> {
    pub fn as_pose(&self) -> PoseSequence<S> {
        PoseSequence {
            joints: self.coords.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PoseHead {
    pub cfg: ModelConfig,
    pub deconv1: Deconv2d,
    pub norm1: LayerNorm,
    pub deconv2: Deconv2d,
    pub norm2: LayerNorm,
    pub out: Linear,
}

#[derive(Debug, Clone)]
struct SlotCache<S> {
    input: Array2<S>,
    ln1: LayerNormCache<S>,
    pre1: Array2<S>,
    act1: Array2<S>,
    ln2: LayerNormCache<S>,
    pre2: Array2<S>,
    act2: Array2<S>,
}

#[derive(Debug, Clone)]
pub struct HeadCache<S> {
    slots: Vec<SlotCache<S>>,
}

fn relu<S: Scalar>(x: &Array2<S>) -> Array2<S> {
    x.mapv(|v| v.max(S::zero()))
}

fn relu_backward<S: Scalar>(pre: &Array2<S>, mut d: Array2<S>) -> Array2<S> {
    d.zip_mut_with(pre, |g, &z| {
        if z <= S::zero() {
            *g = S::zero();
        }
    });
    d
}

impl PoseHead {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, init: &mut Init, cfg: &ModelConfig) -> Self {
        let ch = cfg.head_channels;
        PoseHead {
            cfg: cfg.clone(),
            deconv1: Deconv2d::new(store, init, "head.deconv1", cfg.embed_dim, ch),
            norm1: LayerNorm::new(store, "head.norm1", ch),
            deconv2: Deconv2d::new(store, init, "head.deconv2", ch, ch),
            norm2: LayerNorm::new(store, "head.norm2", ch),
            out: Linear::new(
                store,
                init,
                "head.out",
                ch,
                2 * cfg.temporal_crop * cfg.num_joints,
            ),
        }
    }

    pub fn forward<S: Scalar>(
        &self,
        p: &ParamStore<S>,
        f_o: &TokenGrid<S>,
    ) -> Result<(HeatmapStack<S>, HeadCache<S>)> {
        let cfg = &self.cfg;
        let (rows, cols) = (cfg.patches_h(), cfg.patches_w());
        if f_o.slots_t != cfg.slots_t() || f_o.rows != rows || f_o.cols != cols || f_o.dim() != cfg.embed_dim
        {
            return Err(Error::Shape(format!(
                "head expects {}x{}x{} tokens of width {}, got {}x{}x{} of width {}",
                cfg.slots_t(),
                rows,
                cols,
                cfg.embed_dim,
                f_o.slots_t,
                f_o.rows,
                f_o.cols,
                f_o.dim()
            )));
        }
        let (dt, j) = (cfg.temporal_crop, cfg.num_joints);
        let (hr, hc) = (4 * rows, 4 * cols);
        let per_slot = rows * cols;
        let mut out = HeatmapStack::zeros(cfg.frames_t, j, hr, hc);
        let mut slots = Vec::with_capacity(cfg.slots_t());
        for slot in 0..cfg.slots_t() {
            let input = f_o
                .tokens
                .slice(s![slot * per_slot..(slot + 1) * per_slot, ..])
                .to_owned();
            let up1 = self.deconv1.forward(p, input.view(), rows, cols);
            let (pre1, ln1) = self.norm1.forward(p, up1.view());
            let act1 = relu(&pre1);
            let up2 = self.deconv2.forward(p, act1.view(), 2 * rows, 2 * cols);
            let (pre2, ln2) = self.norm2.forward(p, up2.view());
            let act2 = relu(&pre2);
            let maps = self.out.forward(p, act2.view());
            for k in 0..dt {
                let t = slot * dt + k;
                for jj in 0..j {
                    let hm_col = maps.column(k * j + jj);
                    let dp_col = maps.column(dt * j + k * j + jj);
                    let mut hm = out.heatmaps.slice_mut(s![t, jj, .., ..]);
                    let mut dp = out.depth.slice_mut(s![t, jj, .., ..]);
                    for (pix, (&h, &d)) in hm_col.iter().zip(dp_col.iter()).enumerate() {
                        hm[[pix / hc, pix % hc]] = h;
                        dp[[pix / hc, pix % hc]] = d;
                    }
                }
            }
            slots.push(SlotCache {
                input,
                ln1,
                pre1,
                act1,
                ln2,
                pre2,
                act2,
            });
        }
        Ok((out, HeadCache { slots }))
    }

    /// Accumulates parameter gradients and returns dL/dF_o.
    pub fn backward<S: Scalar>(
        &self,
        p: &ParamStore<S>,
        cache: &HeadCache<S>,
        grad: &HeatmapStack<S>,
        g: &mut Grads<S>,
    ) -> Array2<S> {
        let cfg = &self.cfg;
        let (rows, cols) = (cfg.patches_h(), cfg.patches_w());
        let (dt, j) = (cfg.temporal_crop, cfg.num_joints);
        let hc = 4 * cols;
        let per_slot = rows * cols;
        let mut d_tokens = Array2::zeros((cfg.num_tokens(), cfg.embed_dim));
        for (slot, sc) in cache.slots.iter().enumerate() {
            let mut dmaps = Array2::zeros((16 * per_slot, 2 * dt * j));
            for k in 0..dt {
                let t = slot * dt + k;
                for jj in 0..j {
                    let hm = grad.heatmaps.slice(s![t, jj, .., ..]);
                    let dp = grad.depth.slice(s![t, jj, .., ..]);
                    for pix in 0..16 * per_slot {
                        dmaps[[pix, k * j + jj]] = hm[[pix / hc, pix % hc]];
                        dmaps[[pix, dt * j + k * j + jj]] = dp[[pix / hc, pix % hc]];
                    }
                }
            }
            let dact2 = self.out.backward(p, sc.act2.view(), dmaps.view(), g);
            let dpre2 = relu_backward(&sc.pre2, dact2);
            let dup2 = self.norm2.backward(p, &sc.ln2, dpre2.view(), g);
            let dact1 = self
                .deconv2
                .backward(p, sc.act1.view(), 2 * rows, 2 * cols, dup2.view(), g);
            let dpre1 = relu_backward(&sc.pre1, dact1);
            let dup1 = self.norm1.backward(p, &sc.ln1, dpre1.view(), g);
            let din = self
                .deconv1
                .backward(p, sc.input.view(), rows, cols, dup1.view(), g);
            d_tokens
                .slice_mut(s![slot * per_slot..(slot + 1) * per_slot, ..])
                .assign(&din);
        }
        d_tokens
    }
}

/// Softmax over every cell of one map.
pub fn softmax_map<S: Scalar>(logits: ArrayView2<'_, S>) -> Array2<S> {
    let mut w = logits.to_owned();
    let flat = w.as_slice_mut().map(|s| ndarray::ArrayViewMut1::from(s));
    match flat {
        Some(v) => softmax_inplace(v),
        None => {
            let dim = logits.raw_dim();
            let mut v: ndarray::Array1<S> = logits.iter().copied().collect();
            softmax_inplace(v.view_mut());
            w = v.into_shape_with_order(dim).unwrap();
        }
    }
    w
}

/// Expected (x = column, y = row) cell index under `softmax(logits)`.
pub fn soft_argmax<S: Scalar>(logits: ArrayView2<'_, S>) -> (S, S) {
    expected_position(softmax_map(logits).view())
}

pub fn expected_position<S: Scalar>(weights: ArrayView2<'_, S>) -> (S, S) {
    let mut x = S::zero();
    let mut y = S::zero();
    for ((row, col), &w) in weights.indexed_iter() {
        x += w * S::from_usize_lossy(col);
        y += w * S::from_usize_lossy(row);
    }
    (x, y)
}

/// Σ w · depth.
pub fn read_depth<S: Scalar>(weights: ArrayView2<'_, S>, depth_map: ArrayView2<'_, S>) -> S {
    weights
        .iter()
        .zip(depth_map.iter())
        .map(|(&w, &d)| w * d)
        .sum()
}

/// Heatmap cell index → full-resolution coordinate.
pub fn to_full_resolution<S: Scalar>(q: S, stride: f64) -> S {
    (q + S::lit(0.5)) * S::lit(stride) - S::lit(0.5)
}

/// Full-resolution coordinate → heatmap cell index.
pub fn to_heatmap_resolution<S: Scalar>(v: S, stride: f64) -> S {
    (v + S::lit(0.5)) / S::lit(stride) - S::lit(0.5)
}

/// Softmax weights kept for the backward pass of [`decode_keypoints`].
#[derive(Debug, Clone)]
pub struct DecodeCache<S> {
    weights: Array4<S>,
}

/// Soft-argmax over `beta · heatmap` per frame and joint; depth is read
/// under the same weights.
pub fn decode_keypoints<S: Scalar>(
    maps: &HeatmapStack<S>,
    cfg: &ModelConfig,
) -> (Keypoints<S>, DecodeCache<S>) {
    let (t, j, _, _) = maps.dim();
    let beta = S::lit(cfg.softargmax_beta);
    let stride = cfg.heatmap_stride();
    let mut coords = Array3::zeros((t, j, 3));
    let mut weights = Array4::zeros(maps.heatmaps.raw_dim());
    for f in 0..t {
        for jj in 0..j {
            let logits = maps.heatmaps.slice(s![f, jj, .., ..]).mapv(|v| v * beta);
            let w = softmax_map(logits.view());
            let (x, y) = expected_position(w.view());
            coords[[f, jj, 0]] = to_full_resolution(x, stride);
            coords[[f, jj, 1]] = to_full_resolution(y, stride);
            coords[[f, jj, 2]] = read_depth(w.view(), maps.depth.slice(s![f, jj, .., ..]));
            weights.slice_mut(s![f, jj, .., ..]).assign(&w);
        }
    }
    (Keypoints { coords }, DecodeCache { weights })
}

/// Back-propagates dL/d(keypoints) into heatmap logits and depth maps.
pub fn decode_keypoints_backward<S: Scalar>(
    maps: &HeatmapStack<S>,
    cache: &DecodeCache<S>,
    cfg: &ModelConfig,
    grad: ndarray::ArrayView3<'_, S>,
) -> HeatmapStack<S> {
    let (t, j, _, _) = maps.dim();
    let beta = S::lit(cfg.softargmax_beta);
    let stride = S::lit(cfg.heatmap_stride());
    let mut out = HeatmapStack::zeros(t, j, maps.dim().2, maps.dim().3);
    for f in 0..t {
        for jj in 0..j {
            let w = cache.weights.slice(s![f, jj, .., ..]);
            let depth = maps.depth.slice(s![f, jj, .., ..]);
            let (ex, ey) = expected_position(w);
            let z = read_depth(w, depth);
            let (gx, gy, gz) = (
                grad[[f, jj, 0]] * stride,
                grad[[f, jj, 1]] * stride,
                grad[[f, jj, 2]],
            );
            let mut dh = out.heatmaps.slice_mut(s![f, jj, .., ..]);
            for ((row, col), o) in dh.indexed_iter_mut() {
                let wi = w[[row, col]];
                let cx = S::from_usize_lossy(col);
                let cy = S::from_usize_lossy(row);
                *o = beta * wi * (gx * (cx - ex) + gy * (cy - ey) + gz * (depth[[row, col]] - z));
            }
            let mut dd = out.depth.slice_mut(s![f, jj, .., ..]);
            dd.zip_mut_with(&w, |o, &wi| *o = gz * wi);
        }
    }
    out
}

/// Gaussian target heatmaps (peak 1, std `heatmap_sigma` heatmap cells)
/// and constant depth maps. Joints outside the grid are clamped to its
/// border; the flag reports whether that happened.
pub fn render_target_heatmaps<S: Scalar>(
    pose: &PoseSequence<S>,
    cfg: &ModelConfig,
) -> (HeatmapStack<S>, bool) {
    let (t, j, _) = pose.joints.dim();
    let (rows, cols) = (cfg.heatmap_h(), cfg.heatmap_w());
    let stride = cfg.heatmap_stride();
    let inv = 1.0 / (2.0 * cfg.heatmap_sigma * cfg.heatmap_sigma);
    let mut out = HeatmapStack::zeros(t, j, rows, cols);
    let mut clamped = false;
    for f in 0..t {
        for jj in 0..j {
            let mut x = pose.joints[[f, jj, 0]].as_f64();
            let mut y = pose.joints[[f, jj, 1]].as_f64();
            let z = pose.joints[[f, jj, 2]];
            let (max_x, max_y) = ((cfg.grid_w - 1) as f64, (cfg.grid_h - 1) as f64);
            if !(0.0..=max_x).contains(&x) || !(0.0..=max_y).contains(&y) {
                clamped = true;
                x = x.clamp(0.0, max_x);
                y = y.clamp(0.0, max_y);
            }
            let qx = to_heatmap_resolution(x, stride);
            let qy = to_heatmap_resolution(y, stride);
            let mut hm = out.heatmaps.slice_mut(s![f, jj, .., ..]);
            for ((row, col), v) in hm.indexed_iter_mut() {
                let dx = col as f64 - qx;
                let dy = row as f64 - qy;
                *v = S::lit((-(dx * dx + dy * dy) * inv).exp());
            }
            out.depth.slice_mut(s![f, jj, .., ..]).fill(z);
        }
    }
    (out, clamped)
}

/// Mean over frames of the per-frame maps; used for quick sanity checks.
pub fn mean_heatmap<S: Scalar>(maps: &HeatmapStack<S>) -> Array3<S> {
    maps.heatmaps.mean_axis(Axis(0)).unwrap()
}
