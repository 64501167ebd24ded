//! Skeleton topology, model geometry and training hyperparameters.
//!
//! All three structures are plain data, immutable once built, and
//! (de)serialize from a single JSON document (see [`RunConfig`]).

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Joint names and limb topology.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonSpec {
    pub joint_names: Vec<String>,
    /// `(parent, child)` joint index pairs.
    pub limbs: Vec<(usize, usize)>,
    /// Index into `limbs` of the limb used to normalise PCKh.
    pub head_limb_index: usize,
}

pub mod joints {
    pub const HEAD: usize = 0;
    pub const NECK: usize = 1;
    pub const R_SHOULDER: usize = 2;
    pub const R_ELBOW: usize = 3;
    pub const R_WRIST: usize = 4;
    pub const L_SHOULDER: usize = 5;
    pub const L_ELBOW: usize = 6;
    pub const L_WRIST: usize = 7;
    pub const R_HIP: usize = 8;
    pub const R_KNEE: usize = 9;
    pub const R_ANKLE: usize = 10;
    pub const L_HIP: usize = 11;
    pub const L_KNEE: usize = 12;
    pub const L_ANKLE: usize = 13;
}

impl SkeletonSpec {
    /// The 14-joint, 13-limb body model; the head limb is neck → head.
    pub fn default_14() -> Self {
        use joints::*;
        let names = [
            "head",
            "neck",
            "r_shoulder",
            "r_elbow",
            "r_wrist",
            "l_shoulder",
            "l_elbow",
            "l_wrist",
            "r_hip",
            "r_knee",
            "r_ankle",
            "l_hip",
            "l_knee",
            "l_ankle",
        ];
        let limbs = vec![
            (NECK, HEAD),
            (NECK, R_SHOULDER),
            (R_SHOULDER, R_ELBOW),
            (R_ELBOW, R_WRIST),
            (NECK, L_SHOULDER),
            (L_SHOULDER, L_ELBOW),
            (L_ELBOW, L_WRIST),
            (NECK, R_HIP),
            (R_HIP, R_KNEE),
            (R_KNEE, R_ANKLE),
            (NECK, L_HIP),
            (L_HIP, L_KNEE),
            (L_KNEE, L_ANKLE),
        ];
        SkeletonSpec {
            joint_names: names.iter().map(|s| s.to_string()).collect(),
            limbs,
            head_limb_index: 0,
        }
    }

    pub fn num_joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn num_limbs(&self) -> usize {
        self.limbs.len()
    }

    pub fn head_limb(&self) -> (usize, usize) {
        self.limbs[self.head_limb_index]
    }
}

impl Default for SkeletonSpec {
    fn default() -> Self {
        Self::default_14()
    }
}

/// Network geometry.
///
/// Frames are stored row-major as `grid_h` rows of `grid_w` cells; the
/// x coordinate runs along a row (`grid_w`), y down the rows (`grid_h`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub grid_w: usize,
    pub grid_h: usize,
    /// Temporal window T.
    pub frames_t: usize,
    /// Cells per patch side (d).
    pub spatial_crop: usize,
    /// Frames per space-time cube (d_t).
    pub temporal_crop: usize,
    pub embed_dim: usize,
    pub encoder_depth: usize,
    pub num_heads: usize,
    pub ffn_ratio: usize,
    pub decoder_depth: usize,
    pub decoder_dim: usize,
    pub decoder_heads: usize,
    /// Channels of the two deconvolution layers in the pose head.
    pub head_channels: usize,
    pub num_joints: usize,
    /// Target heatmap standard deviation, in heatmap cells.
    pub heatmap_sigma: f64,
    /// Inverse temperature applied to heatmaps before the soft-argmax.
    pub softargmax_beta: f64,
    pub cell_pitch_cm: f64,
    /// Require `spatial_crop == 16` so that the head lands on grid/4.
    pub strict_geometry: bool,
}

impl ModelConfig {
    /// ViTPose-B sized encoder on a 96×96 carpet with a 32-frame window.
    pub fn full() -> Self {
        ModelConfig {
            grid_w: 96,
            grid_h: 96,
            frames_t: 32,
            spatial_crop: 16,
            temporal_crop: 4,
            embed_dim: 768,
            encoder_depth: 12,
            num_heads: 12,
            ffn_ratio: 4,
            decoder_depth: 4,
            decoder_dim: 256,
            decoder_heads: 8,
            head_channels: 256,
            num_joints: 14,
            heatmap_sigma: 2.0,
            softargmax_beta: 16.0,
            cell_pitch_cm: 1.0,
            strict_geometry: true,
        }
    }

    /// Small model used by the synthetic micro benchmark.
    pub fn desk() -> Self {
        ModelConfig {
            grid_w: 32,
            grid_h: 32,
            frames_t: 32,
            spatial_crop: 8,
            temporal_crop: 4,
            embed_dim: 32,
            encoder_depth: 2,
            num_heads: 4,
            ffn_ratio: 4,
            decoder_depth: 1,
            decoder_dim: 32,
            decoder_heads: 4,
            head_channels: 32,
            num_joints: 14,
            heatmap_sigma: 2.0,
            softargmax_beta: 16.0,
            cell_pitch_cm: 1.0,
            strict_geometry: false,
        }
    }

    pub fn slots_t(&self) -> usize {
        self.frames_t / self.temporal_crop
    }

    pub fn patches_w(&self) -> usize {
        self.grid_w / self.spatial_crop
    }

    pub fn patches_h(&self) -> usize {
        self.grid_h / self.spatial_crop
    }

    pub fn patches_per_slot(&self) -> usize {
        self.patches_w() * self.patches_h()
    }

    /// Token count (T/d_t)(W/d)(H/d).
    pub fn num_tokens(&self) -> usize {
        self.slots_t() * self.patches_per_slot()
    }

    /// Raw pressure values per space-time cube, d_t·d·d.
    pub fn cube_len(&self) -> usize {
        self.temporal_crop * self.spatial_crop * self.spatial_crop
    }

    /// Full-resolution cells per heatmap cell (4 in strict geometry).
    pub fn heatmap_stride(&self) -> f64 {
        self.spatial_crop as f64 / 4.0
    }

    pub fn heatmap_w(&self) -> usize {
        self.patches_w() * 4
    }

    pub fn heatmap_h(&self) -> usize {
        self.patches_h() * 4
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::full()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub mask_ratio: f64,
    pub pretrain_lr: f64,
    pub pretrain_epochs: usize,
    pub pretrain_weight_decay: f64,
    pub warmup_lr: f64,
    pub warmup_epochs: usize,
    pub finetune_lr: f64,
    pub finetune_epochs: usize,
    /// Weight decay used in the warm-up and fine-tune stages.
    pub supervised_weight_decay: f64,
    pub limb_loss_weight: f64,
    pub depth_loss_weight: f64,
    pub batch_size: usize,
    pub rng_seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Random training windows drawn per sequence per epoch.
    pub windows_per_sequence: usize,
    /// Write an intermediate checkpoint every n epochs (0: stage end only).
    pub checkpoint_every: usize,
}

impl TrainConfig {
    pub fn full() -> Self {
        TrainConfig {
            mask_ratio: 0.75,
            pretrain_lr: 1e-3,
            pretrain_epochs: 200,
            pretrain_weight_decay: 0.1,
            warmup_lr: 1e-3,
            warmup_epochs: 2,
            finetune_lr: 2e-4,
            finetune_epochs: 150,
            supervised_weight_decay: 0.01,
            limb_loss_weight: 0.1,
            depth_loss_weight: 1.0,
            batch_size: 128,
            rng_seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            windows_per_sequence: 1,
            checkpoint_every: 0,
        }
    }

    pub fn desk() -> Self {
        TrainConfig {
            pretrain_epochs: 20,
            finetune_epochs: 30,
            batch_size: 4,
            depth_loss_weight: 0.01,
            windows_per_sequence: 8,
            ..Self::full()
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::full()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationIssue {
    pub field: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(&mut self, field: &'static str, message: impl Into<String>) {
        self.issues.push(ValidationIssue {
            field,
            message: message.into(),
        });
    }

    pub fn mentions(&self, field: &str) -> bool {
        self.issues.iter().any(|i| i.field == field)
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            let msgs: Vec<String> = self
                .issues
                .iter()
                .map(|i| format!("{}: {}", i.field, i.message))
                .collect();
            Err(Error::Config(msgs.join("; ")))
        }
    }
}

pub fn validate_model(model: &ModelConfig) -> ValidationReport {
    let mut r = ValidationReport::default();
    let positive = [
        ("grid_w", model.grid_w),
        ("grid_h", model.grid_h),
        ("frames_t", model.frames_t),
        ("spatial_crop", model.spatial_crop),
        ("temporal_crop", model.temporal_crop),
        ("embed_dim", model.embed_dim),
        ("num_heads", model.num_heads),
        ("ffn_ratio", model.ffn_ratio),
        ("decoder_dim", model.decoder_dim),
        ("decoder_heads", model.decoder_heads),
        ("head_channels", model.head_channels),
        ("num_joints", model.num_joints),
    ];
    for (field, v) in positive {
        if v == 0 {
            r.push(field, "must be positive");
        }
    }
    for (field, v) in [
        ("heatmap_sigma", model.heatmap_sigma),
        ("softargmax_beta", model.softargmax_beta),
        ("cell_pitch_cm", model.cell_pitch_cm),
    ] {
        if !(v.is_finite() && v > 0.0) {
            r.push(field, format!("must be finite and positive, got {v}"));
        }
    }
    if model.spatial_crop > 0 {
        if model.grid_w % model.spatial_crop != 0 {
            r.push(
                "grid_w",
                format!(
                    "grid_w {} not divisible by spatial_crop {}",
                    model.grid_w, model.spatial_crop
                ),
            );
        }
        if model.grid_h % model.spatial_crop != 0 {
            r.push(
                "grid_h",
                format!(
                    "grid_h {} not divisible by spatial_crop {}",
                    model.grid_h, model.spatial_crop
                ),
            );
        }
        if model.strict_geometry && model.spatial_crop != 16 {
            r.push(
                "spatial_crop",
                format!(
                    "strict geometry needs spatial_crop 16 (two x2 up-samplings reach grid/4), got {}",
                    model.spatial_crop
                ),
            );
        } else if !model.strict_geometry && model.spatial_crop % 4 != 0 {
            r.push(
                "spatial_crop",
                format!(
                    "spatial_crop must be a multiple of 4, got {}",
                    model.spatial_crop
                ),
            );
        }
    }
    if model.temporal_crop > 0 && model.frames_t % model.temporal_crop != 0 {
        r.push(
            "frames_t",
            format!(
                "frames_t {} not divisible by temporal_crop {}",
                model.frames_t, model.temporal_crop
            ),
        );
    }
    if model.num_heads > 0 && model.embed_dim % model.num_heads != 0 {
        r.push(
            "embed_dim",
            format!(
                "embed_dim {} not divisible by num_heads {}",
                model.embed_dim, model.num_heads
            ),
        );
    }
    if model.decoder_heads > 0 && model.decoder_dim % model.decoder_heads != 0 {
        r.push(
            "decoder_dim",
            format!(
                "decoder_dim {} not divisible by decoder_heads {}",
                model.decoder_dim, model.decoder_heads
            ),
        );
    }
    r
}

pub fn validate_train(train: &TrainConfig) -> ValidationReport {
    let mut r = ValidationReport::default();
    if !(train.mask_ratio > 0.0 && train.mask_ratio < 1.0) {
        r.push(
            "mask_ratio",
            format!("must lie in (0, 1), got {}", train.mask_ratio),
        );
    }
    for (field, v) in [
        ("pretrain_lr", train.pretrain_lr),
        ("warmup_lr", train.warmup_lr),
        ("finetune_lr", train.finetune_lr),
        ("adam_eps", train.adam_eps),
    ] {
        if !(v.is_finite() && v > 0.0) {
            r.push(field, format!("must be positive, got {v}"));
        }
    }
    for (field, v) in [
        ("pretrain_weight_decay", train.pretrain_weight_decay),
        ("supervised_weight_decay", train.supervised_weight_decay),
        ("limb_loss_weight", train.limb_loss_weight),
        ("depth_loss_weight", train.depth_loss_weight),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            r.push(field, format!("must be non-negative, got {v}"));
        }
    }
    for (field, v) in [
        ("adam_beta1", train.adam_beta1),
        ("adam_beta2", train.adam_beta2),
    ] {
        if !(0.0..1.0).contains(&v) {
            r.push(field, format!("must lie in [0, 1), got {v}"));
        }
    }
    if train.batch_size == 0 {
        r.push("batch_size", "must be positive");
    }
    if train.windows_per_sequence == 0 {
        r.push("windows_per_sequence", "must be positive");
    }
    r
}

pub fn validate_skeleton(skel: &SkeletonSpec) -> ValidationReport {
    let mut r = ValidationReport::default();
    let j = skel.num_joints();
    if j == 0 {
        r.push("joint_names", "skeleton has no joints");
    }
    let mut seen = std::collections::HashSet::new();
    for (i, &(a, b)) in skel.limbs.iter().enumerate() {
        if a >= j || b >= j {
            r.push(
                "limbs",
                format!("limb {i} ({a}, {b}) references a joint outside [0, {j})"),
            );
        }
        if a == b {
            r.push("limbs", format!("limb {i} connects joint {a} to itself"));
        }
        if !seen.insert((a.min(b), a.max(b))) {
            r.push("limbs", format!("limb {i} ({a}, {b}) is a duplicate"));
        }
    }
    if skel.head_limb_index >= skel.limbs.len() {
        r.push(
            "head_limb_index",
            format!(
                "{} is not a valid index into {} limbs",
                skel.head_limb_index,
                skel.limbs.len()
            ),
        );
    }
    r
}

/// Checks every invariant of the three configuration structures and their
/// mutual consistency. Never fails; problems are listed in the report.
pub fn validate_config(
    model: &ModelConfig,
    train: &TrainConfig,
    skel: &SkeletonSpec,
) -> ValidationReport {
    let mut r = validate_model(model);
    r.issues.extend(validate_train(train).issues);
    r.issues.extend(validate_skeleton(skel).issues);
    if model.num_joints != skel.num_joints() {
        r.push(
            "num_joints",
            format!(
                "model predicts {} joints but skeleton defines {}",
                model.num_joints,
                skel.num_joints()
            ),
        );
    }
    if validate_model(model).is_valid() && train.mask_ratio > 0.0 && train.mask_ratio < 1.0 {
        let n = model.num_tokens();
        if masked_count(n, train.mask_ratio) == 0 {
            r.push(
                "mask_ratio",
                format!("masks zero of {n} tokens; reconstruction loss undefined"),
            );
        }
    }
    r
}

/// round(ratio · n), halves rounded away from zero.
pub fn masked_count(n: usize, ratio: f64) -> usize {
    (ratio * n as f64).round() as usize
}

/// Parameters of one pre-norm transformer block of width `dim`.
pub fn block_param_count(dim: usize, ffn_ratio: usize) -> u64 {
    let c = dim as u64;
    let r = ffn_ratio as u64;
    let ln = 2 * c;
    let qkv = 3 * c * c + 3 * c;
    let out = c * c + c;
    let ffn = r * c * c + r * c + r * c * c + c;
    2 * ln + qkv + out + ffn
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamBreakdown {
    pub tokenizer: u64,
    pub encoder: u64,
    pub head: u64,
    pub decoder: u64,
}

impl ParamBreakdown {
    /// Tokenizer + encoder + pose head.
    pub fn pose_model(&self) -> u64 {
        self.tokenizer + self.encoder + self.head
    }
}

/// Closed-form trainable-scalar count per component.
pub fn param_breakdown(model: &ModelConfig) -> Result<ParamBreakdown> {
    validate_model(model).into_result()?;
    let c = model.embed_dim as u64;
    let d = model.spatial_crop as u64;
    let dt = model.temporal_crop as u64;
    let n = model.num_tokens() as u64;
    let ch = model.head_channels as u64;
    let j = model.num_joints as u64;
    let dd = model.decoder_dim as u64;

    let tokenizer = (d * d * c + c) + (dt * c * c + c) + (c * c + c) + n * c;
    let encoder = model.encoder_depth as u64 * block_param_count(model.embed_dim, model.ffn_ratio);
    let out_ch = 2 * dt * j;
    let head = (c * ch * 16 + ch) + 2 * ch + (ch * ch * 16 + ch) + 2 * ch + (ch * out_ch + out_ch);
    let decoder = (c * dd + dd)
        + dd
        + n * dd
        + model.decoder_depth as u64 * block_param_count(model.decoder_dim, model.ffn_ratio)
        + (dd * dt * d * d + dt * d * d);
    Ok(ParamBreakdown {
        tokenizer,
        encoder,
        head,
        decoder,
    })
}

/// Trainable scalars in tokenizer + encoder + pose head.
pub fn param_count(model: &ModelConfig) -> Result<u64> {
    Ok(param_breakdown(model)?.pose_model())
}

/// The single JSON document read by the CLI.
///
/// An optional `"preset"` key (`"full"` or `"desk"`) selects the base
/// values; every other key overrides a field of that base. Unknown keys are
/// rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub skeleton: SkeletonSpec,
    pub synth: crate::dataio::synth::SynthSpec,
}

impl RunConfig {
    pub fn full() -> Self {
        RunConfig {
            run_id: "run".into(),
            model: ModelConfig::full(),
            train: TrainConfig::full(),
            skeleton: SkeletonSpec::default_14(),
            synth: crate::dataio::synth::SynthSpec::full_grid(),
        }
    }

    pub fn desk() -> Self {
        RunConfig {
            run_id: "run".into(),
            model: ModelConfig::desk(),
            train: TrainConfig::desk(),
            skeleton: SkeletonSpec::default_14(),
            synth: crate::dataio::synth::SynthSpec::desk(),
        }
    }

    pub fn from_json_str(text: &str) -> std::result::Result<Self, String> {
        let mut user: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let obj = user
            .as_object_mut()
            .ok_or_else(|| "config must be a JSON object".to_string())?;
        let preset = match obj.remove("preset") {
            None => "full".to_string(),
            Some(Value::String(s)) => s,
            Some(other) => return Err(format!("preset must be a string, got {other}")),
        };
        let base = match preset.as_str() {
            "full" => Self::full(),
            "desk" => Self::desk(),
            other => return Err(format!("unknown preset {other:?} (expected full or desk)")),
        };
        let mut merged = serde_json::to_value(&base).map_err(|e| e.to_string())?;
        merge_checked(&mut merged, user, "")?;
        serde_json::from_value(merged).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|m| Error::Config(format!("{}: {m}", path.display())))
    }

    pub fn validate(&self) -> ValidationReport {
        validate_config(&self.model, &self.train, &self.skeleton)
    }
}

/// Overlays `user` onto `base`, failing on keys `base` does not have.
/// Arrays and scalars replace wholesale; objects merge recursively.
fn merge_checked(base: &mut Value, user: Value, path: &str) -> std::result::Result<(), String> {
    match (base, user) {
        (Value::Object(b), Value::Object(u)) => {
            for (k, v) in u {
                let child = if path.is_empty() {
                    k.clone()
                } else {
                    format!("{path}.{k}")
                };
                match b.get_mut(&k) {
                    Some(slot) => merge_checked(slot, v, &child)?,
                    None => return Err(format!("unknown key {child:?}")),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}
