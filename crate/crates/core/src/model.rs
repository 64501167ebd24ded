//! The full network: tokenizer → encoder → pose head, plus the MAE decoder
//! used only during pre-training.

use ndarray::ArrayView3;

use crate::config::{validate_model, ModelConfig, SkeletonSpec};
use crate::dataio::{LimbStats, PoseSequence, PressureSequence};
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::head::{
    decode_keypoints, decode_keypoints_backward, render_target_heatmaps, HeatmapStack, Keypoints,
    PoseHead,
};
use crate::mae::{masked_recon_grad, masked_recon_loss, MaeDecoder, MaskSpec};
use crate::metrics::{total_loss, total_loss_value, LossBreakdown, LossInputs, LossWeights};
use crate::nn::{Grads, Init, ParamStore};
use crate::scalar::Scalar;
use crate::tokenizer::{extract_cube_targets, Tokenizer};

/// Parameter name prefixes of the four components.
pub mod prefix {
    pub const TOKENIZER: &str = "tokenizer.";
    pub const ENCODER: &str = "encoder.";
    pub const HEAD: &str = "head.";
    pub const DECODER: &str = "decoder.";
}

#[derive(Debug, Clone)]
pub struct PoseModel<S> {
    pub cfg: ModelConfig,
    pub tokenizer: Tokenizer,
    pub encoder: Encoder,
    pub head: PoseHead,
    pub decoder: MaeDecoder,
    pub params: ParamStore<S>,
}

/// Everything the supervised objective needs besides the input window.
pub struct SupervisedTarget<'a, S> {
    pub pose: &'a PoseSequence<S>,
    pub stats: &'a LimbStats,
    pub skeleton: &'a SkeletonSpec,
    pub weights: LossWeights,
}

impl<S: Scalar> PoseModel<S> {
    /// Builds every component from a single seeded initializer.
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        validate_model(cfg).into_result()?;
        let mut params = ParamStore::new();
        let mut init = Init::new(seed);
        let tokenizer = Tokenizer::new(&mut params, &mut init, cfg);
        let encoder = Encoder::new(&mut params, &mut init, cfg);
        let head = PoseHead::new(&mut params, &mut init, cfg);
        let decoder = MaeDecoder::new(&mut params, &mut init, cfg);
        Ok(PoseModel {
            cfg: cfg.clone(),
            tokenizer,
            encoder,
            head,
            decoder,
            params,
        })
    }

    pub fn num_params_with_prefix(&self, prefix: &str) -> usize {
        self.params.num_scalars_with_prefix(prefix)
    }

    fn check_target(&self, pose: &PoseSequence<S>) -> Result<()> {
        let want = (self.cfg.frames_t, self.cfg.num_joints, 3);
        if pose.joints.dim() != want {
            return Err(Error::Shape(format!(
                "pose window is {:?}, model expects {want:?}",
                pose.joints.dim()
            )));
        }
        Ok(())
    }

    /// Heatmaps, depth maps and decoded keypoints for one T-frame window.
    pub fn predict(&self, x: &PressureSequence<S>) -> Result<(HeatmapStack<S>, Keypoints<S>)> {
        let p = &self.params;
        let (tokens, _) = self.tokenizer.forward(p, x.frames.view())?;
        let (f_o, _) = self.encoder.encode(p, &tokens)?;
        let (maps, _) = self.head.forward(p, &f_o)?;
        let (kp, _) = decode_keypoints(&maps, &self.cfg);
        Ok((maps, kp))
    }

    /// Loss value only, in `S`; used for finite-difference checks.
    pub fn supervised_loss(
        &self,
        x: &PressureSequence<S>,
        target: &SupervisedTarget<'_, S>,
    ) -> Result<(S, LossBreakdown)> {
        self.check_target(target.pose)?;
        let (maps, kp) = self.predict(x)?;
        let (tmaps, _) = render_target_heatmaps(target.pose, &self.cfg);
        let inputs = LossInputs {
            pred_heatmaps: maps.heatmaps.view(),
            target_heatmaps: tmaps.heatmaps.view(),
            keypoints: kp.coords.view(),
            gt: target.pose.joints.view(),
        };
        total_loss_value(&inputs, target.stats, target.skeleton, target.weights)
    }

    /// Forward and backward pass of the supervised objective; parameter
    /// gradients are added to `g`.
    pub fn supervised_grad(
        &self,
        x: &PressureSequence<S>,
        target: &SupervisedTarget<'_, S>,
        g: &mut Grads<S>,
    ) -> Result<LossBreakdown> {
        self.check_target(target.pose)?;
        let p = &self.params;
        let (tokens, tok_cache) = self.tokenizer.forward(p, x.frames.view())?;
        let (f_o, enc_cache) = self.encoder.encode(p, &tokens)?;
        let (maps, head_cache) = self.head.forward(p, &f_o)?;
        let (kp, dec_cache) = decode_keypoints(&maps, &self.cfg);
        let (tmaps, _) = render_target_heatmaps(target.pose, &self.cfg);
        let inputs = LossInputs {
            pred_heatmaps: maps.heatmaps.view(),
            target_heatmaps: tmaps.heatmaps.view(),
            keypoints: kp.coords.view(),
            gt: target.pose.joints.view(),
        };
        let (breakdown, lg) = total_loss(&inputs, target.stats, target.skeleton, target.weights)?;
        let mut dmaps = decode_keypoints_backward(&maps, &dec_cache, &self.cfg, lg.keypoints.view());
        dmaps.heatmaps += &lg.heatmaps;
        let d_fo = self.head.backward(p, &head_cache, &dmaps, g);
        let d_tokens = self.encoder.backward(p, &enc_cache, d_fo.view(), g);
        self.tokenizer.backward(p, &tok_cache, d_tokens.view(), g);
        Ok(breakdown)
    }

    /// Masked reconstruction loss of one window.
    pub fn pretrain_loss(&self, x: &PressureSequence<S>, mask: &MaskSpec) -> Result<S> {
        let p = &self.params;
        let (tokens, _) = self.tokenizer.forward(p, x.frames.view())?;
        let (f_o, _) = self.encoder.encode(p, &tokens)?;
        let (pred, _) = self.decoder.decode(p, &f_o, mask)?;
        let target = extract_cube_targets(&self.cfg, x)?;
        masked_recon_loss(pred.view(), &target, mask)
    }

    pub fn pretrain_grad(
        &self,
        x: &PressureSequence<S>,
        mask: &MaskSpec,
        g: &mut Grads<S>,
    ) -> Result<S> {
        let p = &self.params;
        let (tokens, tok_cache) = self.tokenizer.forward(p, x.frames.view())?;
        let (f_o, enc_cache) = self.encoder.encode(p, &tokens)?;
        let (pred, mae_cache) = self.decoder.decode(p, &f_o, mask)?;
        let target = extract_cube_targets(&self.cfg, x)?;
        let loss = masked_recon_loss(pred.view(), &target, mask)?;
        let dpred = masked_recon_grad(pred.view(), &target, mask)?;
        let d_fo = self.decoder.backward(p, &mae_cache, dpred.view(), g);
        let d_tokens = self.encoder.backward(p, &enc_cache, d_fo.view(), g);
        self.tokenizer.backward(p, &tok_cache, d_tokens.view(), g);
        Ok(loss)
    }

    /// Per-head attention maps of encoder block `block` for one window.
    pub fn attention_weights(
        &self,
        x: ArrayView3<'_, S>,
        block: usize,
    ) -> Result<Vec<ndarray::Array2<S>>> {
        let (tokens, _) = self.tokenizer.forward(&self.params, x)?;
        self.encoder.attention_weights(&self.params, &tokens, block)
    }

    pub fn cast<U: Scalar>(&self) -> PoseModel<U> {
        PoseModel {
            cfg: self.cfg.clone(),
            tokenizer: self.tokenizer.clone(),
            encoder: self.encoder.clone(),
            head: self.head.clone(),
            decoder: self.decoder.clone(),
            params: self.params.cast(),
        }
    }
}
