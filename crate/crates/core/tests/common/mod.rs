#![allow(dead_code)]

pub mod oracles;

use ndarray::{Array3, ArrayD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tpl_core::config::SkeletonSpec;
use tpl_core::dataio::{LimbStats, PoseSequence, PressureSequence};
use tpl_core::nn::{Grads, ParamStore};
use tpl_core::mae::sample_mask;
use tpl_core::metrics::LossWeights;
use tpl_core::model::SupervisedTarget;
use tpl_core::{ModelConfig, PoseModel64};

/// Grid 16×16, d=4 relaxed, T=4, d_t=2, C=8, depth 2, J=2.
pub fn micro_config() -> ModelConfig {
    ModelConfig {
        grid_w: 16,
        grid_h: 16,
        frames_t: 4,
        spatial_crop: 4,
        temporal_crop: 2,
        embed_dim: 8,
        encoder_depth: 2,
        num_heads: 2,
        ffn_ratio: 2,
        decoder_depth: 1,
        decoder_dim: 8,
        decoder_heads: 2,
        head_channels: 4,
        num_joints: 2,
        heatmap_sigma: 2.0,
        softargmax_beta: 4.0,
        cell_pitch_cm: 1.0,
        strict_geometry: false,
        ..ModelConfig::desk()
    }
}

pub fn two_joint_skeleton() -> SkeletonSpec {
    SkeletonSpec {
        joint_names: vec!["head".into(), "neck".into()],
        limbs: vec![(1, 0)],
        head_limb_index: 0,
    }
}

pub fn random_pressure(cfg: &ModelConfig, seed: u64) -> PressureSequence<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = Array3::from_shape_simple_fn((cfg.frames_t, cfg.grid_h, cfg.grid_w), || {
        rng.random_range(0.0..1.0)
    });
    PressureSequence::new(frames).unwrap()
}

pub fn random_pose(cfg: &ModelConfig, seed: u64) -> PoseSequence<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let joints = Array3::from_shape_fn((cfg.frames_t, cfg.num_joints, 3), |(_, _, c)| {
        if c == 2 {
            rng.random_range(0.0..2.0)
        } else {
            rng.random_range(2.0..(cfg.grid_w as f64 - 3.0))
        }
    });
    PoseSequence::new(joints).unwrap()
}

/// Band chosen so that both hinge branches are exercised by untrained models.
pub fn limb_band() -> LimbStats {
    LimbStats {
        lower: vec![3.0],
        upper: vec![4.0],
    }
}

/// Multiplies every small-init parameter by `factor` so gradients are far
/// above finite-difference round-off. Normalisation parameters and the
/// Glorot-initialised tokenizer weights are left alone.
pub fn amplify(store: &mut ParamStore<f64>, factor: f64) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = store.name(id);
        let glorot = name.starts_with("tokenizer.") && name.ends_with(".weight");
        if !(glorot || name.ends_with(".gamma") || name.ends_with(".beta")) {
            store.value_mut(id).mapv_inplace(|v| v * factor);
        }
    }
}

/// ‖a − n‖ / max(‖a‖, ‖n‖) for one tensor, zero when both are negligible.
pub fn relative_error(analytic: &ArrayD<f64>, numeric: &ArrayD<f64>) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `loss` with respect to every scalar of every
/// parameter whose name passes `filter`, compared tensor by tensor against
/// `analytic`. Returns (name, relative error) pairs.
pub fn check_param_grads(
    store: &ParamStore<f64>,
    analytic: &Grads<f64>,
    filter: impl Fn(&str) -> bool,
    loss: impl Fn(&ParamStore<f64>) -> f64,
) -> Vec<(String, f64)> {
    let h = 1e-6;
    let mut work = store.clone();
    let mut out = Vec::new();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = store.name(id).to_string();
        if !filter(&name) {
            continue;
        }
        let mut numeric = ArrayD::zeros(store.value(id).raw_dim());
        for k in 0..numeric.len() {
            let orig = store.value(id).as_slice().unwrap()[k];
            work.value_mut(id).as_slice_mut().unwrap()[k] = orig + h;
            let up = loss(&work);
            work.value_mut(id).as_slice_mut().unwrap()[k] = orig - h;
            let down = loss(&work);
            work.value_mut(id).as_slice_mut().unwrap()[k] = orig;
            numeric.as_slice_mut().unwrap()[k] = (up - down) / (2.0 * h);
        }
        out.push((name, relative_error(analytic.get(id), &numeric)));
    }
    out
}

pub fn worst(errors: &[(String, f64)]) -> (String, f64) {
    errors
        .iter()
        .cloned()
        .fold((String::new(), 0.0), |acc, e| if e.1 > acc.1 { e } else { acc })
}

fn with_params(model: &PoseModel64, p: &ParamStore<f64>) -> PoseModel64 {
    PoseModel64 {
        params: p.clone(),
        ..model.clone()
    }
}

/// Worst per-tensor error of the masked reconstruction gradient on the
/// micro model (pose head excluded, it does not enter the loss).
pub fn masked_reconstruction_grad_error() -> (String, f64) {
    let cfg = micro_config();
    let mut model = PoseModel64::new(&cfg, 11).unwrap();
    amplify(&mut model.params, 10.0);
    let x = random_pressure(&cfg, 1);
    let mask = sample_mask(cfg.num_tokens(), 0.75, 5).unwrap();
    let mut g = Grads::zeros_like(&model.params);
    model.pretrain_grad(&x, &mask, &mut g).unwrap();
    let errors = check_param_grads(&model.params, &g, |n| !n.starts_with("head."), |p| {
        with_params(&model, p).pretrain_loss(&x, &mask).unwrap()
    });
    worst(&errors)
}

/// Worst per-tensor error of the total supervised loss gradient on the
/// micro model (decoder excluded).
pub fn supervised_grad_error() -> (String, f64) {
    let cfg = micro_config();
    let mut model = PoseModel64::new(&cfg, 12).unwrap();
    amplify(&mut model.params, 10.0);
    let x = random_pressure(&cfg, 2);
    let pose = random_pose(&cfg, 3);
    let skel = two_joint_skeleton();
    let stats = limb_band();
    let target = SupervisedTarget {
        pose: &pose,
        stats: &stats,
        skeleton: &skel,
        weights: LossWeights { limb: 0.5, depth: 1.0 },
    };
    let mut g = Grads::zeros_like(&model.params);
    model.supervised_grad(&x, &target, &mut g).unwrap();
    let errors = check_param_grads(&model.params, &g, |n| !n.starts_with("decoder."), |p| {
        with_params(&model, p).supervised_loss(&x, &target).unwrap().0
    });
    worst(&errors)
}

/// A 32×32 synthetic set small enough for full pipeline runs in tests.
pub fn micro_dataset(num_sequences: usize, frames: usize, seed: u64) -> tpl_core::trainer::Dataset<f32> {
    use tpl_core::dataio::manifest::LoadedSequence;
    use tpl_core::dataio::{synthesize, Split, SynthSpec};
    let spec = SynthSpec {
        num_sequences,
        frames,
        seed,
        ..SynthSpec::desk()
    };
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for s in synthesize(&spec).unwrap() {
        let seq = LoadedSequence {
            id: s.id,
            split: s.split,
            pressure: s.pressure,
            pose: s.pose,
        };
        match seq.split {
            Split::Train => train.push(seq),
            Split::Test => test.push(seq),
        }
    }
    tpl_core::trainer::Dataset::new(train, test, SkeletonSpec::default_14()).unwrap()
}

/// Desk-grid run with a model small enough for a few epochs per test.
pub fn micro_run(run_id: &str) -> tpl_core::RunConfig {
    let mut run = tpl_core::RunConfig::desk();
    run.run_id = run_id.into();
    run.model = ModelConfig {
        frames_t: 4,
        temporal_crop: 2,
        embed_dim: 8,
        encoder_depth: 1,
        num_heads: 2,
        ffn_ratio: 2,
        decoder_dim: 8,
        decoder_heads: 2,
        head_channels: 4,
        ..run.model
    };
    run.train.pretrain_epochs = 1;
    run.train.warmup_epochs = 2;
    run.train.finetune_epochs = 3;
    run.train.windows_per_sequence = 2;
    run
}
