//! Three-stage training schedule, evaluation and prediction export.
//!
//! Stages run in the order pretrain → warmup → finetune. Each stage starts a
//! fresh AdamW state, updates only the parameters its predicate admits, and
//! writes `{run_dir}/{stage}/epoch_{n}.ckpt`. A stage whose final checkpoint
//! already exists is skipped; a stage with an intermediate checkpoint
//! resumes from it.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::config::{RunConfig, SkeletonSpec, TrainConfig};
use crate::dataio::manifest::{DatasetManifest, LoadedSequence, Split};
use crate::dataio::{compute_limb_stats, LimbStats, PoseSequence, PressureSequence};
use crate::error::{Error, Result};
use crate::head::Keypoints;
use crate::mae::sample_mask;
use crate::metrics::{
    pckh_counts, position_error_sum, write_rows, LossBreakdown, LossWeights, MetricRow,
};
use crate::model::{prefix, PoseModel, SupervisedTarget};
use crate::nn::Grads;
use crate::optim::{AdamWConfig, OptimizerState};
use crate::scalar::Scalar;

pub const REPORT_NAME: &str = "report.csv";
pub const LOCK_NAME: &str = ".lock";
pub const THREADS_ENV: &str = "TPL_NUM_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrain,
    Warmup,
    Finetune,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Pretrain, Stage::Warmup, Stage::Finetune];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Pretrain => "pretrain",
            Stage::Warmup => "warmup",
            Stage::Finetune => "finetune",
        }
    }

    /// Whether the stage updates the parameter called `name`.
    pub fn trains(self, name: &str) -> bool {
        match self {
            Stage::Pretrain => !name.starts_with(prefix::HEAD),
            Stage::Warmup => name.starts_with(prefix::TOKENIZER) || name.starts_with(prefix::HEAD),
            Stage::Finetune => !name.starts_with(prefix::DECODER),
        }
    }

    pub fn is_supervised(self) -> bool {
        self != Stage::Pretrain
    }

    fn index(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSettings {
    pub stage: Stage,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
}

impl StageSettings {
    pub fn from_config(stage: Stage, t: &TrainConfig) -> Self {
        let (lr, weight_decay, epochs) = match stage {
            Stage::Pretrain => (t.pretrain_lr, t.pretrain_weight_decay, t.pretrain_epochs),
            Stage::Warmup => (t.warmup_lr, t.supervised_weight_decay, t.warmup_epochs),
            Stage::Finetune => (t.finetune_lr, t.supervised_weight_decay, t.finetune_epochs),
        };
        StageSettings {
            stage,
            lr,
            weight_decay,
            epochs,
        }
    }

    fn adamw(&self, t: &TrainConfig) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            beta1: t.adam_beta1,
            beta2: t.adam_beta2,
            eps: t.adam_eps,
        }
    }
}

/// Ordered stages of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct StagePlan {
    pub stages: Vec<StageSettings>,
    pub from_scratch: bool,
}

impl StagePlan {
    pub fn new(train: &TrainConfig, from_scratch: bool) -> Self {
        let stages = Stage::ALL
            .into_iter()
            .filter(|&s| !(from_scratch && s == Stage::Pretrain))
            .map(|s| StageSettings::from_config(s, train))
            .collect();
        StagePlan {
            stages,
            from_scratch,
        }
    }

    /// Keeps only the listed stages, preserving order.
    pub fn only(mut self, keep: &[Stage]) -> Self {
        self.stages.retain(|s| keep.contains(&s.stage));
        self
    }

    fn settings(&self, stage: Stage) -> Option<&StageSettings> {
        self.stages.iter().find(|s| s.stage == stage)
    }
}

/// splitmix64 over the parts; stable across platforms.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// Reads `TPL_NUM_THREADS` and sizes the global rayon pool once.
pub fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Train and test sequences plus the limb statistics of the train split.
#[derive(Debug, Clone)]
pub struct Dataset<S> {
    pub train: Vec<LoadedSequence<S>>,
    pub test: Vec<LoadedSequence<S>>,
    pub skeleton: SkeletonSpec,
    pub limb_stats: LimbStats,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(
        train: Vec<LoadedSequence<S>>,
        test: Vec<LoadedSequence<S>>,
        skeleton: SkeletonSpec,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptySplit("train split has no sequences".into()));
        }
        let limb_stats = compute_limb_stats(train.iter().map(|s| &s.pose), &skeleton)?;
        Ok(Dataset {
            train,
            test,
            skeleton,
            limb_stats,
        })
    }

    pub fn from_manifest(manifest: &DatasetManifest) -> Result<Self> {
        Dataset::new(
            manifest.load_split(Split::Train)?,
            manifest.load_split(Split::Test)?,
            manifest.skeleton.clone(),
        )
    }

    fn check_against(&self, run: &RunConfig) -> Result<()> {
        let m = &run.model;
        for seq in self.train.iter().chain(&self.test) {
            if seq.pressure.grid_w() != m.grid_w || seq.pressure.grid_h() != m.grid_h {
                return Err(Error::Shape(format!(
                    "sequence {} is {}x{}, model expects {}x{}",
                    seq.id,
                    seq.pressure.grid_w(),
                    seq.pressure.grid_h(),
                    m.grid_w,
                    m.grid_h
                )));
            }
            if seq.pose.num_joints() != m.num_joints {
                return Err(Error::Shape(format!(
                    "sequence {} has {} joints, model expects {}",
                    seq.id,
                    seq.pose.num_joints(),
                    m.num_joints
                )));
            }
        }
        if self.skeleton != run.skeleton {
            return Err(Error::Config(
                "dataset skeleton differs from the configured skeleton".into(),
            ));
        }
        Ok(())
    }
}

/// Exclusive claim on a run directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(run_dir: &Path) -> Result<Self> {
        fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
        let path = run_dir.join(LOCK_NAME);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(RunLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn checkpoint_path(run_dir: &Path, stage: Stage, epoch: usize) -> PathBuf {
    run_dir.join(stage.as_str()).join(format!("epoch_{epoch}.ckpt"))
}

/// Highest-numbered checkpoint of a stage, if any.
pub fn latest_checkpoint(run_dir: &Path, stage: Stage) -> Result<Option<(usize, PathBuf)>> {
    let dir = run_dir.join(stage.as_str());
    if !dir.exists() {
        return Ok(None);
    }
    let mut best = None;
    for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
        let entry = entry.map_err(|e| Error::io(&dir, e))?;
        let name = entry.file_name();
        let Some(n) = name
            .to_str()
            .and_then(|s| s.strip_prefix("epoch_"))
            .and_then(|s| s.strip_suffix(".ckpt"))
            .and_then(|s| s.parse::<usize>().ok())
        else {
            continue;
        };
        if best.as_ref().is_none_or(|(b, _)| n > *b) {
            best = Some((n, entry.path()));
        }
    }
    Ok(best)
}

/// One training item: sequence index and window start.
type Item = (usize, usize);

fn training_items<S: Scalar>(
    data: &Dataset<S>,
    t: usize,
    per_seq: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Item> {
    let mut items = Vec::new();
    for (i, seq) in data.train.iter().enumerate() {
        let len = seq.pressure.num_frames();
        if len < t {
            continue;
        }
        for _ in 0..per_seq {
            items.push((i, rng.random_range(0..=len - t)));
        }
    }
    items.shuffle(rng);
    items
}

/// Mean losses of one epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpochLoss {
    pub supervised: LossBreakdown,
    pub recon: f64,
}

/// Trains one stage for epochs `start_epoch + 1 ..= settings.epochs`.
#[allow(clippy::too_many_arguments)]
fn train_epochs<S: Scalar>(
    run: &RunConfig,
    settings: &StageSettings,
    data: &Dataset<S>,
    model: &mut PoseModel<S>,
    opt: &mut OptimizerState<S>,
    start_epoch: usize,
    mut on_epoch: impl FnMut(usize, &PoseModel<S>, &OptimizerState<S>, EpochLoss) -> Result<()>,
) -> Result<()> {
    let t = run.model.frames_t;
    let tc = &run.train;
    let stage = settings.stage;
    let weights = LossWeights {
        limb: tc.limb_loss_weight,
        depth: tc.depth_loss_weight,
    };
    for epoch in start_epoch + 1..=settings.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[tc.rng_seed, stage.index(), epoch as u64]));
        let items = training_items(data, t, tc.windows_per_sequence, &mut rng);
        if items.is_empty() {
            return Err(Error::EmptySplit(format!(
                "no train sequence has {t} frames"
            )));
        }
        let mut sum = EpochLoss::default();
        for (step, batch) in items.chunks(tc.batch_size).enumerate() {
            let results: Vec<Result<(Grads<S>, EpochLoss)>> = batch
                .par_iter()
                .enumerate()
                .map(|(k, &(si, start))| {
                    let seq = &data.train[si];
                    let x = seq.pressure.window(start, t);
                    let mut g = Grads::zeros_like(&model.params);
                    let mut loss = EpochLoss::default();
                    if stage.is_supervised() {
                        let pose = seq.pose.window(start, t);
                        let target = SupervisedTarget {
                            pose: &pose,
                            stats: &data.limb_stats,
                            skeleton: &data.skeleton,
                            weights,
                        };
                        loss.supervised = model.supervised_grad(&x, &target, &mut g)?;
                    } else {
                        let seed = derive_seed(&[
                            tc.rng_seed,
                            stage.index(),
                            epoch as u64,
                            step as u64,
                            k as u64,
                        ]);
                        let mask = sample_mask(run.model.num_tokens(), tc.mask_ratio, seed)?;
                        loss.recon = model.pretrain_grad(&x, &mask, &mut g)?.as_f64();
                    }
                    Ok((g, loss))
                })
                .collect();
            let mut total: Option<Grads<S>> = None;
            for r in results {
                let (g, loss) = r?;
                sum.supervised.add_scaled(&loss.supervised, 1.0);
                sum.recon += loss.recon;
                match total.as_mut() {
                    None => total = Some(g),
                    Some(acc) => acc.accumulate(&g),
                }
            }
            let mut total = total.expect("non-empty batch");
            total.scale(S::one() / S::from_usize_lossy(batch.len()));
            opt.step(&mut model.params, &total, |n| stage.trains(n))?;
        }
        let n = items.len() as f64;
        let mut mean = EpochLoss::default();
        mean.supervised.add_scaled(&sum.supervised, 1.0 / n);
        mean.recon = sum.recon / n;
        info!(
            "{stage} epoch {epoch}/{}: loss {:.6} recon {:.6}",
            settings.epochs, mean.supervised.total, mean.recon
        );
        on_epoch(epoch, model, opt, mean)?;
    }
    Ok(())
}

/// Pooled and per-sequence evaluation results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mpjpe_cm: f64,
    pub pckh: f64,
    pub windows: usize,
    pub skipped_sequences: usize,
    pub per_sequence: Vec<SequenceMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMetrics {
    pub sequence_id: String,
    pub windows: usize,
    pub mpjpe_cm: f64,
    pub pckh: f64,
}

/// Evaluates `predict` on non-overlapping `t`-frame windows of every
/// sequence. Sequences shorter than `t` are skipped and counted.
pub fn evaluate_with<S, F>(
    sequences: &[LoadedSequence<S>],
    t: usize,
    skel: &SkeletonSpec,
    cell_pitch_cm: f64,
    predict: F,
) -> Result<EvalReport>
where
    S: Scalar,
    F: Fn(&PressureSequence<S>, &PoseSequence<S>) -> Result<Keypoints<S>> + Sync,
{
    struct Acc {
        err: f64,
        joints: usize,
        correct: usize,
        windows: usize,
    }
    let per: Vec<Result<Option<Acc>>> = sequences
        .par_iter()
        .map(|seq| {
            let len = seq.pressure.num_frames();
            if len < t {
                return Ok(None);
            }
            let mut acc = Acc {
                err: 0.0,
                joints: 0,
                correct: 0,
                windows: 0,
            };
            for start in (0..=len - t).step_by(t) {
                let x = seq.pressure.window(start, t);
                let gt = seq.pose.window(start, t);
                let kp = predict(&x, &gt)?;
                let (e, n) = position_error_sum(kp.coords.view(), gt.joints.view())?;
                let (c, _) = pckh_counts(kp.coords.view(), gt.joints.view(), skel, 0.5)?;
                acc.err += e;
                acc.joints += n;
                acc.correct += c;
                acc.windows += 1;
            }
            Ok(Some(acc))
        })
        .collect();
    let mut report = EvalReport {
        mpjpe_cm: 0.0,
        pckh: 0.0,
        windows: 0,
        skipped_sequences: 0,
        per_sequence: Vec::new(),
    };
    let (mut err, mut joints, mut correct) = (0.0, 0usize, 0usize);
    for (seq, acc) in sequences.iter().zip(per) {
        match acc? {
            None => {
                warn!("sequence {} shorter than {t} frames; skipped", seq.id);
                report.skipped_sequences += 1;
            }
            Some(a) => {
                err += a.err;
                joints += a.joints;
                correct += a.correct;
                report.windows += a.windows;
                report.per_sequence.push(SequenceMetrics {
                    sequence_id: seq.id.clone(),
                    windows: a.windows,
                    mpjpe_cm: a.err / a.joints as f64 * cell_pitch_cm,
                    pckh: 100.0 * a.correct as f64 / a.joints as f64,
                });
            }
        }
    }
    if joints == 0 {
        return Err(Error::EmptySplit(format!(
            "no sequence has at least {t} frames"
        )));
    }
    report.mpjpe_cm = err / joints as f64 * cell_pitch_cm;
    report.pckh = 100.0 * correct as f64 / joints as f64;
    Ok(report)
}

pub fn evaluate<S: Scalar>(
    model: &PoseModel<S>,
    sequences: &[LoadedSequence<S>],
    skel: &SkeletonSpec,
) -> Result<EvalReport> {
    evaluate_with(
        sequences,
        model.cfg.frames_t,
        skel,
        model.cfg.cell_pitch_cm,
        |x, _| Ok(model.predict(x)?.1),
    )
}

pub fn write_eval_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    for row in &report.per_sequence {
        w.serialize(row).map_err(csv_err)?;
    }
    w.serialize(SequenceMetrics {
        sequence_id: "ALL".into(),
        windows: report.windows,
        mpjpe_cm: report.mpjpe_cm,
        pckh: report.pckh,
    })
    .map_err(csv_err)?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize)]
struct PredRow<'a> {
    sequence_id: &'a str,
    frame: usize,
    joint: &'a str,
    x: f64,
    y: f64,
    z: f64,
}

/// Writes keypoints for every non-overlapping window of `sequences`.
/// Returns the number of rows.
pub fn export_predictions<S: Scalar>(
    model: &PoseModel<S>,
    sequences: &[LoadedSequence<S>],
    skel: &SkeletonSpec,
    path: &Path,
) -> Result<usize> {
    let t = model.cfg.frames_t;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut rows = 0;
    for seq in sequences {
        let len = seq.pressure.num_frames();
        if len < t {
            warn!("sequence {} shorter than {t} frames; skipped", seq.id);
            continue;
        }
        for start in (0..=len - t).step_by(t) {
            let (_, kp) = model.predict(&seq.pressure.window(start, t))?;
            let c: &Array3<S> = &kp.coords;
            for f in 0..t {
                for (j, joint) in skel.joint_names.iter().enumerate() {
                    w.serialize(PredRow {
                        sequence_id: &seq.id,
                        frame: start + f,
                        joint,
                        x: c[[f, j, 0]].as_f64(),
                        y: c[[f, j, 1]].as_f64(),
                        z: c[[f, j, 2]].as_f64(),
                    })
                    .map_err(|source| Error::Csv {
                        path: path.to_path_buf(),
                        source,
                    })?;
                    rows += 1;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(rows)
}

/// Outcome of [`run_plan`].
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    /// Final checkpoint of every stage in the plan.
    pub checkpoints: Vec<(Stage, PathBuf)>,
    pub test: Option<EvalReport>,
    pub rows: Vec<MetricRow>,
}

fn report_rows(run_dir: &Path) -> Result<Vec<MetricRow>> {
    let path = run_dir.join(REPORT_NAME);
    if path.exists() {
        crate::metrics::read_rows(&path)
    } else {
        Ok(Vec::new())
    }
}

fn stage_of(row: &MetricRow) -> Option<Stage> {
    row.stage.parse().ok()
}

/// Runs every stage of `plan` under `{out_dir}/{run_id}`.
///
/// The model entering the first stage is loaded from the previous stage's
/// final checkpoint when one is expected (warm-up after pre-training,
/// fine-tune after warm-up) and freshly initialised otherwise.
pub fn run_plan<S: Scalar>(
    run: &RunConfig,
    data: &Dataset<S>,
    out_dir: &Path,
    plan: &StagePlan,
) -> Result<RunSummary> {
    run.validate().into_result()?;
    data.check_against(run)?;
    let run_dir = out_dir.join(&run.run_id);
    let _lock = RunLock::acquire(&run_dir)?;
    let report_path = run_dir.join(REPORT_NAME);
    let mut rows = report_rows(&run_dir)?;
    let mut model: Option<PoseModel<S>> = None;
    let mut checkpoints = Vec::new();
    let mut test = None;

    for settings in &plan.stages {
        let stage = settings.stage;
        let final_path = checkpoint_path(&run_dir, stage, settings.epochs);
        let meta = |epoch| CheckpointMeta {
            run_id: run.run_id.clone(),
            stage: stage.as_str().to_string(),
            epoch,
            model: run.model.clone(),
            train: run.train.clone(),
            skeleton: data.skeleton.clone(),
            limb_stats: Some(data.limb_stats.clone()),
            optimizer: None,
        };

        if final_path.exists() {
            info!("{stage}: final checkpoint present, skipping");
            model = Some(Checkpoint::load(&final_path)?.restore_model()?);
            checkpoints.push((stage, final_path));
            continue;
        }

        let (mut m, mut opt, start) = match latest_checkpoint(&run_dir, stage)? {
            Some((epoch, path)) => {
                info!("{stage}: resuming from {}", path.display());
                let ck = Checkpoint::load(&path)?;
                let m = ck.restore_model::<S>()?;
                let opt = ck
                    .restore_optimizer(&m)?
                    .unwrap_or_else(|| OptimizerState::new(&m.params, settings.adamw(&run.train)));
                (m, opt, epoch)
            }
            None => {
                let m = match (model.take(), stage) {
                    (Some(m), _) => m,
                    (None, Stage::Pretrain) => PoseModel::new(&run.model, run.train.rng_seed)?,
                    (None, Stage::Warmup) if plan.from_scratch => {
                        PoseModel::new(&run.model, run.train.rng_seed)?
                    }
                    (None, _) => {
                        let prev = if stage == Stage::Warmup {
                            Stage::Pretrain
                        } else {
                            Stage::Warmup
                        };
                        let epochs = plan
                            .settings(prev)
                            .map(|s| s.epochs)
                            .unwrap_or_else(|| StageSettings::from_config(prev, &run.train).epochs);
                        let path = checkpoint_path(&run_dir, prev, epochs);
                        if !path.exists() {
                            return Err(Error::MissingPrerequisite(path));
                        }
                        Checkpoint::load(&path)?.restore_model()?
                    }
                };
                let opt = OptimizerState::new(&m.params, settings.adamw(&run.train));
                (m, opt, 0)
            }
        };
        rows.retain(|r| stage_of(r).is_some_and(|s| s < stage) || (stage_of(r) == Some(stage) && r.epoch <= start && r.split == "train"));

        train_epochs(run, settings, data, &mut m, &mut opt, start, |epoch, m, opt, loss| {
            let mut row = MetricRow::new(&run.run_id, stage.as_str(), epoch, "train");
            if stage.is_supervised() {
                row = row.with_losses(&loss.supervised);
            } else {
                row.recon_loss = Some(loss.recon);
            }
            rows.push(row);
            let every = run.train.checkpoint_every;
            if epoch == settings.epochs || (every > 0 && epoch % every == 0) {
                Checkpoint::capture(meta(epoch), m, Some(opt))
                    .save(&checkpoint_path(&run_dir, stage, epoch))?;
            }
            write_rows(&report_path, &rows)
        })?;
        if settings.epochs == 0 {
            Checkpoint::capture(meta(0), &m, Some(&opt)).save(&final_path)?;
        }

        if stage.is_supervised() && !data.test.is_empty() {
            let r = evaluate(&m, &data.test, &data.skeleton)?;
            let mut row = MetricRow::new(&run.run_id, stage.as_str(), settings.epochs, "test");
            row.mpjpe_cm = Some(r.mpjpe_cm);
            row.pckh = Some(r.pckh);
            rows.push(row);
            write_rows(&report_path, &rows)?;
            test = Some(r);
        }
        checkpoints.push((stage, final_path));
        model = Some(m);
    }
    write_rows(&report_path, &rows)?;
    Ok(RunSummary {
        run_dir,
        checkpoints,
        test,
        rows,
    })
}
