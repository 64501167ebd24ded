//! Supervised objective and evaluation metrics.

use std::path::Path;

use ndarray::{Array3, Array4, ArrayView3, ArrayView4};
use serde::{Deserialize, Serialize};

use crate::config::SkeletonSpec;
use crate::dataio::limbs::limb_length;
use crate::dataio::LimbStats;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn same_shape<D: ndarray::Dimension>(what: &str, a: &D, b: &D) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.slice(),
            b.slice()
        )));
    }
    Ok(())
}

fn check_stats(stats: &LimbStats, skel: &SkeletonSpec) -> Result<()> {
    let n = skel.num_limbs();
    if stats.lower.len() != n || stats.upper.len() != n {
        return Err(Error::MissingLimbStats {
            expected: n,
            found: stats.lower.len().min(stats.upper.len()),
        });
    }
    Ok(())
}

fn check_pose(pred: &ArrayView3<'_, impl Scalar>, skel: &SkeletonSpec) -> Result<()> {
    let (_, j, c) = pred.dim();
    if j != skel.num_joints() || c != 3 {
        return Err(Error::Shape(format!(
            "keypoints are {:?}, skeleton expects (_, {}, 3)",
            pred.dim(),
            skel.num_joints()
        )));
    }
    Ok(())
}

/// Hinge penalty on a single limb length; zero inside the closed band.
pub fn limb_penalty(length: f64, lower: f64, upper: f64) -> f64 {
    if length > upper {
        length - upper
    } else if length < lower {
        lower - length
    } else {
        0.0
    }
}

/// Mean over frames and limbs of the band penalty on predicted 3D limb lengths.
pub fn limb_length_loss<S: Scalar>(
    pred: ArrayView3<'_, S>,
    stats: &LimbStats,
    skel: &SkeletonSpec,
) -> Result<S> {
    check_stats(stats, skel)?;
    check_pose(&pred, skel)?;
    let frames = pred.dim().0;
    let mut sum = S::zero();
    for frame in pred.outer_iter() {
        for (l, &(a, b)) in skel.limbs.iter().enumerate() {
            let len = limb_length(frame, a, b);
            let (lo, hi) = (S::lit(stats.lower[l]), S::lit(stats.upper[l]));
            if len > hi {
                sum += len - hi;
            } else if len < lo {
                sum += lo - len;
            }
        }
    }
    Ok(sum / S::from_usize_lossy((frames * skel.num_limbs()).max(1)))
}

/// Gradient of [`limb_length_loss`] with respect to the keypoints.
pub fn limb_length_loss_grad<S: Scalar>(
    pred: ArrayView3<'_, S>,
    stats: &LimbStats,
    skel: &SkeletonSpec,
) -> Result<Array3<S>> {
    check_stats(stats, skel)?;
    check_pose(&pred, skel)?;
    let frames = pred.dim().0;
    let scale = S::one() / S::from_usize_lossy((frames * skel.num_limbs()).max(1));
    let mut g = Array3::zeros(pred.raw_dim());
    for (t, frame) in pred.outer_iter().enumerate() {
        for (l, &(a, b)) in skel.limbs.iter().enumerate() {
            let len = limb_length(frame, a, b);
            let (lo, hi) = (S::lit(stats.lower[l]), S::lit(stats.upper[l]));
            let sign = if len > hi {
                S::one()
            } else if len < lo {
                -S::one()
            } else {
                continue;
            };
            if len <= S::zero() {
                continue;
            }
            for c in 0..3 {
                let d = sign * scale * (frame[[a, c]] - frame[[b, c]]) / len;
                g[[t, a, c]] += d;
                g[[t, b, c]] -= d;
            }
        }
    }
    Ok(g)
}

/// Mean squared error over every heatmap element.
pub fn heatmap_mse<S: Scalar>(pred: ArrayView4<'_, S>, target: ArrayView4<'_, S>) -> Result<S> {
    same_shape("heatmap_mse", &pred.raw_dim(), &target.raw_dim())?;
    let n = pred.len().max(1);
    let sum: S = pred
        .iter()
        .zip(target.iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    Ok(sum / S::from_usize_lossy(n))
}

pub fn heatmap_mse_grad<S: Scalar>(
    pred: ArrayView4<'_, S>,
    target: ArrayView4<'_, S>,
) -> Result<Array4<S>> {
    same_shape("heatmap_mse", &pred.raw_dim(), &target.raw_dim())?;
    let scale = S::lit(2.0) / S::from_usize_lossy(pred.len().max(1));
    let mut g = &pred - &target;
    g.mapv_inplace(|v| v * scale);
    Ok(g)
}

/// Mean squared error of the z coordinate over frames and joints.
pub fn depth_mse<S: Scalar>(pred: ArrayView3<'_, S>, gt: ArrayView3<'_, S>) -> Result<S> {
    same_shape("depth_mse", &pred.raw_dim(), &gt.raw_dim())?;
    let (t, j, _) = pred.dim();
    let mut sum = S::zero();
    for f in 0..t {
        for jj in 0..j {
            let d = pred[[f, jj, 2]] - gt[[f, jj, 2]];
            sum += d * d;
        }
    }
    Ok(sum / S::from_usize_lossy((t * j).max(1)))
}

pub fn depth_mse_grad<S: Scalar>(pred: ArrayView3<'_, S>, gt: ArrayView3<'_, S>) -> Result<Array3<S>> {
    same_shape("depth_mse", &pred.raw_dim(), &gt.raw_dim())?;
    let (t, j, _) = pred.dim();
    let scale = S::lit(2.0) / S::from_usize_lossy((t * j).max(1));
    let mut g = Array3::zeros(pred.raw_dim());
    for f in 0..t {
        for jj in 0..j {
            g[[f, jj, 2]] = scale * (pred[[f, jj, 2]] - gt[[f, jj, 2]]);
        }
    }
    Ok(g)
}

/// Sum of per-joint 3D distances (in cells) and the joint count.
pub fn position_error_sum<S: Scalar>(pred: ArrayView3<'_, S>, gt: ArrayView3<'_, S>) -> Result<(f64, usize)> {
    same_shape("mpjpe", &pred.raw_dim(), &gt.raw_dim())?;
    let (t, j, _) = pred.dim();
    let mut sum = 0.0;
    for f in 0..t {
        for jj in 0..j {
            let mut sq = 0.0;
            for c in 0..3 {
                let d = pred[[f, jj, c]].as_f64() - gt[[f, jj, c]].as_f64();
                sq += d * d;
            }
            sum += sq.sqrt();
        }
    }
    Ok((sum, t * j))
}

/// Mean per-joint 3D position error in centimetres.
pub fn mpjpe<S: Scalar>(pred: ArrayView3<'_, S>, gt: ArrayView3<'_, S>, cell_pitch_cm: f64) -> Result<f64> {
    let (sum, n) = position_error_sum(pred, gt)?;
    if n == 0 {
        return Err(Error::Shape("mpjpe over zero joints".into()));
    }
    Ok(sum / n as f64 * cell_pitch_cm)
}

/// Number of joints whose 2D error is within `alpha` × the frame's
/// ground-truth 2D head limb length, and the total joint count.
pub fn pckh_counts<S: Scalar>(
    pred: ArrayView3<'_, S>,
    gt: ArrayView3<'_, S>,
    skel: &SkeletonSpec,
    alpha: f64,
) -> Result<(usize, usize)> {
    same_shape("pckh", &pred.raw_dim(), &gt.raw_dim())?;
    check_pose(&gt, skel)?;
    let (a, b) = skel.head_limb();
    let (t, j, _) = pred.dim();
    let mut correct = 0;
    for f in 0..t {
        let hx = gt[[f, a, 0]].as_f64() - gt[[f, b, 0]].as_f64();
        let hy = gt[[f, a, 1]].as_f64() - gt[[f, b, 1]].as_f64();
        let head = hx.hypot(hy);
        if head <= 0.0 {
            return Err(Error::ZeroHeadLimb { frame: f });
        }
        let threshold = alpha * head;
        for jj in 0..j {
            let dx = pred[[f, jj, 0]].as_f64() - gt[[f, jj, 0]].as_f64();
            let dy = pred[[f, jj, 1]].as_f64() - gt[[f, jj, 1]].as_f64();
            if dx.hypot(dy) <= threshold {
                correct += 1;
            }
        }
    }
    Ok((correct, t * j))
}

/// PCKh@alpha as a percentage.
pub fn pckh<S: Scalar>(
    pred: ArrayView3<'_, S>,
    gt: ArrayView3<'_, S>,
    skel: &SkeletonSpec,
    alpha: f64,
) -> Result<f64> {
    let (correct, total) = pckh_counts(pred, gt, skel, alpha)?;
    if total == 0 {
        return Err(Error::Shape("pckh over zero joints".into()));
    }
    Ok(100.0 * correct as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub limb: f64,
    pub depth: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            limb: 0.1,
            depth: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub heatmap_mse: f64,
    pub limb_loss: f64,
    pub depth_loss: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn add_scaled(&mut self, other: &LossBreakdown, scale: f64) {
        self.heatmap_mse += scale * other.heatmap_mse;
        self.limb_loss += scale * other.limb_loss;
        self.depth_loss += scale * other.depth_loss;
        self.total += scale * other.total;
    }
}

/// Gradients of the total loss with respect to the predicted heatmaps
/// (direct MSE term only) and the decoded keypoints.
#[derive(Debug, Clone)]
pub struct LossGrads<S> {
    pub heatmaps: Array4<S>,
    pub keypoints: Array3<S>,
}

/// Inputs that the supervised objective compares.
pub struct LossInputs<'a, S> {
    pub pred_heatmaps: ArrayView4<'a, S>,
    pub target_heatmaps: ArrayView4<'a, S>,
    pub keypoints: ArrayView3<'a, S>,
    pub gt: ArrayView3<'a, S>,
}

/// heatmap_mse + limb·limb_length_loss + depth·depth_mse, with the exact
/// value in `S` so callers can take finite differences.
pub fn total_loss_value<S: Scalar>(
    inputs: &LossInputs<'_, S>,
    stats: &LimbStats,
    skel: &SkeletonSpec,
    weights: LossWeights,
) -> Result<(S, LossBreakdown)> {
    let hm = heatmap_mse(inputs.pred_heatmaps, inputs.target_heatmaps)?;
    let limb = limb_length_loss(inputs.keypoints, stats, skel)?;
    let depth = depth_mse(inputs.keypoints, inputs.gt)?;
    let total = hm + S::lit(weights.limb) * limb + S::lit(weights.depth) * depth;
    Ok((
        total,
        LossBreakdown {
            heatmap_mse: hm.as_f64(),
            limb_loss: limb.as_f64(),
            depth_loss: depth.as_f64(),
            total: total.as_f64(),
        },
    ))
}

pub fn total_loss<S: Scalar>(
    inputs: &LossInputs<'_, S>,
    stats: &LimbStats,
    skel: &SkeletonSpec,
    weights: LossWeights,
) -> Result<(LossBreakdown, LossGrads<S>)> {
    let (_, breakdown) = total_loss_value(inputs, stats, skel, weights)?;
    let heatmaps = heatmap_mse_grad(inputs.pred_heatmaps, inputs.target_heatmaps)?;
    let mut keypoints = limb_length_loss_grad(inputs.keypoints, stats, skel)?;
    keypoints.mapv_inplace(|v| v * S::lit(weights.limb));
    let dz = depth_mse_grad(inputs.keypoints, inputs.gt)?;
    keypoints.scaled_add(S::lit(weights.depth), &dz);
    Ok((breakdown, LossGrads { heatmaps, keypoints }))
}

/// One line of `report.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub run_id: String,
    pub stage: String,
    pub epoch: usize,
    pub split: String,
    pub mpjpe_cm: Option<f64>,
    pub pckh: Option<f64>,
    pub loss_total: Option<f64>,
    pub heatmap_mse: Option<f64>,
    pub limb_loss: Option<f64>,
    pub depth_loss: Option<f64>,
    pub recon_loss: Option<f64>,
}

impl MetricRow {
    pub fn new(run_id: &str, stage: &str, epoch: usize, split: &str) -> Self {
        MetricRow {
            run_id: run_id.to_string(),
            stage: stage.to_string(),
            epoch,
            split: split.to_string(),
            mpjpe_cm: None,
            pckh: None,
            loss_total: None,
            heatmap_mse: None,
            limb_loss: None,
            depth_loss: None,
            recon_loss: None,
        }
    }

    pub fn with_losses(mut self, l: &LossBreakdown) -> Self {
        self.loss_total = Some(l.total);
        self.heatmap_mse = Some(l.heatmap_mse);
        self.limb_loss = Some(l.limb_loss);
        self.depth_loss = Some(l.depth_loss);
        self
    }
}

pub fn write_rows(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row).map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<MetricRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?);
    }
    Ok(rows)
}
