use serde::{Deserialize, Serialize};

use super::PoseSequence;
use crate::config::SkeletonSpec;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-limb 5th and 95th percentile lengths, in cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimbStats {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LimbStats {
    pub fn num_limbs(&self) -> usize {
        self.lower.len()
    }
}

/// Nearest-rank percentile of an ascending slice: the k-th smallest value
/// with k = ceil(pct · n / 100), 1-indexed.
pub fn nearest_rank(sorted: &[f64], pct: u32) -> f64 {
    assert!(!sorted.is_empty() && pct <= 100);
    let n = sorted.len();
    let k = (pct as usize * n).div_ceil(100).max(1);
    sorted[k - 1]
}

pub fn limb_length<S: Scalar>(frame: ndarray::ArrayView2<'_, S>, a: usize, b: usize) -> S {
    let dx = frame[[a, 0]] - frame[[b, 0]];
    let dy = frame[[a, 1]] - frame[[b, 1]];
    let dz = frame[[a, 2]] - frame[[b, 2]];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Pools 3D limb lengths over every frame of every sequence and takes the
/// nearest-rank 5th/95th percentiles per limb.
pub fn compute_limb_stats<'a, S, I>(train_split: I, skel: &SkeletonSpec) -> Result<LimbStats>
where
    S: Scalar,
    I: IntoIterator<Item = &'a PoseSequence<S>>,
{
    let mut pooled: Vec<Vec<f64>> = vec![Vec::new(); skel.num_limbs()];
    for seq in train_split {
        if seq.num_joints() != skel.num_joints() {
            return Err(Error::Shape(format!(
                "pose has {} joints, skeleton defines {}",
                seq.num_joints(),
                skel.num_joints()
            )));
        }
        for frame in seq.joints.outer_iter() {
            for (l, &(a, b)) in skel.limbs.iter().enumerate() {
                pooled[l].push(limb_length(frame, a, b).as_f64());
            }
        }
    }
    if pooled.first().is_none_or(|v| v.is_empty()) {
        return Err(Error::EmptySplit("no frames to compute limb statistics".into()));
    }
    let mut lower = Vec::with_capacity(pooled.len());
    let mut upper = Vec::with_capacity(pooled.len());
    for mut lengths in pooled {
        lengths.sort_by(f64::total_cmp);
        lower.push(nearest_rank(&lengths, 5));
        upper.push(nearest_rank(&lengths, 95));
    }
    Ok(LimbStats { lower, upper })
}
