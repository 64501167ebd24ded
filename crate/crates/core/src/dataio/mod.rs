//! Sequence files, dataset manifests, limb statistics and the synthetic
//! pressure/pose generator.

pub mod format;
pub mod limbs;
pub mod manifest;
pub mod synth;

use ndarray::{Array3, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use format::{read_sequence, read_sequence_checked, write_sequence, SequenceHeader};
pub use limbs::{compute_limb_stats, nearest_rank, LimbStats};
pub use manifest::{DatasetManifest, ManifestEntry, Split};
pub use synth::{generate_synthetic, synthesize, SynthSpec, SyntheticSequence};

/// T pressure frames, each `grid_h` rows × `grid_w` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureSequence<S> {
    pub frames: Array3<S>,
}

impl<S: Scalar> PressureSequence<S> {
    pub fn new(frames: Array3<S>) -> Result<Self> {
        let s = PressureSequence { frames };
        s.check()?;
        Ok(s)
    }

    pub fn num_frames(&self) -> usize {
        self.frames.dim().0
    }

    pub fn grid_h(&self) -> usize {
        self.frames.dim().1
    }

    pub fn grid_w(&self) -> usize {
        self.frames.dim().2
    }

    pub fn frame(&self, t: usize) -> ArrayView2<'_, S> {
        self.frames.index_axis(ndarray::Axis(0), t)
    }

    /// Every value finite and non-negative.
    pub fn check(&self) -> Result<()> {
        for (i, &v) in self.frames.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("pressure at flat index {i}")));
            }
            if v < S::zero() {
                return Err(Error::NonFinite(format!(
                    "negative pressure {v} at flat index {i}"
                )));
            }
        }
        Ok(())
    }

    /// Frames `[start, start + len)`.
    pub fn window(&self, start: usize, len: usize) -> Self {
        PressureSequence {
            frames: self
                .frames
                .slice(ndarray::s![start..start + len, .., ..])
                .to_owned(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> PressureSequence<U> {
        PressureSequence {
            frames: self.frames.mapv(|v| U::from(v).expect("scalar cast")),
        }
    }
}

/// T × J × (x, y, z) joint positions in sensor cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence<S> {
    pub joints: Array3<S>,
}

impl<S: Scalar> PoseSequence<S> {
    pub fn new(joints: Array3<S>) -> Result<Self> {
        if joints.dim().2 != 3 {
            return Err(Error::Shape(format!(
                "pose last axis must be 3, got {}",
                joints.dim().2
            )));
        }
        if let Some(i) = joints.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("pose at flat index {i}")));
        }
        Ok(PoseSequence { joints })
    }

    pub fn num_frames(&self) -> usize {
        self.joints.dim().0
    }

    pub fn num_joints(&self) -> usize {
        self.joints.dim().1
    }

    pub fn window(&self, start: usize, len: usize) -> Self {
        PoseSequence {
            joints: self
                .joints
                .slice(ndarray::s![start..start + len, .., ..])
                .to_owned(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> PoseSequence<U> {
        PoseSequence {
            joints: self.joints.mapv(|v| U::from(v).expect("scalar cast")),
        }
    }

    /// Whether every (x, y) lies in `[0, w) × [0, h)`.
    pub fn within_grid(&self, w: usize, h: usize) -> bool {
        let (w, h) = (S::from_usize_lossy(w), S::from_usize_lossy(h));
        self.joints.outer_iter().all(|frame| {
            frame
                .outer_iter()
                .all(|p| p[0] >= S::zero() && p[0] < w && p[1] >= S::zero() && p[1] < h)
        })
    }
}
