//! Deterministic synthetic pressure/pose sequences.
//!
//! A figure walks along a slowly breathing circle on the sensor grid while
//! crouching and leaning forward by smoothly varying amounts. Only the
//! contact joints (feet and hips by default) press on the grid, with an
//! amplitude that decays with joint height, so upper-body joints and the
//! walking direction must be inferred from the foot pattern over time.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::format::write_sequence;
use super::manifest::{DatasetManifest, ManifestEntry, Split, FORMAT_VERSION, MANIFEST_NAME};
use super::{PoseSequence, PressureSequence};
use crate::config::{joints::*, SkeletonSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub num_sequences: usize,
    /// Frames per sequence.
    pub frames: usize,
    pub grid_w: usize,
    pub grid_h: usize,
    pub seed: u64,
    pub noise_std: f64,
    pub contact_joints: Vec<usize>,
    /// Body size unit in cells; `None` picks min(grid) / 40.
    pub body_scale: Option<f64>,
    /// Contact blob standard deviation in cells; `None` picks max(0.8, body_scale).
    pub blob_sigma: Option<f64>,
    /// Height at which contact amplitude falls by 1/e; `None` picks body_scale.
    pub height_scale: Option<f64>,
    pub test_fraction: f64,
}

impl SynthSpec {
    pub fn desk() -> Self {
        SynthSpec {
            num_sequences: 24,
            frames: 64,
            grid_w: 32,
            grid_h: 32,
            seed: 7,
            noise_std: 0.05,
            contact_joints: vec![R_ANKLE, L_ANKLE, R_HIP, L_HIP],
            body_scale: None,
            blob_sigma: None,
            height_scale: None,
            test_fraction: 0.2,
        }
    }

    pub fn full_grid() -> Self {
        SynthSpec {
            num_sequences: 50,
            frames: 128,
            grid_w: 96,
            grid_h: 96,
            ..Self::desk()
        }
    }

    pub fn body_unit(&self) -> f64 {
        self.body_scale
            .unwrap_or(self.grid_w.min(self.grid_h) as f64 / 40.0)
    }

    fn blob(&self) -> f64 {
        self.blob_sigma.unwrap_or(self.body_unit().max(0.8))
    }

    fn height(&self) -> f64 {
        self.height_scale.unwrap_or(self.body_unit())
    }
}

// Segment lengths in body units.
const TORSO: f64 = 4.5;
const HIP_HALF_WIDTH: f64 = 0.8;
const SHOULDER_HALF_WIDTH: f64 = 1.3;
const HEAD_LEN: f64 = 1.2;
const UPPER_ARM: f64 = 2.2;
const FOREARM: f64 = 2.0;
const LEG_SEGMENT: f64 = 3.5;
const ANKLE_HEIGHT: f64 = 0.3;
// Largest per-sequence size factor: scale jitter × segment jitter.
const MAX_SIZE_FACTOR: f64 = 1.1 * 1.05;

/// Largest horizontal distance of any joint from the pelvis, in body units.
fn max_extent() -> f64 {
    (TORSO + SHOULDER_HALF_WIDTH + UPPER_ARM + FOREARM + 0.2) * MAX_SIZE_FACTOR
}

type V3 = [f64; 3];

fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: V3) -> f64 {
    dot(a, a).sqrt()
}

const UP: V3 = [0.0, 0.0, 1.0];

/// Per-sequence body and motion parameters.
struct Actor {
    torso: f64,
    hip_w: f64,
    shoulder_w: f64,
    head: f64,
    upper_arm: f64,
    forearm: f64,
    leg: f64,
    unit: f64,
    center: [f64; 2],
    radius0: f64,
    radius1: f64,
    radius_freq: f64,
    radius_phase: f64,
    angle0: f64,
    angular_speed: f64,
    gait_freq: f64,
    gait_phase: f64,
    crouch0: f64,
    crouch1: f64,
    crouch_freq: f64,
    crouch_phase: f64,
    lean0: f64,
    lean1: f64,
    lean_freq: f64,
    lean_phase: f64,
    arm_swing: f64,
    elbow_bend: f64,
}

impl Actor {
    fn sample(rng: &mut ChaCha8Rng, spec: &SynthSpec, room: f64) -> Self {
        let b = spec.body_unit() * rng.random_range(0.9..1.1);
        let mut jitter = |len: f64| len * b * rng.random_range(0.95..1.05);
        let torso = jitter(TORSO);
        let hip_w = jitter(HIP_HALF_WIDTH);
        let shoulder_w = jitter(SHOULDER_HALF_WIDTH);
        let head = jitter(HEAD_LEN);
        let upper_arm = jitter(UPPER_ARM);
        let forearm = jitter(FOREARM);
        let leg = jitter(LEG_SEGMENT);

        let radius0 = room * rng.random_range(0.55..0.8);
        let radius1 = (room - radius0).min(radius0 - 0.5).max(0.0) * rng.random_range(0.0..1.0);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        Actor {
            torso,
            hip_w,
            shoulder_w,
            head,
            upper_arm,
            forearm,
            leg,
            unit: b,
            center: [spec.grid_w as f64 / 2.0 - 0.5, spec.grid_h as f64 / 2.0 - 0.5],
            radius0,
            radius1,
            radius_freq: rng.random_range(0.01..0.03),
            radius_phase: rng.random_range(0.0..2.0 * PI),
            angle0: rng.random_range(0.0..2.0 * PI),
            angular_speed: sign * rng.random_range(0.04..0.09),
            gait_freq: rng.random_range(0.25..0.45),
            gait_phase: rng.random_range(0.0..2.0 * PI),
            crouch0: rng.random_range(0.2..0.6),
            crouch1: rng.random_range(0.2..0.4),
            crouch_freq: rng.random_range(0.02..0.06),
            crouch_phase: rng.random_range(0.0..2.0 * PI),
            lean0: rng.random_range(30f64..45.0).to_radians(),
            lean1: rng.random_range(0f64..10.0).to_radians(),
            lean_freq: rng.random_range(0.03..0.08),
            lean_phase: rng.random_range(0.0..2.0 * PI),
            arm_swing: rng.random_range(15f64..35.0).to_radians(),
            elbow_bend: rng.random_range(20f64..50.0).to_radians(),
        }
    }

    /// Joint positions at frame `t`, indexed like [`SkeletonSpec::default_14`].
    fn pose(&self, t: f64) -> [V3; 14] {
        let angle = self.angle0 + self.angular_speed * t;
        let radius = self.radius0 + self.radius1 * (self.radius_freq * t + self.radius_phase).sin();
        let radius_rate =
            self.radius1 * self.radius_freq * (self.radius_freq * t + self.radius_phase).cos();
        let (sa, ca) = angle.sin_cos();
        let pelvis_xy = [self.center[0] + radius * ca, self.center[1] + radius * sa];
        let vel = [
            radius_rate * ca - radius * self.angular_speed * sa,
            radius_rate * sa + radius * self.angular_speed * ca,
        ];
        let speed = (vel[0] * vel[0] + vel[1] * vel[1]).sqrt().max(1e-9);
        let fwd: V3 = [vel[0] / speed, vel[1] / speed, 0.0];
        let left: V3 = [-fwd[1], fwd[0], 0.0];

        let crouch =
            (self.crouch0 + self.crouch1 * (self.crouch_freq * t + self.crouch_phase).sin()).clamp(0.0, 1.0);
        let lean = self.lean0 + self.lean1 * (self.lean_freq * t + self.lean_phase).sin();
        let gait = self.gait_phase + self.gait_freq * t;
        let b = self.unit;

        let knee_flex = crouch * 75f64.to_radians();
        let pelvis_h = ANKLE_HEIGHT * b + 2.0 * self.leg * knee_flex.cos() * 0.97;
        let pelvis: V3 = [pelvis_xy[0], pelvis_xy[1], pelvis_h];
        let half_stride = 0.8 * b * (1.0 - 0.5 * crouch);
        let lift = 0.8 * b;

        let mut j = [[0.0; 3]; 14];
        // side = +1 for left, -1 for right.
        let leg = |side: f64, swing: f64| -> (V3, V3, V3) {
            let hip = add(pelvis, scale(left, side * self.hip_w));
            let fore = half_stride * swing.sin();
            let up = ANKLE_HEIGHT * b + lift * swing.cos().max(0.0);
            let mut ankle = add(add(hip, scale(fwd, fore)), [0.0, 0.0, 0.0]);
            ankle[2] = up;
            let mut d = sub(hip, ankle);
            let reach = 2.0 * self.leg * 0.99;
            if norm(d) > reach {
                let u = scale(d, 1.0 / norm(d));
                ankle = sub(hip, scale(u, reach));
                d = sub(hip, ankle);
            }
            let dist = norm(d);
            let u = scale(d, 1.0 / dist);
            let mut k = sub(fwd, scale(u, dot(fwd, u)));
            if norm(k) < 1e-9 {
                k = UP;
            }
            let k = scale(k, 1.0 / norm(k));
            let bend = (self.leg * self.leg - dist * dist / 4.0).max(0.0).sqrt();
            let knee = add(scale(add(hip, ankle), 0.5), scale(k, bend));
            (hip, knee, ankle)
        };
        let (rh, rk, ra) = leg(-1.0, gait);
        let (lh, lk, la) = leg(1.0, gait + PI);
        j[R_HIP] = rh;
        j[R_KNEE] = rk;
        j[R_ANKLE] = ra;
        j[L_HIP] = lh;
        j[L_KNEE] = lk;
        j[L_ANKLE] = la;

        let neck = add(pelvis, add(scale(fwd, self.torso * lean.sin()), scale(UP, self.torso * lean.cos())));
        let head_tilt = lean + 10f64.to_radians();
        j[NECK] = neck;
        j[HEAD] = add(neck, add(scale(fwd, self.head * head_tilt.sin()), scale(UP, self.head * head_tilt.cos())));

        let floor = ANKLE_HEIGHT * b;
        let arm = |side: f64, swing: f64| -> (V3, V3, V3) {
            let shoulder = add(neck, scale(left, side * self.shoulder_w));
            let mut gamma = self.arm_swing * swing;
            loop {
                let u1 = sub(scale(fwd, gamma.sin()), scale(UP, gamma.cos()));
                let g2 = gamma + self.elbow_bend;
                let u2 = sub(scale(fwd, g2.sin()), scale(UP, g2.cos()));
                let elbow = add(shoulder, scale(u1, self.upper_arm));
                let wrist = add(elbow, scale(u2, self.forearm));
                if (elbow[2] >= floor && wrist[2] >= floor) || gamma >= PI / 2.0 {
                    return (shoulder, elbow, wrist);
                }
                gamma += 5f64.to_radians();
            }
        };
        // Arms swing against the same-side leg.
        let (rs, re, rw) = arm(-1.0, -gait.sin());
        let (ls, le, lw) = arm(1.0, gait.sin());
        j[R_SHOULDER] = rs;
        j[R_ELBOW] = re;
        j[R_WRIST] = rw;
        j[L_SHOULDER] = ls;
        j[L_ELBOW] = le;
        j[L_WRIST] = lw;
        j
    }
}

/// Sum of isotropic Gaussian blobs `(x, y, amplitude)` on a `grid_h × grid_w`
/// frame; cell (row, col) is centred at (x = col, y = row).
pub fn render_pressure_frame(
    contacts: &[(f64, f64, f64)],
    grid_w: usize,
    grid_h: usize,
    sigma: f64,
) -> Array2<f64> {
    let inv = 1.0 / (2.0 * sigma * sigma);
    Array2::from_shape_fn((grid_h, grid_w), |(row, col)| {
        contacts
            .iter()
            .map(|&(x, y, a)| {
                let dx = col as f64 - x;
                let dy = row as f64 - y;
                a * (-(dx * dx + dy * dy) * inv).exp()
            })
            .sum()
    })
}

#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub id: String,
    pub split: Split,
    pub pressure: PressureSequence<f32>,
    pub pose: PoseSequence<f32>,
}

/// Generates every sequence in memory.
pub fn synthesize(spec: &SynthSpec) -> Result<Vec<SyntheticSequence>> {
    if spec.num_sequences == 0 {
        return Err(Error::Synth("num_sequences must be positive".into()));
    }
    if spec.frames == 0 {
        return Err(Error::Synth("frames must be positive".into()));
    }
    if !(spec.noise_std >= 0.0 && spec.noise_std.is_finite()) {
        return Err(Error::Synth(format!("noise_std {} invalid", spec.noise_std)));
    }
    if !(0.0..1.0).contains(&spec.test_fraction) {
        return Err(Error::Synth(format!(
            "test_fraction {} outside [0, 1)",
            spec.test_fraction
        )));
    }
    if let Some(&j) = spec.contact_joints.iter().find(|&&j| j >= 14) {
        return Err(Error::Synth(format!("contact joint {j} outside the 14-joint skeleton")));
    }
    let b = spec.body_unit();
    let margin = 1.0;
    let room = spec.grid_w.min(spec.grid_h) as f64 / 2.0 - max_extent() * b - margin;
    if !(b > 0.0) || room < 1.0 {
        return Err(Error::Synth(format!(
            "grid {}x{} too small for a skeleton of extent {:.1} cells",
            spec.grid_w,
            spec.grid_h,
            max_extent() * b
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE)).unwrap();
    let n = spec.num_sequences;
    let n_test = if n >= 2 {
        ((spec.test_fraction * n as f64).round() as usize).clamp(usize::from(spec.test_fraction > 0.0), n - 1)
    } else {
        0
    };
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let k = rng.random_range(0..=i);
        order.swap(i, k);
    }
    let mut is_test = vec![false; n];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }

    let (blob, height) = (spec.blob(), spec.height());
    let mut out = Vec::with_capacity(n);
    for (s, &test) in is_test.iter().enumerate() {
        let actor = Actor::sample(&mut rng, spec, room);
        let mut joints = Array3::<f32>::zeros((spec.frames, 14, 3));
        let mut frames = Array3::<f32>::zeros((spec.frames, spec.grid_h, spec.grid_w));
        for t in 0..spec.frames {
            let pose = actor.pose(t as f64);
            for (k, p) in pose.iter().enumerate() {
                for c in 0..3 {
                    joints[[t, k, c]] = p[c] as f32;
                }
            }
            let contacts: Vec<(f64, f64, f64)> = spec
                .contact_joints
                .iter()
                .map(|&k| (pose[k][0], pose[k][1], (-pose[k][2].max(0.0) / height).exp()))
                .collect();
            let frame = render_pressure_frame(&contacts, spec.grid_w, spec.grid_h, blob);
            for ((row, col), &v) in frame.indexed_iter() {
                let eps = if spec.noise_std > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                frames[[t, row, col]] = (v + eps).max(0.0) as f32;
            }
        }
        let pose = PoseSequence { joints };
        debug_assert!(pose.within_grid(spec.grid_w, spec.grid_h));
        out.push(SyntheticSequence {
            id: format!("seq_{s:03}"),
            split: if test { Split::Test } else { Split::Train },
            pressure: PressureSequence { frames },
            pose,
        });
    }
    Ok(out)
}

/// Writes `seq_NNN.pmt` files and `manifest.json` into `out_dir`.
pub fn generate_synthetic(spec: &SynthSpec, out_dir: &Path) -> Result<DatasetManifest> {
    let sequences = synthesize(spec)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(sequences.len());
    for seq in &sequences {
        let file = format!("{}.pmt", seq.id);
        write_sequence(&out_dir.join(&file), &seq.pressure, &seq.pose)?;
        entries.push(ManifestEntry {
            sequence_id: seq.id.clone(),
            file: file.into(),
            num_frames: spec.frames,
            split: seq.split,
        });
    }
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        grid_w: spec.grid_w,
        grid_h: spec.grid_h,
        num_joints: 14,
        skeleton: SkeletonSpec::default_14(),
        sequences: entries,
        root: out_dir.to_path_buf(),
    };
    manifest.save(&out_dir.join(MANIFEST_NAME))?;
    Ok(manifest)
}
