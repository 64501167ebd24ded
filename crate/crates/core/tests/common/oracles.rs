//! Brute-force reference implementations written directly from the metric
//! definitions with plain index loops.

use ndarray::{Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tpl_core::config::SkeletonSpec;
use tpl_core::dataio::LimbStats;

pub fn mpjpe(pred: &Array3<f64>, gt: &Array3<f64>, pitch: f64) -> f64 {
    let (t, j, _) = pred.dim();
    let mut total = 0.0;
    for f in 0..t {
        for k in 0..j {
            let mut sq = 0.0;
            for c in 0..3 {
                let d = pred[[f, k, c]] - gt[[f, k, c]];
                sq += d * d;
            }
            total += sq.sqrt();
        }
    }
    total / (t * j) as f64 * pitch
}

pub fn pckh(pred: &Array3<f64>, gt: &Array3<f64>, skel: &SkeletonSpec, alpha: f64) -> f64 {
    let (t, j, _) = pred.dim();
    let (a, b) = skel.limbs[skel.head_limb_index];
    let mut hits = 0usize;
    for f in 0..t {
        let head = ((gt[[f, a, 0]] - gt[[f, b, 0]]).powi(2) + (gt[[f, a, 1]] - gt[[f, b, 1]]).powi(2)).sqrt();
        for k in 0..j {
            let err = ((pred[[f, k, 0]] - gt[[f, k, 0]]).powi(2) + (pred[[f, k, 1]] - gt[[f, k, 1]]).powi(2)).sqrt();
            if err <= alpha * head {
                hits += 1;
            }
        }
    }
    100.0 * hits as f64 / (t * j) as f64
}

pub fn limb_loss(pred: &Array3<f64>, stats: &LimbStats, skel: &SkeletonSpec) -> f64 {
    let t = pred.dim().0;
    let mut total = 0.0;
    for f in 0..t {
        for (l, &(a, b)) in skel.limbs.iter().enumerate() {
            let mut sq = 0.0;
            for c in 0..3 {
                sq += (pred[[f, a, c]] - pred[[f, b, c]]).powi(2);
            }
            let len = sq.sqrt();
            if len > stats.upper[l] {
                total += len - stats.upper[l];
            } else if len < stats.lower[l] {
                total += stats.lower[l] - len;
            }
        }
    }
    total / (t * skel.limbs.len()) as f64
}

pub fn heatmap_mse(pred: &Array4<f64>, target: &Array4<f64>) -> f64 {
    let (t, j, h, w) = pred.dim();
    let mut total = 0.0;
    for a in 0..t {
        for b in 0..j {
            for r in 0..h {
                for c in 0..w {
                    total += (pred[[a, b, r, c]] - target[[a, b, r, c]]).powi(2);
                }
            }
        }
    }
    total / (t * j * h * w) as f64
}

/// Nearest rank: sort ascending and take element ceil(p·n/100), 1-indexed.
pub fn percentile(values: &[f64], pct: u32) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = (pct as f64 * v.len() as f64 / 100.0).ceil() as usize;
    v[k.max(1) - 1]
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Random skeleton over `j` joints: a chain with the head limb first.
pub fn chain_skeleton(j: usize) -> SkeletonSpec {
    SkeletonSpec {
        joint_names: (0..j).map(|i| format!("j{i}")).collect(),
        limbs: (1..j).map(|i| (i, i - 1)).collect(),
        head_limb_index: 0,
    }
}

/// A random metric instance: prediction, ground truth, limb band.
pub struct Instance {
    pub pred: Array3<f64>,
    pub gt: Array3<f64>,
    pub skel: SkeletonSpec,
    pub stats: LimbStats,
    pub pitch: f64,
}

pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = rng.random_range(1..6);
    let j = rng.random_range(2..8);
    let gt = Array3::from_shape_simple_fn((t, j, 3), || rng.random_range(0.0..30.0));
    let spread = rng.random_range(0.1..8.0);
    let pred = &gt + &Array3::from_shape_simple_fn((t, j, 3), || rng.random_range(-spread..spread));
    let skel = chain_skeleton(j);
    let lower: Vec<f64> = (1..j).map(|_| rng.random_range(1.0..10.0)).collect();
    let upper = lower.iter().map(|l| l + rng.random_range(0.0..10.0)).collect();
    Instance {
        pred,
        gt,
        skel,
        stats: LimbStats { lower, upper },
        pitch: rng.random_range(0.5..3.0),
    }
}

pub fn random_maps(seed: u64) -> (Array4<f64>, Array4<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = (
        rng.random_range(1..4),
        rng.random_range(1..5),
        rng.random_range(1..9),
        rng.random_range(1..9),
    );
    let a = Array4::from_shape_simple_fn(dims, || rng.random_range(-1.0..1.0));
    let b = Array4::from_shape_simple_fn(dims, || rng.random_range(-1.0..1.0));
    (a, b)
}
