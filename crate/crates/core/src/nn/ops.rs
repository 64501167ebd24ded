use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, Axis};

use crate::scalar::Scalar;

const GELU_C: f64 = 0.044_715;

/// Tanh-approximated GELU.
pub fn gelu<S: Scalar>(x: S) -> S {
    let k = S::lit((2.0 / std::f64::consts::PI).sqrt());
    let half = S::lit(0.5);
    half * x * (S::one() + (k * (x + S::lit(GELU_C) * x * x * x)).tanh())
}

pub fn gelu_grad<S: Scalar>(x: S) -> S {
    let k = S::lit((2.0 / std::f64::consts::PI).sqrt());
    let half = S::lit(0.5);
    let t = (k * (x + S::lit(GELU_C) * x * x * x)).tanh();
    half * (S::one() + t) + half * x * (S::one() - t * t) * k * (S::one() + S::lit(3.0 * GELU_C) * x * x)
}

/// Softmax of one slice, in place, max-shifted.
pub fn softmax_inplace<S: Scalar>(mut row: ArrayViewMut1<'_, S>) {
    match row.as_slice_mut() {
        Some(v) => softmax_slice(v),
        None => {
            let mut v = row.to_vec();
            softmax_slice(&mut v);
            row.assign(&ArrayView1::from(&v[..]));
        }
    }
}

fn softmax_slice<S: Scalar>(v: &mut [S]) {
    let max = v.iter().copied().fold(S::neg_infinity(), S::max);
    let mut sum = S::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

pub fn softmax<S: Scalar>(logits: ArrayView1<'_, S>) -> ndarray::Array1<S> {
    let mut out = logits.to_owned();
    softmax_inplace(out.view_mut());
    out
}

pub fn softmax_rows<S: Scalar>(mut m: Array2<S>) -> Array2<S> {
    for row in m.axis_iter_mut(Axis(0)) {
        softmax_inplace(row);
    }
    m
}

/// Backward of a row-wise softmax: dS = P ⊙ (dP − rowsum(dP ⊙ P)),
/// written over `dp`.
pub fn softmax_rows_backward<S: Scalar>(p: ArrayView2<'_, S>, mut dp: Array2<S>) -> Array2<S> {
    for (pr, mut dr) in p.rows().into_iter().zip(dp.rows_mut()) {
        match (pr.as_slice(), dr.as_slice_mut()) {
            (Some(pr), Some(dr)) => {
                let dot: S = pr.iter().zip(dr.iter()).map(|(&a, &b)| a * b).sum();
                for (o, &a) in dr.iter_mut().zip(pr) {
                    *o = a * (*o - dot);
                }
            }
            _ => {
                let dot: S = pr.iter().zip(dr.iter()).map(|(&a, &b)| a * b).sum();
                for (o, &a) in dr.iter_mut().zip(pr.iter()) {
                    *o = a * (*o - dot);
                }
            }
        }
    }
    dp
}

pub fn all_finite<'a, S: Scalar + 'a>(values: impl IntoIterator<Item = &'a S>) -> bool {
    values.into_iter().all(|v| v.is_finite())
}
