use ndarray::{s, Array2, ArrayView2, Axis};

use super::params::{Grads, Init, ParamId, ParamStore};
use crate::scalar::Scalar;

const K: usize = 4;

/// Transposed convolution, kernel 4, stride 2, padding 1: doubles both
/// spatial sides. Images are `(rows · cols) × channels` matrices with rows
/// flattened row-major.
#[derive(Debug, Clone)]
pub struct Deconv2d {
    /// `in × (4 · 4 · out)`, column `(ky · 4 + kx) · out + o`.
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
}

impl Deconv2d {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        init: &mut Init,
        name: &str,
        in_ch: usize,
        out_ch: usize,
    ) -> Self {
        let weight = store.register(format!("{name}.weight"), init.trunc_normal(&[in_ch, K * K * out_ch]));
        let bias = store.register(format!("{name}.bias"), Init::zeros(&[out_ch]));
        Deconv2d {
            weight,
            bias,
            in_ch,
            out_ch,
        }
    }

    /// Calls `f(input_pixel, tap, output_pixel)` for every in-bounds tap.
    fn for_each_tap(rows: usize, cols: usize, mut f: impl FnMut(usize, usize, usize)) {
        let (orows, ocols) = (2 * rows as isize, 2 * cols as isize);
        for iy in 0..rows {
            for ix in 0..cols {
                for ky in 0..K {
                    let oy = 2 * iy as isize - 1 + ky as isize;
                    if oy < 0 || oy >= orows {
                        continue;
                    }
                    for kx in 0..K {
                        let ox = 2 * ix as isize - 1 + kx as isize;
                        if ox < 0 || ox >= ocols {
                            continue;
                        }
                        f(iy * cols + ix, ky * K + kx, (oy * ocols + ox) as usize);
                    }
                }
            }
        }
    }

    pub fn forward<S: Scalar>(
        &self,
        p: &ParamStore<S>,
        x: ArrayView2<'_, S>,
        rows: usize,
        cols: usize,
    ) -> Array2<S> {
        debug_assert_eq!(x.nrows(), rows * cols);
        let oc = self.out_ch;
        let taps = x.dot(&p.get2(self.weight));
        let mut out = Array2::zeros((4 * rows * cols, oc));
        Self::for_each_tap(rows, cols, |i, k, o| {
            let src = taps.slice(s![i, k * oc..(k + 1) * oc]);
            let mut dst = out.row_mut(o);
            dst += &src;
        });
        out += &p.get1(self.bias);
        out
    }

    pub fn backward<S: Scalar>(
        &self,
        p: &ParamStore<S>,
        x: ArrayView2<'_, S>,
        rows: usize,
        cols: usize,
        dy: ArrayView2<'_, S>,
        g: &mut Grads<S>,
    ) -> Array2<S> {
        let oc = self.out_ch;
        let mut dtaps = Array2::zeros((rows * cols, K * K * oc));
        Self::for_each_tap(rows, cols, |i, k, o| {
            dtaps
                .slice_mut(s![i, k * oc..(k + 1) * oc])
                .assign(&dy.row(o));
        });
        {
            let mut gw = g.mut2(self.weight);
            ndarray::linalg::general_mat_mul(S::one(), &x.t(), &dtaps, S::one(), &mut gw);
        }
        {
            let mut gb = g.mut1(self.bias);
            gb += &dy.sum_axis(Axis(0));
        }
        dtaps.dot(&p.get2(self.weight).t())
    }
}
