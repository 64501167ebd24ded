use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use super::params::{Grads, Init, ParamId, ParamStore};
use crate::scalar::Scalar;

pub const LN_EPS: f64 = 1e-6;

/// Normalizes each row over its feature axis.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache<S> {
    xhat: Array2<S>,
    inv_std: Array1<S>,
}

impl LayerNorm {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, dim: usize) -> Self {
        let gamma = store.register(format!("{name}.gamma"), Init::ones(&[dim]));
        let beta = store.register(format!("{name}.beta"), Init::zeros(&[dim]));
        LayerNorm { gamma, beta, dim }
    }

    pub fn forward<S: Scalar>(
        &self,
        p: &ParamStore<S>,
        x: ArrayView2<'_, S>,
    ) -> (Array2<S>, LayerNormCache<S>) {
        let n = S::from_usize_lossy(self.dim);
        let eps = S::lit(LN_EPS);
        let mut xhat = x.to_owned();
        let mut inv_std = Array1::zeros(x.nrows());
        for (mut row, inv) in xhat.axis_iter_mut(Axis(0)).zip(inv_std.iter_mut()) {
            let mean = row.sum() / n;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|&v| v * v).sum::<S>() / n;
            *inv = S::one() / (var + eps).sqrt();
            let s = *inv;
            row.mapv_inplace(|v| v * s);
        }
        let mut y = &xhat * &p.get1(self.gamma);
        y += &p.get1(self.beta);
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward<S: Scalar>(
        &self,
        p: &ParamStore<S>,
        cache: &LayerNormCache<S>,
        dy: ArrayView2<'_, S>,
        g: &mut Grads<S>,
    ) -> Array2<S> {
        {
            let mut gg = g.mut1(self.gamma);
            gg += &(&dy * &cache.xhat).sum_axis(Axis(0));
        }
        {
            let mut gb = g.mut1(self.beta);
            gb += &dy.sum_axis(Axis(0));
        }
        let gamma = p.get1(self.gamma);
        let n = S::from_usize_lossy(self.dim);
        let dxhat = &dy * &gamma;
        let mut dx = Array2::zeros(dy.raw_dim());
        Zip::from(dx.rows_mut())
            .and(dxhat.rows())
            .and(cache.xhat.rows())
            .and(&cache.inv_std)
            .for_each(|mut dxr, dh, xh, &inv| {
                let mean_dh = dh.sum() / n;
                let mean_dh_xh = dh.iter().zip(xh.iter()).map(|(&a, &b)| a * b).sum::<S>() / n;
                for ((o, &a), &b) in dxr.iter_mut().zip(dh.iter()).zip(xh.iter()) {
                    *o = inv * (a - mean_dh - b * mean_dh_xh);
                }
            });
        dx
    }
}
