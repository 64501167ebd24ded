use ndarray::{Array2, ArrayView2, Axis};

use super::params::{Grads, Init, ParamId, ParamStore};
use crate::scalar::Scalar;

/// `y = x · W + b` with `W` stored as `in × out`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        init: &mut Init,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let weight = init.trunc_normal(&[in_dim, out_dim]);
        Self::with_weight(store, name, weight)
    }

    /// Same layer with a Glorot-uniform weight.
    pub fn new_xavier<S: Scalar>(
        store: &mut ParamStore<S>,
        init: &mut Init,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let weight = init.xavier_uniform(in_dim, out_dim);
        Self::with_weight(store, name, weight)
    }

    fn with_weight<S: Scalar>(store: &mut ParamStore<S>, name: &str, weight: ndarray::ArrayD<S>) -> Self {
        let (in_dim, out_dim) = (weight.shape()[0], weight.shape()[1]);
        let weight = store.register(format!("{name}.weight"), weight);
        let bias = store.register(format!("{name}.bias"), Init::zeros(&[out_dim]));
        Linear {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward<S: Scalar>(&self, p: &ParamStore<S>, x: ArrayView2<'_, S>) -> Array2<S> {
        let mut y = x.dot(&p.get2(self.weight));
        y += &p.get1(self.bias);
        y
    }

    /// Accumulates weight/bias gradients and returns dL/dx.
    pub fn backward<S: Scalar>(
        &self,
        p: &ParamStore<S>,
        x: ArrayView2<'_, S>,
        dy: ArrayView2<'_, S>,
        g: &mut Grads<S>,
    ) -> Array2<S> {
        self.accumulate(x, dy, g);
        dy.dot(&p.get2(self.weight).t())
    }

    /// Parameter gradients only, for layers whose input needs no gradient.
    pub fn accumulate<S: Scalar>(&self, x: ArrayView2<'_, S>, dy: ArrayView2<'_, S>, g: &mut Grads<S>) {
        let mut gw = g.mut2(self.weight);
        ndarray::linalg::general_mat_mul(S::one(), &x.t(), &dy, S::one(), &mut gw);
        let mut gb = g.mut1(self.bias);
        gb += &dy.sum_axis(Axis(0));
    }
}
