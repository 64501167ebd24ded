//! AdamW with decoupled weight decay.

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Grads, ParamStore};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments for every parameter of a store.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<S> {
    pub m: Vec<ArrayD<S>>,
    pub v: Vec<ArrayD<S>>,
    pub step: u64,
    pub cfg: AdamWConfig,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(store: &ParamStore<S>, cfg: AdamWConfig) -> Self {
        let zeros: Vec<ArrayD<S>> = store
            .iter()
            .map(|(_, _, v)| ArrayD::zeros(v.raw_dim()))
            .collect();
        OptimizerState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            cfg,
        }
    }

    /// One AdamW update applied to the parameters whose name satisfies
    /// `trainable`. Other parameters and their moments are left untouched.
    pub fn step(
        &mut self,
        store: &mut ParamStore<S>,
        grads: &Grads<S>,
        trainable: impl Fn(&str) -> bool,
    ) -> Result<()> {
        if self.cfg.lr <= 0.0 {
            return Err(Error::Config(format!("learning rate {} must be > 0", self.cfg.lr)));
        }
        let ids: Vec<_> = store.ids().filter(|&id| trainable(store.name(id))).collect();
        for &id in &ids {
            let g = grads.get(id);
            if g.shape() != store.value(id).shape() {
                return Err(Error::Shape(format!(
                    "gradient for {} is {:?}, parameter is {:?}",
                    store.name(id),
                    g.shape(),
                    store.value(id).shape()
                )));
            }
            if g.iter().any(|v| v.is_nan()) {
                return Err(Error::NanGradient(store.name(id).to_string()));
            }
        }
        self.step += 1;
        let c = self.cfg;
        let (b1, b2) = (S::lit(c.beta1), S::lit(c.beta2));
        let bc1 = S::one() - S::lit(c.beta1.powi(self.step as i32));
        let bc2 = S::one() - S::lit(c.beta2.powi(self.step as i32));
        let (lr, wd, eps) = (S::lit(c.lr), S::lit(c.weight_decay), S::lit(c.eps));
        for id in ids {
            let g = grads.get(id);
            let m = &mut self.m[id.index()];
            let v = &mut self.v[id.index()];
            let p = store.value_mut(id);
            ndarray::Zip::from(p)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (S::one() - b1) * g;
                    *v = b2 * *v + (S::one() - b2) * g * g;
                    let mh = *m / bc1;
                    let vh = *v / bc2;
                    *p = *p - lr * (mh / (vh.sqrt() + eps) + wd * *p);
                });
        }
        Ok(())
    }
}
