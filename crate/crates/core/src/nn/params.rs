use std::collections::HashMap;

use ndarray::{ArrayD, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Ix1, Ix2, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter tensors in registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<S> {
    names: Vec<String>,
    values: Vec<ArrayD<S>>,
    by_name: HashMap<String, ParamId>,
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn register(&mut self, name: impl Into<String>, value: ArrayD<S>) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "parameter {name} registered twice"
        );
        let id = ParamId(self.values.len());
        self.by_name.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn value(&self, id: ParamId) -> &ArrayD<S> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut ArrayD<S> {
        &mut self.values[id.0]
    }

    pub fn get1(&self, id: ParamId) -> ArrayView1<'_, S> {
        self.values[id.0].view().into_dimensionality::<Ix1>().unwrap()
    }

    pub fn get2(&self, id: ParamId) -> ArrayView2<'_, S> {
        self.values[id.0].view().into_dimensionality::<Ix2>().unwrap()
    }

    /// Total number of scalars.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Scalars in parameters whose name starts with `prefix`.
    pub fn num_scalars_with_prefix(&self, prefix: &str) -> usize {
        self.ids()
            .filter(|&id| self.name(id).starts_with(prefix))
            .map(|id| self.value(id).len())
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &ArrayD<S>)> {
        self.ids().map(move |id| (id, self.name(id), self.value(id)))
    }

    /// Replaces values by name; every stored parameter must be present with
    /// an identical shape.
    pub fn load_named(&mut self, named: &[(String, ArrayD<S>)]) -> Result<()> {
        let mut seen = vec![false; self.len()];
        for (name, value) in named {
            let id = self
                .id(name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected parameter {name}")))?;
            if self.values[id.0].shape() != value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name}: shape {:?} in checkpoint, {:?} in model",
                    value.shape(),
                    self.values[id.0].shape()
                )));
            }
            self.values[id.0] = value.clone();
            seen[id.0] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Checkpoint(format!(
                "checkpoint lacks parameter {}",
                self.names[missing]
            )));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self
                .values
                .iter()
                .map(|v| v.mapv(|x| U::from(x).expect("scalar cast")))
                .collect(),
            by_name: self.by_name.clone(),
        }
    }
}

/// Gradient accumulators shaped like a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<S> {
    values: Vec<ArrayD<S>>,
}

impl<S: Scalar> Grads<S> {
    pub fn zeros_like(store: &ParamStore<S>) -> Self {
        Grads {
            values: store
                .values
                .iter()
                .map(|v| ArrayD::zeros(v.raw_dim()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &ArrayD<S> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ArrayD<S> {
        &mut self.values[id.0]
    }

    pub fn mut1(&mut self, id: ParamId) -> ArrayViewMut1<'_, S> {
        self.values[id.0]
            .view_mut()
            .into_dimensionality::<Ix1>()
            .unwrap()
    }

    pub fn mut2(&mut self, id: ParamId) -> ArrayViewMut2<'_, S> {
        self.values[id.0]
            .view_mut()
            .into_dimensionality::<Ix2>()
            .unwrap()
    }

    pub fn zero(&mut self) {
        for v in &mut self.values {
            v.fill(S::zero());
        }
    }

    /// `self += other`, parameter by parameter in registration order.
    pub fn accumulate(&mut self, other: &Grads<S>) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: S) {
        for v in &mut self.values {
            v.mapv_inplace(|x| x * factor);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ArrayD<S>)> {
        self.values.iter().enumerate().map(|(i, v)| (ParamId(i), v))
    }
}

/// Seeded initializer: truncated normal (±2σ) weights.
pub struct Init {
    rng: ChaCha8Rng,
    pub std: f64,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
            std: 0.02,
        }
    }

    pub fn trunc_normal<S: Scalar>(&mut self, shape: &[usize]) -> ArrayD<S> {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let std = self.std;
        let rng = &mut self.rng;
        ArrayD::from_shape_simple_fn(IxDyn(shape), || loop {
            let z: f64 = normal.sample(rng);
            if z.abs() <= 2.0 {
                return S::lit(z * std);
            }
        })
    }

    /// Glorot uniform on `±sqrt(6 / (rows + cols))` for a 2-D weight.
    pub fn xavier_uniform<S: Scalar>(&mut self, rows: usize, cols: usize) -> ArrayD<S> {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let rng = &mut self.rng;
        ArrayD::from_shape_simple_fn(IxDyn(&[rows, cols]), || S::lit(rng.random_range(-bound..bound)))
    }

    pub fn zeros<S: Scalar>(shape: &[usize]) -> ArrayD<S> {
        ArrayD::zeros(IxDyn(shape))
    }

    pub fn ones<S: Scalar>(shape: &[usize]) -> ArrayD<S> {
        ArrayD::ones(IxDyn(shape))
    }
}
