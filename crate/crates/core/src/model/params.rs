use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::{ChannelStats, Rng, Scalar, Tape, Tensor, Var};

/// Learnable tensors by name, plus non-learnable buffers (batch-norm running
/// statistics).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    params: BTreeMap<String, Tensor<T>>,
    buffers: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> Default for ModelParams<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ModelParams<T> {
    pub fn new() -> Self {
        ModelParams {
            params: BTreeMap::new(),
            buffers: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        self.params.insert(name.into(), tensor.with_grad());
    }

    pub fn insert_buffer(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        let mut t = tensor;
        t.set_requires_grad(false);
        self.buffers.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Contract(format!("no parameter named `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("no parameter named `{name}`")))
    }

    pub fn buffer(&self, name: &str) -> Result<&Tensor<T>> {
        self.buffers
            .get(name)
            .ok_or_else(|| Error::Contract(format!("no buffer named `{name}`")))
    }

    pub fn buffer_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.buffers
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("no buffer named `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.params.iter_mut()
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.buffers.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of learnable scalars.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn zero_grads(&mut self) {
        self.params.values_mut().for_each(Tensor::zero_grad);
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            params: self.params.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
            buffers: self.buffers.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    /// Places every parameter on `tape` as a gradient-tracking leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> Bound {
        Bound {
            vars: self
                .params
                .iter()
                .map(|(k, v)| (k.clone(), tape.leaf(v.clone())))
                .collect(),
        }
    }

    /// Adds the tape's leaf gradients into each parameter's gradient buffer.
    pub fn accumulate_grads(&mut self, tape: &Tape<T>, bound: &Bound) -> Result<()> {
        for (name, t) in &mut self.params {
            let var = bound.get(name)?;
            match tape.grad(var) {
                Some(g) => t.accumulate_grad(g)?,
                None => t.accumulate_grad(&vec![T::zero(); t.len()])?,
            }
        }
        Ok(())
    }

    /// Exponential moving update of batch-norm running statistics:
    /// `running = momentum · running + (1 - momentum) · batch`.
    pub fn update_running_stats(&mut self, updates: &[(String, ChannelStats<T>)], momentum: f64) -> Result<()> {
        let m = T::from_f64_lossy(momentum);
        let one_m = T::one() - m;
        for (prefix, stats) in updates {
            for (suffix, values) in [("running_mean", &stats.mean), ("running_var", &stats.var)] {
                let buf = self.buffer_mut(&format!("{prefix}.{suffix}"))?;
                for (r, &b) in buf.data_mut().iter_mut().zip(values) {
                    *r = m * *r + one_m * b;
                }
            }
        }
        Ok(())
    }
}

/// Tape handles for a bound [`ModelParams`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub(crate) fn from_vars(vars: impl IntoIterator<Item = (String, Var)>) -> Self {
        Bound {
            vars: vars.into_iter().collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("parameter `{name}` is not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}

/// Builds parameters in a fixed order so that a seed fully determines them.
pub(crate) struct Init<'a, T> {
    pub params: ModelParams<T>,
    rng: &'a mut Rng,
}

impl<'a, T: Scalar> Init<'a, T> {
    pub fn new(rng: &'a mut Rng) -> Self {
        Init {
            params: ModelParams::new(),
            rng,
        }
    }

    /// Weight drawn from `U(-1/√fan_in, 1/√fan_in)`.
    pub fn uniform(&mut self, name: String, shape: &[usize], fan_in: usize) {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data: Vec<T> = (0..n)
            .map(|_| T::from_f64_lossy(self.rng.uniform_range(-bound, bound)))
            .collect();
        self.params
            .insert(name, Tensor::new(shape.to_vec(), data).expect("finite init"));
    }

    pub fn constant(&mut self, name: String, shape: &[usize], value: f64) {
        self.params
            .insert(name, Tensor::full(shape, T::from_f64_lossy(value)));
    }

    /// Affine layer `[fan_in → fan_out]`: weight `{prefix}.w`, zero bias `{prefix}.b`.
    pub fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) {
        self.uniform(format!("{prefix}.w"), &[fan_in, fan_out], fan_in);
        self.constant(format!("{prefix}.b"), &[fan_out], 0.0);
    }

    pub fn batch_norm(&mut self, prefix: &str, channels: usize) {
        self.constant(format!("{prefix}.gamma"), &[channels], 1.0);
        self.constant(format!("{prefix}.beta"), &[channels], 0.0);
        self.params
            .insert_buffer(format!("{prefix}.running_mean"), Tensor::zeros(&[channels]));
        self.params
            .insert_buffer(format!("{prefix}.running_var"), Tensor::full(&[channels], T::one()));
    }

    pub fn conv(&mut self, prefix: &str, c_in: usize, c_out: usize, kernel: usize) {
        self.uniform(format!("{prefix}.w"), &[c_out, c_in, kernel], c_in * kernel);
        self.constant(format!("{prefix}.b"), &[c_out], 0.0);
    }
}
