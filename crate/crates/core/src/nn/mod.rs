//! Network building blocks: parameter storage, complex and real
//! convolution, complex and real batch normalization, leaky ReLU and the
//! separable `tanh` output layer.

mod conv;
mod norm;

use num_complex::Complex;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{AnyTensor, CTensor, Real, RTensor};

pub use conv::{complex_conv2d, conv2d, conv_output_size, ComplexConv2d, RealConv2d};
pub use norm::{complex_batch_norm, inv_sqrt_2x2, BatchNorm, ComplexBatchNorm};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Param<T: Real> {
    pub name: String,
    pub value: AnyTensor<T>,
    /// Buffers (running statistics) are stored and checkpointed but never
    /// receive gradients or optimizer updates.
    pub trainable: bool,
}

/// Ordered, uniquely named collection of parameters and buffers.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T: Real> {
    entries: Vec<Param<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    fn insert(&mut self, name: String, value: AnyTensor<T>, trainable: bool) -> ParamId {
        assert!(self.find(&name).is_none(), "duplicate parameter name {name}");
        self.entries.push(Param { name, value, trainable });
        ParamId(self.entries.len() - 1)
    }

    pub fn add(&mut self, name: impl Into<String>, value: impl Into<AnyTensor<T>>) -> ParamId {
        self.insert(name.into(), value.into(), true)
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: impl Into<AnyTensor<T>>) -> ParamId {
        self.insert(name.into(), value.into(), false)
    }

    pub fn get(&self, id: ParamId) -> &AnyTensor<T> {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut AnyTensor<T> {
        &mut self.entries[id.0].value
    }

    pub fn entry(&self, id: ParamId) -> &Param<T> {
        &self.entries[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn trainable_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.ids().filter(|id| self.entries[id.0].trainable)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.entries.iter()
    }

    /// Number of trainable real degrees of freedom.
    pub fn trainable_scalars(&self) -> usize {
        self.entries.iter().filter(|p| p.trainable).map(|p| p.value.real_len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|p| Param { name: p.name.clone(), value: p.value.cast(), trainable: p.trainable })
                .collect(),
        }
    }

    /// Replaces the value of `name`, checking kind and shape.
    pub fn set(&mut self, name: &str, value: AnyTensor<T>) -> Result<()> {
        let id = self.find(name).ok_or_else(|| Error::Format(format!("unknown parameter {name}")))?;
        let slot = &mut self.entries[id.0].value;
        if slot.kind() != value.kind() || slot.shape() != value.shape() {
            return Err(Error::Format(format!(
                "parameter {name}: expected {} {:?}, found {} {:?}",
                slot.kind(),
                slot.shape(),
                value.kind(),
                value.shape()
            )));
        }
        *slot = value;
        Ok(())
    }
}

/// Whether normalization layers use batch statistics or running statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Forward-pass context: the tape, the parameters bound as leaves, and the
/// running-statistics updates produced in train mode.
pub struct Ctx<'a, T: Real> {
    pub tape: &'a mut Tape<T>,
    pub store: &'a ParamStore<T>,
    pub mode: Mode,
    vars: Vec<Var>,
    updates: Vec<(ParamId, AnyTensor<T>)>,
}

impl<'a, T: Real> Ctx<'a, T> {
    pub fn new(tape: &'a mut Tape<T>, store: &'a ParamStore<T>, mode: Mode) -> Self {
        let vars = store.entries.iter().map(|p| tape.leaf(p.value.clone())).collect();
        Self { tape, store, mode, vars, updates: Vec::new() }
    }

    /// Binds with caller-provided leaves (used by gradient checks).
    pub fn with_vars(tape: &'a mut Tape<T>, store: &'a ParamStore<T>, mode: Mode, vars: Vec<Var>) -> Self {
        assert_eq!(vars.len(), store.len());
        Self { tape, store, mode, vars, updates: Vec::new() }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub(crate) fn push_update(&mut self, id: ParamId, value: AnyTensor<T>) {
        self.updates.push((id, value));
    }

    /// Leaf bindings (indexed like the store) and pending buffer updates.
    pub fn finish(self) -> (Vec<Var>, Vec<(ParamId, AnyTensor<T>)>) {
        (self.vars, self.updates)
    }
}

/// Writes running-statistics updates collected by a train-mode forward.
pub fn apply_updates<T: Real>(store: &mut ParamStore<T>, updates: Vec<(ParamId, AnyTensor<T>)>) {
    for (id, v) in updates {
        *store.get_mut(id) = v;
    }
}

/// `tanh` applied separately to the real and imaginary parts.
pub fn tanh_out<T: Real>(x: &CTensor<T>) -> CTensor<T> {
    x.map(|z| Complex::new(z.re.tanh(), z.im.tanh()))
}

pub fn leaky_relu<T: Real>(x: &RTensor<T>, slope: T) -> RTensor<T> {
    x.map(|v| if v >= T::zero() { v } else { v * slope })
}

impl<T: Real> Tape<T> {
    pub fn tanh_out(&mut self, x: Var) -> Result<Var> {
        let out = tanh_out(self.complex(x)?);
        Ok(self.push(
            out,
            vec![x],
            Box::new(|g, _, out| {
                let g = g.as_complex()?;
                let y = out.as_complex()?;
                // Separable map: each component scales by 1 − tanh².
                let gi = g.zip_map(y, |c, t| Complex::new(c.re * (T::one() - t.re * t.re), c.im * (T::one() - t.im * t.im)))?;
                Ok(vec![Some(AnyTensor::Complex(gi))])
            }),
        ))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Result<Var> {
        let xv = self.real(x)?;
        let out = leaky_relu(xv, slope);
        if self.tracking() {
            let bits: Vec<u8> = xv.data().iter().map(|&v| (v >= T::zero()) as u8).collect();
            self.mix_branches(bits);
        }
        Ok(self.push(
            out,
            vec![x],
            Box::new(move |g, inp, _| {
                let gi = g.as_real()?.zip_map(inp[0].as_real()?, |g, v| if v >= T::zero() { g } else { g * slope })?;
                Ok(vec![Some(AnyTensor::Real(gi))])
            }),
        ))
    }
}
