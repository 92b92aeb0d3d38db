//! Reverse-mode automatic differentiation over mixed real/complex graphs.
//!
//! Cotangent convention: for a real node `x` the stored cotangent is
//! `∂f/∂x`; for a complex node `z` it is the conjugate Wirtinger derivative
//! `∂f/∂z̄ = ½(∂f/∂z_R + i ∂f/∂z_I)`, so the gradient of a complex
//! parameter is directly the steepest-descent direction `∇_w̄ f`.
//!
//! Every primitive is expressed through its real Jacobian: given partials
//! `J_R = ∂out/∂a_R` and `J_I = ∂out/∂a_I` of an elementwise complex map,
//! the input cotangent is `Re(c̄ J_R) + i Re(c̄ J_I)` (see [`pullback`]).
//! Holomorphic maps reduce to `conj(g'(a))·c`.

mod check;
mod ops;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::tensor::{AnyTensor, CTensor, RTensor, Real};

pub use check::{grad_check, GradCheckConfig, GradCheckReport};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule: `(output cotangent, input values, output value)` to one
/// optional cotangent per input.
pub type BackwardFn<T> =
    Box<dyn Fn(&AnyTensor<T>, &[&AnyTensor<T>], &AnyTensor<T>) -> Result<Vec<Option<AnyTensor<T>>>>>;

struct Node<T: Real> {
    value: AnyTensor<T>,
    inputs: Vec<Var>,
    backward: Option<BackwardFn<T>>,
}

/// Records a computation in topological order for later replay.
pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
    track_branches: bool,
    signature: u64,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), track_branches: false, signature: 0xcbf2_9ce4_8422_2325 }
    }

    /// A tape that hashes every branch decision taken by piecewise
    /// primitives (ReLU sides, quadrants, sign of |·| arguments). Two
    /// evaluations with equal signatures lie on the same smooth piece.
    pub fn with_branch_tracking() -> Self {
        Self { track_branches: true, ..Self::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn signature(&self) -> u64 {
        self.signature
    }

    pub(crate) fn tracking(&self) -> bool {
        self.track_branches
    }

    pub(crate) fn mix_branches(&mut self, bits: impl IntoIterator<Item = u8>) {
        if !self.track_branches {
            return;
        }
        let mut h = self.signature;
        for b in bits {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        self.signature = h;
    }

    /// Adds an input or parameter node.
    pub fn leaf(&mut self, value: impl Into<AnyTensor<T>>) -> Var {
        self.nodes.push(Node { value: value.into(), inputs: Vec::new(), backward: None });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn push(&mut self, value: impl Into<AnyTensor<T>>, inputs: Vec<Var>, backward: BackwardFn<T>) -> Var {
        let value = value.into();
        debug_assert!(inputs.iter().all(|v| v.0 < self.nodes.len()));
        self.nodes.push(Node { value, inputs, backward: Some(backward) });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &AnyTensor<T> {
        &self.nodes[v.0].value
    }

    pub fn real(&self, v: Var) -> Result<&RTensor<T>> {
        self.value(v).as_real()
    }

    pub fn complex(&self, v: Var) -> Result<&CTensor<T>> {
        self.value(v).as_complex()
    }

    /// Value of a one-element real node.
    pub fn scalar(&self, v: Var) -> Result<T> {
        self.real(v)?.item()
    }

    /// Replays the tape backwards from a real scalar `loss`, returning the
    /// cotangents of every leaf reached.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        match self.value(loss) {
            AnyTensor::Real(l) if l.len() == 1 => {}
            AnyTensor::Real(l) => {
                return Err(Error::contract(format!("loss must be a scalar, got shape {:?}", l.shape())))
            }
            AnyTensor::Complex(_) => return Err(Error::contract("loss must be real-valued, got a complex node")),
        }
        let mut grads: Vec<Option<AnyTensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(AnyTensor::Real(RTensor::scalar(T::one())));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let Some(backward) = &node.backward else { continue };
            let Some(g) = grads[i].take() else { continue };
            let inputs: Vec<&AnyTensor<T>> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let input_grads = backward(&g, &inputs, &node.value)?;
            if input_grads.len() != inputs.len() {
                return Err(Error::Internal(format!(
                    "node {i}: backward produced {} cotangents for {} inputs",
                    input_grads.len(),
                    inputs.len()
                )));
            }
            for (v, gi) in node.inputs.iter().zip(input_grads) {
                let Some(gi) = gi else { continue };
                let target = &self.nodes[v.0].value;
                if gi.kind() != target.kind() || gi.shape() != target.shape() {
                    return Err(Error::Internal(format!(
                        "node {i}: cotangent {} {:?} does not match input {} {:?}",
                        gi.kind(),
                        gi.shape(),
                        target.kind(),
                        target.shape()
                    )));
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&gi)?,
                    slot => *slot = Some(gi),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Leaf cotangents produced by [`Tape::backward`].
pub struct Gradients<T: Real> {
    grads: Vec<Option<AnyTensor<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Cotangent of `v`, or `None` if the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&AnyTensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<AnyTensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

/// Input cotangent of an elementwise map with real partials
/// `d_re = ∂out/∂a_R`, `d_im = ∂out/∂a_I` and output cotangent `c`.
#[inline]
pub fn pullback<T: Real>(c: Complex<T>, d_re: Complex<T>, d_im: Complex<T>) -> Complex<T> {
    Complex::new(c.re * d_re.re + c.im * d_re.im, c.re * d_im.re + c.im * d_im.im)
}

/// `∂f/∂p` for a real quantity `p` feeding a complex output with
/// `∂out/∂p = d`.
#[inline]
pub fn real_partial<T: Real>(c: Complex<T>, d: Complex<T>) -> T {
    T::lit(2.0) * (c.re * d.re + c.im * d.im)
}
