//! Generic differentiable primitives: elementwise algebra, reductions,
//! channel broadcasting, resampling and real/complex conversions.

use num_complex::Complex;

use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{self, AnyTensor, Array, CTensor, Elem, Real, RTensor};

macro_rules! map_any {
    ($v:expr, $t:ident => $body:expr) => {
        match $v {
            AnyTensor::Real($t) => AnyTensor::Real($body),
            AnyTensor::Complex($t) => AnyTensor::Complex($body),
        }
    };
}

macro_rules! zip_any {
    ($a:expr, $b:expr, ($x:ident, $y:ident) => $body:expr) => {
        match ($a, $b) {
            (AnyTensor::Real($x), AnyTensor::Real($y)) => AnyTensor::Real($body),
            (AnyTensor::Complex($x), AnyTensor::Complex($y)) => AnyTensor::Complex($body),
            (p, q) => return Err(Error::Kind { expected: p.kind(), found: q.kind() }),
        }
    };
}

fn channel_sum<E: Elem>(a: &Array<E>) -> Result<Array<E>> {
    let (n, c, h, w) = a.nchw()?;
    let plane = h * w;
    let mut out = vec![E::zero(); c];
    for b in 0..n {
        for (ch, acc) in out.iter_mut().enumerate() {
            let start = (b * c + ch) * plane;
            *acc = a.data()[start..start + plane].iter().fold(*acc, |s, &v| s + v);
        }
    }
    Array::new(&[c], out)
}

fn broadcast_channel<E: Elem, F: Elem>(a: &Array<E>, s: &Array<F>, f: impl Fn(E, F) -> E) -> Result<Array<E>> {
    let (_, c, h, w) = a.nchw()?;
    if s.shape() != [c] {
        return Err(Error::dim(format!("channel vector {:?} for {:?}", s.shape(), a.shape())));
    }
    let plane = h * w;
    let mut out = a.clone();
    for (i, chunk) in out.data_mut().chunks_exact_mut(plane).enumerate() {
        let v = s.data()[i % c];
        chunk.iter_mut().for_each(|x| *x = f(*x, v));
    }
    Ok(out)
}

fn scalar_like<E: Elem>(v: E) -> Array<E> {
    Array::scalar(v)
}

impl<T: Real> Tape<T> {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = zip_any!(self.value(a), self.value(b), (x, y) => x.add(y)?);
        Ok(self.push(out, vec![a, b], Box::new(|g, _, _| Ok(vec![Some(g.clone()), Some(g.clone())]))))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = zip_any!(self.value(a), self.value(b), (x, y) => x.sub(y)?);
        Ok(self.push(
            out,
            vec![a, b],
            Box::new(|g, _, _| Ok(vec![Some(g.clone()), Some(map_any!(g, t => t.scale(-T::one())))])),
        ))
    }

    /// Elementwise product; complex inputs use complex multiplication.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = zip_any!(self.value(a), self.value(b), (x, y) => x.mul(y)?);
        Ok(self.push(
            out,
            vec![a, b],
            Box::new(|g, inp, _| {
                let ga = zip_any!(g, inp[1], (g, y) => g.zip_map(y, |g, y| g * y.conj())?);
                let gb = zip_any!(g, inp[0], (g, x) => g.zip_map(x, |g, x| g * x.conj())?);
                Ok(vec![Some(ga), Some(gb)])
            }),
        ))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        let out = map_any!(self.value(a), t => t.scale(s));
        Ok(self.push(out, vec![a], Box::new(move |g, _, _| Ok(vec![Some(map_any!(g, t => t.scale(s)))]))))
    }

    /// Adds a real constant to every element of a real node.
    pub fn add_scalar(&mut self, a: Var, s: T) -> Result<Var> {
        let out = self.real(a)?.add_scalar(s);
        Ok(self.push(out, vec![a], Box::new(|g, _, _| Ok(vec![Some(g.clone())]))))
    }

    /// Sum of all elements as a one-element node of the same kind.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = map_any!(self.value(a), t => scalar_like(t.sum()));
        Ok(self.push(
            out,
            vec![a],
            Box::new(|g, inp, _| {
                let shape = inp[0].shape().to_vec();
                Ok(vec![Some(map_any!(g, t => Array::full(&shape, t.item()?)))])
            }),
        ))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = T::lit(self.value(a).len() as f64);
        let s = self.sum(a)?;
        self.scale(s, T::one() / n)
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&AnyTensor<T>> = parts.iter().map(|&v| self.value(v)).collect();
        let counts: Vec<usize> = values.iter().map(|v| v.shape().get(1).copied().unwrap_or(0)).collect();
        let out = match values[0] {
            AnyTensor::Real(_) => {
                let rs = values.iter().map(|v| v.as_real()).collect::<Result<Vec<_>>>()?;
                AnyTensor::Real(RTensor::concat_channels(&rs)?)
            }
            AnyTensor::Complex(_) => {
                let cs = values.iter().map(|v| v.as_complex()).collect::<Result<Vec<_>>>()?;
                AnyTensor::Complex(CTensor::concat_channels(&cs)?)
            }
        };
        Ok(self.push(
            out,
            parts.to_vec(),
            Box::new(move |g, _, _| {
                Ok(match g {
                    AnyTensor::Real(t) => t.split_channels(&counts)?.into_iter().map(|p| Some(AnyTensor::Real(p))).collect(),
                    AnyTensor::Complex(t) => {
                        t.split_channels(&counts)?.into_iter().map(|p| Some(AnyTensor::Complex(p))).collect()
                    }
                })
            }),
        ))
    }

    pub fn avg_pool(&mut self, a: Var, factor: usize) -> Result<Var> {
        if factor == 1 {
            return Ok(a);
        }
        let out = map_any!(self.value(a), t => tensor::avg_pool2(t, factor)?);
        Ok(self.push(
            out,
            vec![a],
            Box::new(move |g, inp, _| {
                let shape = inp[0].shape().to_vec();
                Ok(vec![Some(map_any!(g, t => tensor::avg_pool2_backward(t, factor, &shape)?))])
            }),
        ))
    }

    pub fn upsample(&mut self, a: Var, factor: usize) -> Result<Var> {
        if factor == 1 {
            return Ok(a);
        }
        let out = map_any!(self.value(a), t => tensor::upsample_bilinear(t, factor)?);
        Ok(self.push(
            out,
            vec![a],
            Box::new(move |g, inp, _| {
                let shape = inp[0].shape().to_vec();
                Ok(vec![Some(map_any!(g, t => tensor::upsample_bilinear_backward(t, factor, &shape)?))])
            }),
        ))
    }

    /// Mean over batch and spatial positions: `[N, C, H, W] → [C]`.
    pub fn channel_mean(&mut self, a: Var) -> Result<Var> {
        let shape = self.value(a).shape().to_vec();
        if shape.len() != 4 {
            return Err(Error::dim(format!("channel_mean expects [N, C, H, W], got {shape:?}")));
        }
        let inv = T::one() / T::lit((shape[0] * shape[2] * shape[3]) as f64);
        let out = map_any!(self.value(a), t => channel_sum(t)?.scale(inv));
        Ok(self.push(
            out,
            vec![a],
            Box::new(move |g, _, _| {
                Ok(vec![Some(map_any!(g, t => broadcast_channel(&Array::zeros(&shape), t, |_, v| v.scale(inv))?))])
            }),
        ))
    }

    /// `a + b` with `b: [C]` broadcast over `[N, C, H, W]`.
    pub fn add_channel(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = zip_any!(self.value(a), self.value(b), (x, y) => broadcast_channel(x, y, |p, q| p + q)?);
        Ok(self.push(
            out,
            vec![a, b],
            Box::new(|g, _, _| Ok(vec![Some(g.clone()), Some(map_any!(g, t => channel_sum(t)?))])),
        ))
    }

    /// `a · s` with a real per-channel `s: [C]`.
    pub fn mul_channel(&mut self, a: Var, s: Var) -> Result<Var> {
        let sv = self.real(s)?;
        let out = map_any!(self.value(a), t => broadcast_channel(t, sv, |p, q| p.scale(q))?);
        Ok(self.push(
            out,
            vec![a, s],
            Box::new(|g, inp, _| {
                let s = inp[1].as_real()?;
                let ga = map_any!(g, t => broadcast_channel(t, s, |p, q| p.scale(q))?);
                let gs = match (g, inp[0]) {
                    (AnyTensor::Real(g), AnyTensor::Real(x)) => channel_sum(&g.mul(x)?)?,
                    (AnyTensor::Complex(g), AnyTensor::Complex(x)) => {
                        channel_sum(&g.zip_map(x, |c, z| Complex::new(super::real_partial(c, z), T::zero()))?)?.re()
                    }
                    (p, q) => return Err(Error::Kind { expected: p.kind(), found: q.kind() }),
                };
                Ok(vec![Some(ga), Some(AnyTensor::Real(gs))])
            }),
        ))
    }

    pub fn re(&mut self, a: Var) -> Result<Var> {
        let out = self.complex(a)?.re();
        Ok(self.push(
            out,
            vec![a],
            Box::new(|g, _, _| {
                let half = T::lit(0.5);
                Ok(vec![Some(AnyTensor::Complex(g.as_real()?.map_to(|v| Complex::new(v * half, T::zero()))))])
            }),
        ))
    }

    pub fn im(&mut self, a: Var) -> Result<Var> {
        let out = self.complex(a)?.im();
        Ok(self.push(
            out,
            vec![a],
            Box::new(|g, _, _| {
                let half = T::lit(0.5);
                Ok(vec![Some(AnyTensor::Complex(g.as_real()?.map_to(|v| Complex::new(T::zero(), v * half))))])
            }),
        ))
    }

    /// Assembles `re + i·im` from two real nodes.
    pub fn make_complex(&mut self, re: Var, im: Var) -> Result<Var> {
        let out = CTensor::from_parts(self.real(re)?, self.real(im)?)?;
        Ok(self.push(
            out,
            vec![re, im],
            Box::new(|g, _, _| {
                let g = g.as_complex()?;
                let two = T::lit(2.0);
                Ok(vec![Some(AnyTensor::Real(g.re().scale(two))), Some(AnyTensor::Real(g.im().scale(two)))])
            }),
        ))
    }

    /// `|a|`, with subgradient 0 at `a = 0`.
    pub fn magnitude(&mut self, a: Var) -> Result<Var> {
        let x = self.complex(a)?;
        let out = x.magnitude();
        if self.tracking() {
            let bits: Vec<u8> = x.data().iter().map(|z| (z.norm() == T::zero()) as u8).collect();
            self.mix_branches(bits);
        }
        Ok(self.push(
            out,
            vec![a],
            Box::new(|g, inp, out| {
                let g = g.as_real()?;
                let x = inp[0].as_complex()?;
                let m = out.as_real()?;
                let half = T::lit(0.5);
                let data = x
                    .data()
                    .iter()
                    .zip(m.data())
                    .zip(g.data())
                    .map(|((&z, &r), &gv)| if r > T::zero() { z.scale(half * gv / r) } else { Complex::new(T::zero(), T::zero()) })
                    .collect();
                Ok(vec![Some(AnyTensor::Complex(CTensor::new(x.shape(), data)?))])
            }),
        ))
    }

    /// Real `|a|`, with subgradient 0 at `a = 0`.
    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let x = self.real(a)?;
        let out = x.map(|v| v.abs());
        if self.tracking() {
            let bits: Vec<u8> = x.data().iter().map(|&v| (v > T::zero()) as u8 + (v < T::zero()) as u8 * 2).collect();
            self.mix_branches(bits);
        }
        Ok(self.push(
            out,
            vec![a],
            Box::new(|g, inp, _| {
                let sign = |v: T| if v > T::zero() { T::one() } else if v < T::zero() { -T::one() } else { T::zero() };
                Ok(vec![Some(AnyTensor::Real(g.as_real()?.zip_map(inp[0].as_real()?, |g, v| g * sign(v))?))])
            }),
        ))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let x = self.real(a)?;
        if x.data().iter().any(|&v| v < T::zero()) {
            return Err(Error::contract("sqrt of a negative value"));
        }
        let out = x.map(|v| v.sqrt());
        Ok(self.push(
            out,
            vec![a],
            Box::new(|g, _, out| {
                let half = T::lit(0.5);
                Ok(vec![Some(AnyTensor::Real(g.as_real()?.zip_map(out.as_real()?, |g, s| g * half / s)?))])
            }),
        ))
    }

    pub fn recip(&mut self, a: Var) -> Result<Var> {
        let out = self.real(a)?.map(|v| T::one() / v);
        Ok(self.push(
            out,
            vec![a],
            Box::new(|g, _, out| Ok(vec![Some(AnyTensor::Real(g.as_real()?.zip_map(out.as_real()?, |g, r| -g * r * r)?))])),
        ))
    }
}
