use num_complex::Complex;

use super::{Ctx, Mode, ParamId, ParamStore};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{AnyTensor, Array, CTensor, Real, RTensor};

pub const CBN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// `(B)^(−1/2)` of the symmetric positive definite `[[a, b], [b, c]]`,
/// returned as `(w00, w01, w11)`.
pub fn inv_sqrt_2x2<T: Real>(a: T, b: T, c: T) -> (T, T, T) {
    let s = (a * c - b * b).sqrt();
    let t = (a + c + T::lit(2.0) * s).sqrt();
    let d = T::one() / (s * t);
    ((c + s) * d, -b * d, (a + s) * d)
}

fn per_channel<T: Real>(x: &CTensor<T>, mut f: impl FnMut(usize, Complex<T>) -> Complex<T>) -> Result<CTensor<T>> {
    let (_, c, h, w) = x.nchw()?;
    let plane = h * w;
    let mut out = x.clone();
    for (i, chunk) in out.data_mut().chunks_exact_mut(plane).enumerate() {
        let ch = i % c;
        chunk.iter_mut().for_each(|z| *z = f(ch, *z));
    }
    Ok(out)
}

impl<T: Real> Tape<T> {
    /// Per-channel real 2×2 map of `(x_R, x_I)`:
    /// `out_R = m00·x_R + m01·x_I`, `out_I = m10·x_R + m11·x_I`.
    pub fn affine2x2_channel(&mut self, x: Var, m: [Var; 4]) -> Result<Var> {
        let (_, c, _, _) = self.complex(x)?.nchw()?;
        for v in m {
            if self.real(v)?.shape() != [c] {
                return Err(Error::dim(format!("2x2 coefficients must have shape [{c}]")));
            }
        }
        let coef = |t: &Tape<T>, ch: usize| m.map(|v| t.real(v).map(|a| a.data()[ch]).unwrap_or_default());
        let table: Vec<[T; 4]> = (0..c).map(|ch| coef(self, ch)).collect();
        let out = per_channel(self.complex(x)?, |ch, z| {
            let [a, b, cc, d] = table[ch];
            Complex::new(a * z.re + b * z.im, cc * z.re + d * z.im)
        })?;
        Ok(self.push(
            out,
            vec![x, m[0], m[1], m[2], m[3]],
            Box::new(|g, inp, _| {
                let g = g.as_complex()?;
                let x = inp[0].as_complex()?;
                let (_, c, h, w) = x.nchw()?;
                let plane = h * w;
                let coef: Vec<[T; 4]> = (0..c)
                    .map(|ch| {
                        let mut t = [T::zero(); 4];
                        for (j, v) in t.iter_mut().enumerate() {
                            *v = inp[1 + j].as_real().map(|a| a.data()[ch]).unwrap_or_default();
                        }
                        t
                    })
                    .collect();
                let mut dm = vec![[T::zero(); 4]; c];
                let mut dx = g.clone();
                let two = T::lit(2.0);
                for (i, (gc, xc)) in g.data().chunks_exact(plane).zip(x.data().chunks_exact(plane)).enumerate() {
                    let ch = i % c;
                    let [a, b, cc, d] = coef[ch];
                    let acc = &mut dm[ch];
                    for (cv, z) in gc.iter().zip(xc) {
                        acc[0] += two * cv.re * z.re;
                        acc[1] += two * cv.re * z.im;
                        acc[2] += two * cv.im * z.re;
                        acc[3] += two * cv.im * z.im;
                    }
                    for (dz, cv) in dx.data_mut()[i * plane..(i + 1) * plane].iter_mut().zip(gc) {
                        *dz = Complex::new(cv.re * a + cv.im * cc, cv.re * b + cv.im * d);
                    }
                }
                let mut grads = vec![Some(AnyTensor::Complex(dx))];
                for j in 0..4 {
                    grads.push(Some(AnyTensor::Real(Array::new(&[c], dm.iter().map(|t| t[j]).collect())?)));
                }
                Ok(grads)
            }),
        ))
    }
}

/// Complex batch normalization: whitening of `(x_R, x_I)` per channel
/// followed by a learned 2×2 scale `γ` and complex shift `β`.
#[derive(Clone, Debug)]
pub struct ComplexBatchNorm {
    /// `γ_rr, γ_ri, γ_ir, γ_ii`, each `[C]`.
    pub gamma: [ParamId; 4],
    pub beta: ParamId,
    /// Running complex mean `[C]`.
    pub running_mean: ParamId,
    /// Running `(V_rr, V_ri, V_ii)` as `[3, C]`.
    pub running_cov: ParamId,
    pub channels: usize,
    pub eps: f64,
    pub momentum: f64,
}

impl ComplexBatchNorm {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        let diag = RTensor::full(&[channels], T::lit(std::f64::consts::FRAC_1_SQRT_2));
        let zero = RTensor::<T>::zeros(&[channels]);
        let gamma = [
            store.add(format!("{name}.g_rr"), diag.clone()),
            store.add(format!("{name}.g_ri"), zero.clone()),
            store.add(format!("{name}.g_ir"), zero),
            store.add(format!("{name}.g_ii"), diag),
        ];
        let beta = store.add(format!("{name}.beta"), CTensor::<T>::zeros(&[channels]));
        let running_mean = store.add_buffer(format!("{name}.mean"), CTensor::<T>::zeros(&[channels]));
        let cov = RTensor::from_fn(&[3, channels], |i| if i / channels == 1 { T::zero() } else { T::one() });
        let running_cov = store.add_buffer(format!("{name}.cov"), cov);
        Self { gamma, beta, running_mean, running_cov, channels, eps: CBN_EPS, momentum: BN_MOMENTUM }
    }

    pub fn forward<T: Real>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let (n, c, _, _) = cx.tape.complex(x)?.nchw()?;
        if c != self.channels {
            return Err(Error::dim(format!("batch norm for {} channels got {c}", self.channels)));
        }
        let eps = T::lit(self.eps);
        let (xc, w) = match cx.mode {
            Mode::Train => {
                if n < 2 {
                    return Err(Error::contract("complex batch norm in train mode needs a batch of at least 2"));
                }
                let t = &mut *cx.tape;
                let mu = t.channel_mean(x)?;
                let neg = t.scale(mu, -T::one())?;
                let xc = t.add_channel(x, neg)?;
                let (r, i) = (t.re(xc)?, t.im(xc)?);
                let rr = t.mul(r, r)?;
                let ii = t.mul(i, i)?;
                let ri = t.mul(r, i)?;
                let (vrr0, vii0, vri) = (t.channel_mean(rr)?, t.channel_mean(ii)?, t.channel_mean(ri)?);
                let batch = (t.complex(mu)?.clone(), [t.real(vrr0)?.clone(), t.real(vri)?.clone(), t.real(vii0)?.clone()]);
                let vrr = t.add_scalar(vrr0, eps)?;
                let vii = t.add_scalar(vii0, eps)?;
                let p = t.mul(vrr, vii)?;
                let q = t.mul(vri, vri)?;
                let det = t.sub(p, q)?;
                let s = t.sqrt(det)?;
                let tr = t.add(vrr, vii)?;
                let s2 = t.scale(s, T::lit(2.0))?;
                let tr2 = t.add(tr, s2)?;
                let tt = t.sqrt(tr2)?;
                let st = t.mul(s, tt)?;
                let d = t.recip(st)?;
                let a = t.add(vii, s)?;
                let w00 = t.mul(a, d)?;
                let b = t.add(vrr, s)?;
                let w11 = t.mul(b, d)?;
                let nb = t.scale(vri, -T::one())?;
                let w01 = t.mul(nb, d)?;
                self.record(cx, batch)?;
                (xc, [w00, w01, w01, w11])
            }
            Mode::Infer => {
                let mean = cx.store.get(self.running_mean).as_complex()?.clone();
                let cov = cx.store.get(self.running_cov).as_real()?;
                let mut ws = [vec![], vec![], vec![]];
                for ch in 0..c {
                    let (a, b, d) = (cov.data()[ch] + eps, cov.data()[c + ch], cov.data()[2 * c + ch] + eps);
                    let (w00, w01, w11) = inv_sqrt_2x2(a, b, d);
                    ws[0].push(w00);
                    ws[1].push(w01);
                    ws[2].push(w11);
                }
                let t = &mut *cx.tape;
                let neg = t.leaf(mean.mul_scalar(Complex::new(-T::one(), T::zero())));
                let xc = t.add_channel(x, neg)?;
                let [w00, w01, w11] = ws.map(|v| t.leaf(RTensor::new(&[c], v).expect("channel vector")));
                (xc, [w00, w01, w01, w11])
            }
        };
        let t = &mut *cx.tape;
        let xs = t.affine2x2_channel(xc, w)?;
        let g = self.gamma.map(|id| cx.var(id));
        let y = cx.tape.affine2x2_channel(xs, g)?;
        let beta = cx.var(self.beta);
        cx.tape.add_channel(y, beta)
    }

    fn record<T: Real>(&self, cx: &mut Ctx<'_, T>, (mu, v): (CTensor<T>, [RTensor<T>; 3])) -> Result<()> {
        let m = T::lit(self.momentum);
        let keep = T::one() - m;
        let old_mean = cx.store.get(self.running_mean).as_complex()?;
        let mean = old_mean.zip_map(&mu, |o, b| o.scale(m) + b.scale(keep))?;
        let old_cov = cx.store.get(self.running_cov).as_real()?;
        let c = self.channels;
        let cov = RTensor::from_fn(&[3, c], |i| old_cov.data()[i] * m + v[i / c].data()[i % c] * keep);
        cx.push_update(self.running_mean, mean.into());
        cx.push_update(self.running_cov, cov.into());
        Ok(())
    }
}

/// Applies a [`ComplexBatchNorm`] outside of any training graph.
pub fn complex_batch_norm<T: Real>(
    x: &CTensor<T>,
    layer: &ComplexBatchNorm,
    store: &ParamStore<T>,
    mode: Mode,
) -> Result<CTensor<T>> {
    let mut tape = Tape::new();
    let mut cx = Ctx::new(&mut tape, store, mode);
    let xv = cx.tape.leaf(x.clone());
    let y = layer.forward(&mut cx, xv)?;
    Ok(tape.complex(y)?.clone())
}

/// Real per-channel batch normalization (discriminator).
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub channels: usize,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), RTensor::full(&[channels], T::one())),
            beta: store.add(format!("{name}.beta"), RTensor::<T>::zeros(&[channels])),
            running_mean: store.add_buffer(format!("{name}.mean"), RTensor::<T>::zeros(&[channels])),
            running_var: store.add_buffer(format!("{name}.var"), RTensor::full(&[channels], T::one())),
            channels,
            eps: CBN_EPS,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn forward<T: Real>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let (n, c, _, _) = cx.tape.real(x)?.nchw()?;
        if c != self.channels {
            return Err(Error::dim(format!("batch norm for {} channels got {c}", self.channels)));
        }
        let eps = T::lit(self.eps);
        let (xc, inv) = match cx.mode {
            Mode::Train => {
                if n < 2 {
                    return Err(Error::contract("batch norm in train mode needs a batch of at least 2"));
                }
                let t = &mut *cx.tape;
                let mu = t.channel_mean(x)?;
                let neg = t.scale(mu, -T::one())?;
                let xc = t.add_channel(x, neg)?;
                let sq = t.mul(xc, xc)?;
                let var = t.channel_mean(sq)?;
                let (mu_v, var_v) = (t.real(mu)?.clone(), t.real(var)?.clone());
                let ve = t.add_scalar(var, eps)?;
                let sd = t.sqrt(ve)?;
                let inv = t.recip(sd)?;
                let m = T::lit(self.momentum);
                let keep = T::one() - m;
                let rm = cx.store.get(self.running_mean).as_real()?.zip_map(&mu_v, |o, b| o * m + b * keep)?;
                let rv = cx.store.get(self.running_var).as_real()?.zip_map(&var_v, |o, b| o * m + b * keep)?;
                cx.push_update(self.running_mean, rm.into());
                cx.push_update(self.running_var, rv.into());
                (xc, inv)
            }
            Mode::Infer => {
                let neg = cx.store.get(self.running_mean).as_real()?.map(|v| -v);
                let inv = cx.store.get(self.running_var).as_real()?.map(|v| T::one() / (v + eps).sqrt());
                let t = &mut *cx.tape;
                let neg = t.leaf(neg);
                let xc = t.add_channel(x, neg)?;
                (xc, t.leaf(inv))
            }
        };
        let (g, b) = (cx.var(self.gamma), cx.var(self.beta));
        let t = &mut *cx.tape;
        let xn = t.mul_channel(xc, inv)?;
        let y = t.mul_channel(xn, g)?;
        t.add_channel(y, b)
    }
}
