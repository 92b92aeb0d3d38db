//! Complex activation functions.
//!
//! Split activations act on `(a_R, a_I)` separately (ℂReLU, ℂPReLU). Phase
//! activations scale `a` by a gain that depends only on `∠a` (zReLU,
//! cardioid and the sum-of-sinusoids family), so they are positively
//! homogeneous in `|a|`.
//!
//! The sum-of-sinusoids gain with `P_S = 3` terms is
//! `g(θ) = Σ w_p (1 + cos(2^p (θ − θ_p))) / (2 Σ |w_p| + ε)`, applied as
//! `g(∠a)·a·e^{iφ}` (PC-SS). PP-SS uses `|w_p|` in the numerator and
//! `φ = 0`; TIP-SS keeps signed weights with `φ = 0`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;

use crate::autodiff::{pullback, real_partial, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{Ctx, ParamId, ParamStore};
use crate::tensor::{phase_of, AnyTensor, Array, CTensor, Real, RTensor};

pub const SS_TERMS: usize = 3;
pub const SS_EPS: f64 = 1e-7;
pub const CPRELU_INIT: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    CRelu,
    CPRelu,
    ZRelu,
    Cardioid,
    PpSs,
    TipSs,
    PcSs,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 7] = [
        ActivationKind::CRelu,
        ActivationKind::CPRelu,
        ActivationKind::ZRelu,
        ActivationKind::Cardioid,
        ActivationKind::PpSs,
        ActivationKind::TipSs,
        ActivationKind::PcSs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::CRelu => "crelu",
            Self::CPRelu => "cprelu",
            Self::ZRelu => "zrelu",
            Self::Cardioid => "cardioid",
            Self::PpSs => "pp-ss",
            Self::TipSs => "tip-ss",
            Self::PcSs => "pc-ss",
        }
    }

    fn ss_variant(self) -> Option<SsVariant> {
        match self {
            Self::PcSs => Some(SsVariant::PcSs),
            Self::PpSs => Some(SsVariant::PpSs),
            Self::TipSs => Some(SsVariant::TipSs),
            _ => None,
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL.into_iter().find(|k| k.name() == key || k.name().replace('-', "") == key).ok_or_else(|| Error::Config {
            key: "activation".into(),
            message: format!("unknown activation {s:?}; expected one of crelu, cprelu, zrelu, cardioid, pp-ss, tip-ss, pc-ss"),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SsVariant {
    PcSs,
    PpSs,
    TipSs,
}

/// Per-channel parameters of the sum-of-sinusoids family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsParams<T> {
    pub w: [T; SS_TERMS],
    pub theta: [T; SS_TERMS],
    pub phi: T,
}

impl<T: Real> Default for SsParams<T> {
    /// Cardioid profile: `w = (1, 0, 0)`, `θ = 0`, `φ = 0`.
    fn default() -> Self {
        let mut w = [T::zero(); SS_TERMS];
        w[0] = T::one();
        Self { w, theta: [T::zero(); SS_TERMS], phi: T::zero() }
    }
}

/// Gain value and its partials at one phase.
#[derive(Clone, Copy, Debug)]
struct GainEval<T> {
    g: T,
    d_phase: T,
    d_w: [T; SS_TERMS],
    d_theta: [T; SS_TERMS],
}

fn sign<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

impl<T: Real> SsParams<T> {
    fn eval(&self, phase: T, variant: SsVariant) -> GainEval<T> {
        let eps = T::lit(SS_EPS);
        let two = T::lit(2.0);
        let abs_sum: T = self.w.iter().map(|w| w.abs()).sum();
        let den = two * abs_sum + eps;
        let mut num = T::zero();
        let mut d_phase = T::zero();
        let mut d_theta = [T::zero(); SS_TERMS];
        let mut basis = [T::zero(); SS_TERMS];
        for p in 0..SS_TERMS {
            let f = T::lit((1u32 << p) as f64);
            let arg = f * (phase - self.theta[p]);
            let (s, c) = arg.sin_cos();
            let coef = match variant {
                SsVariant::PpSs => self.w[p].abs(),
                _ => self.w[p],
            };
            basis[p] = T::one() + c;
            num += coef * basis[p];
            d_phase -= coef * f * s / den;
            d_theta[p] = coef * f * s / den;
        }
        let g = num / den;
        let mut d_w = [T::zero(); SS_TERMS];
        for p in 0..SS_TERMS {
            let sg = sign(self.w[p]);
            let d_num = match variant {
                SsVariant::PpSs => sg * basis[p],
                _ => basis[p],
            };
            d_w[p] = d_num / den - num * two * sg / (den * den);
        }
        GainEval { g, d_phase, d_w, d_theta }
    }

    /// Real gain `g(∠a)` before the `e^{iφ}` rotation.
    pub fn gain(&self, phase: T, variant: SsVariant) -> T {
        self.eval(phase, variant).g
    }

    fn rotation(&self, variant: SsVariant) -> Complex<T> {
        match variant {
            SsVariant::PcSs => Complex::from_polar(T::one(), self.phi),
            _ => Complex::new(T::one(), T::zero()),
        }
    }

    pub fn apply(&self, a: Complex<T>, variant: SsVariant) -> Complex<T> {
        a * self.rotation(variant).scale(self.gain(phase_of(a), variant))
    }
}

pub fn crelu_scalar<T: Real>(a: Complex<T>) -> Complex<T> {
    Complex::new(a.re.max(T::zero()), a.im.max(T::zero()))
}

pub fn cprelu_scalar<T: Real>(a: Complex<T>, beta_r: T, beta_i: T) -> Complex<T> {
    Complex::new(
        if a.re >= T::zero() { a.re } else { beta_r * a.re },
        if a.im >= T::zero() { a.im } else { beta_i * a.im },
    )
}

fn in_first_quadrant<T: Real>(a: Complex<T>) -> bool {
    let ph = phase_of(a);
    ph >= T::zero() && ph <= T::FRAC_PI_2()
}

pub fn zrelu_scalar<T: Real>(a: Complex<T>) -> Complex<T> {
    if in_first_quadrant(a) {
        a
    } else {
        Complex::new(T::zero(), T::zero())
    }
}

pub fn cardioid_gain<T: Real>(phase: T) -> T {
    T::lit(0.5) * (T::one() + phase.cos())
}

pub fn cardioid_scalar<T: Real>(a: Complex<T>) -> Complex<T> {
    a.scale(cardioid_gain(phase_of(a)))
}

/// Channel index lookup for per-channel parameters: a single parameter set
/// applies to any shape, otherwise the input must be `[N, C, H, W]`.
fn channel_map(shape: &[usize], count: usize) -> Result<(usize, usize)> {
    if count == 1 {
        return Ok((1, shape.iter().product()));
    }
    if shape.len() != 4 || shape[1] != count {
        return Err(Error::dim(format!("{count} channel parameter sets for input {shape:?}")));
    }
    Ok((count, shape[2] * shape[3]))
}

fn map_channels<T: Real>(
    a: &CTensor<T>,
    count: usize,
    f: impl Fn(usize, Complex<T>) -> Complex<T>,
) -> Result<CTensor<T>> {
    let (c, plane) = channel_map(a.shape(), count)?;
    let mut out = a.clone();
    for (i, chunk) in out.data_mut().chunks_exact_mut(plane).enumerate() {
        chunk.iter_mut().for_each(|z| *z = f(i % c, *z));
    }
    Ok(out)
}

pub fn crelu<T: Real>(a: &CTensor<T>) -> CTensor<T> {
    a.map(crelu_scalar)
}

pub fn zrelu<T: Real>(a: &CTensor<T>) -> CTensor<T> {
    a.map(zrelu_scalar)
}

pub fn cardioid<T: Real>(a: &CTensor<T>) -> CTensor<T> {
    a.map(cardioid_scalar)
}

/// ℂPReLU with per-channel `(β_R, β_I)`.
pub fn cprelu<T: Real>(a: &CTensor<T>, beta: &[(T, T)]) -> Result<CTensor<T>> {
    map_channels(a, beta.len(), |ch, z| cprelu_scalar(z, beta[ch].0, beta[ch].1))
}

/// Sum-of-sinusoids activation with per-channel parameters.
pub fn pcss<T: Real>(a: &CTensor<T>, params: &[SsParams<T>], variant: SsVariant) -> Result<CTensor<T>> {
    map_channels(a, params.len(), |ch, z| params[ch].apply(z, variant))
}

impl<T: Real> Tape<T> {
    pub fn crelu(&mut self, x: Var) -> Result<Var> {
        let xv = self.complex(x)?;
        let out = crelu(xv);
        if self.tracking() {
            let bits: Vec<u8> = xv.data().iter().map(|z| (z.re > T::zero()) as u8 | ((z.im > T::zero()) as u8) << 1).collect();
            self.mix_branches(bits);
        }
        Ok(self.push(
            out,
            vec![x],
            Box::new(|g, inp, _| {
                let gi = g.as_complex()?.zip_map(inp[0].as_complex()?, |c, z| {
                    Complex::new(if z.re > T::zero() { c.re } else { T::zero() }, if z.im > T::zero() { c.im } else { T::zero() })
                })?;
                Ok(vec![Some(AnyTensor::Complex(gi))])
            }),
        ))
    }

    /// ℂPReLU with real per-channel slopes `beta_r`, `beta_i: [C]`.
    pub fn cprelu(&mut self, x: Var, beta_r: Var, beta_i: Var) -> Result<Var> {
        let xv = self.complex(x)?;
        let (br, bi) = (self.real(beta_r)?, self.real(beta_i)?);
        let beta: Vec<(T, T)> = br.data().iter().copied().zip(bi.data().iter().copied()).collect();
        let out = cprelu(xv, &beta)?;
        if self.tracking() {
            let bits: Vec<u8> = xv.data().iter().map(|z| (z.re >= T::zero()) as u8 | ((z.im >= T::zero()) as u8) << 1).collect();
            self.mix_branches(bits);
        }
        Ok(self.push(
            out,
            vec![x, beta_r, beta_i],
            Box::new(|g, inp, _| {
                let g = g.as_complex()?;
                let x = inp[0].as_complex()?;
                let (br, bi) = (inp[1].as_real()?, inp[2].as_real()?);
                let (c, plane) = channel_map(x.shape(), br.len())?;
                let mut dx = g.clone();
                let mut dbr = vec![T::zero(); c];
                let mut dbi = vec![T::zero(); c];
                let two = T::lit(2.0);
                for (i, (dz, (cv, z))) in dx.data_mut().iter_mut().zip(g.data().iter().zip(x.data())).enumerate() {
                    let ch = (i / plane) % c;
                    let mut d = *cv;
                    if z.re < T::zero() {
                        d.re *= br.data()[ch];
                        dbr[ch] += two * cv.re * z.re;
                    }
                    if z.im < T::zero() {
                        d.im *= bi.data()[ch];
                        dbi[ch] += two * cv.im * z.im;
                    }
                    *dz = d;
                }
                Ok(vec![
                    Some(AnyTensor::Complex(dx)),
                    Some(AnyTensor::Real(Array::new(br.shape(), dbr)?)),
                    Some(AnyTensor::Real(Array::new(bi.shape(), dbi)?)),
                ])
            }),
        ))
    }

    pub fn zrelu(&mut self, x: Var) -> Result<Var> {
        let xv = self.complex(x)?;
        let out = zrelu(xv);
        if self.tracking() {
            let bits: Vec<u8> = xv.data().iter().map(|&z| in_first_quadrant(z) as u8).collect();
            self.mix_branches(bits);
        }
        Ok(self.push(
            out,
            vec![x],
            Box::new(|g, inp, _| {
                let gi = g.as_complex()?.zip_map(inp[0].as_complex()?, |c, z| {
                    if in_first_quadrant(z) {
                        c
                    } else {
                        Complex::new(T::zero(), T::zero())
                    }
                })?;
                Ok(vec![Some(AnyTensor::Complex(gi))])
            }),
        ))
    }

    pub fn cardioid(&mut self, x: Var) -> Result<Var> {
        self.phase_gain(x, None, None)
    }

    /// Sum-of-sinusoids activation. `w`, `theta: [C, 3]`; `phi: [C]` is
    /// required for PC-SS and ignored otherwise.
    pub fn sinusoid_gain(&mut self, x: Var, w: Var, theta: Var, phi: Option<Var>, variant: SsVariant) -> Result<Var> {
        let phi = match variant {
            SsVariant::PcSs => Some(phi.ok_or_else(|| Error::contract("PC-SS needs a phase parameter"))?),
            _ => None,
        };
        self.phase_gain(x, Some((w, theta, variant)), phi)
    }

    fn phase_gain(&mut self, x: Var, ss: Option<(Var, Var, SsVariant)>, phi: Option<Var>) -> Result<Var> {
        let xv = self.complex(x)?;
        let params = match ss {
            Some((w, th, _)) => {
                let (w, th) = (self.real(w)?, self.real(th)?);
                let c = w.len() / SS_TERMS;
                if w.shape() != [c, SS_TERMS] || th.shape() != [c, SS_TERMS] {
                    return Err(Error::dim(format!("sinusoid weights must be [C, {SS_TERMS}], got {:?} and {:?}", w.shape(), th.shape())));
                }
                let phis = match phi {
                    Some(p) => {
                        let p = self.real(p)?;
                        if p.shape() != [c] {
                            return Err(Error::dim(format!("phase parameter must be [{c}], got {:?}", p.shape())));
                        }
                        p.data().to_vec()
                    }
                    None => vec![T::zero(); c],
                };
                Some(ss_table(w, th, &phis))
            }
            None => None,
        };
        let variant = ss.map(|s| s.2);
        let eval = move |ch: usize, phase: T| -> (GainEval<T>, Complex<T>) {
            match (&params, variant) {
                (Some(p), Some(v)) => (p[ch].eval(phase, v), p[ch].rotation(v)),
                _ => {
                    let (s, c) = phase.sin_cos();
                    let ev = GainEval {
                        g: T::lit(0.5) * (T::one() + c),
                        d_phase: -T::lit(0.5) * s,
                        d_w: [T::zero(); SS_TERMS],
                        d_theta: [T::zero(); SS_TERMS],
                    };
                    (ev, Complex::new(T::one(), T::zero()))
                }
            }
        };
        let count = params_len(ss.is_some(), self, ss.map(|s| s.0))?;
        let (c, plane) = channel_map(xv.shape(), count)?;
        let mut out = xv.clone();
        for (i, z) in out.data_mut().iter_mut().enumerate() {
            let (ev, rot) = eval((i / plane) % c, phase_of(*z));
            *z *= rot.scale(ev.g);
        }
        if self.tracking() {
            let mut bits: Vec<u8> = xv.data().iter().map(|z| (z.re == T::zero() && z.im == T::zero()) as u8).collect();
            if let Some((w, _, _)) = ss {
                bits.extend(self.real(w)?.data().iter().map(|&v| (sign(v) + T::one()).as_f64() as u8));
            }
            self.mix_branches(bits);
        }
        let mut inputs = vec![x];
        if let Some((w, th, _)) = ss {
            inputs.extend([w, th]);
        }
        inputs.extend(phi);
        let has_ss = ss.is_some();
        let has_phi = phi.is_some();
        Ok(self.push(
            out,
            inputs,
            Box::new(move |g, inp, out| {
                let g = g.as_complex()?;
                let xv = inp[0].as_complex()?;
                let ov = out.as_complex()?;
                let mut dx = g.clone();
                let mut dw = vec![T::zero(); c * SS_TERMS];
                let mut dth = vec![T::zero(); c * SS_TERMS];
                let mut dphi = vec![T::zero(); c];
                let zero = Complex::new(T::zero(), T::zero());
                for (i, dz) in dx.data_mut().iter_mut().enumerate() {
                    let a = xv.data()[i];
                    let cv = g.data()[i];
                    let r2 = a.norm_sqr();
                    if r2 == T::zero() {
                        *dz = zero;
                        continue;
                    }
                    let ch = (i / plane) % c;
                    let (ev, rot) = eval(ch, phase_of(a));
                    // ∂∠a/∂a_R = −a_I/r², ∂∠a/∂a_I = a_R/r².
                    let ra = rot * a;
                    let j_re = ra.scale(-ev.d_phase * a.im / r2) + rot.scale(ev.g);
                    let j_im = ra.scale(ev.d_phase * a.re / r2) + rot * Complex::new(T::zero(), ev.g);
                    *dz = pullback(cv, j_re, j_im);
                    if has_ss {
                        for p in 0..SS_TERMS {
                            dw[ch * SS_TERMS + p] += real_partial(cv, ra.scale(ev.d_w[p]));
                            dth[ch * SS_TERMS + p] += real_partial(cv, ra.scale(ev.d_theta[p]));
                        }
                    }
                    if has_phi {
                        dphi[ch] += real_partial(cv, Complex::new(T::zero(), T::one()) * ov.data()[i]);
                    }
                }
                let mut grads = vec![Some(AnyTensor::Complex(dx))];
                if has_ss {
                    grads.push(Some(AnyTensor::Real(Array::new(&[c, SS_TERMS], dw)?)));
                    grads.push(Some(AnyTensor::Real(Array::new(&[c, SS_TERMS], dth)?)));
                }
                if has_phi {
                    grads.push(Some(AnyTensor::Real(Array::new(&[c], dphi)?)));
                }
                Ok(grads)
            }),
        ))
    }
}

fn params_len<T: Real>(has_ss: bool, tape: &Tape<T>, w: Option<Var>) -> Result<usize> {
    match (has_ss, w) {
        (true, Some(w)) => Ok(tape.real(w)?.len() / SS_TERMS),
        _ => Ok(1),
    }
}

fn ss_table<T: Real>(w: &RTensor<T>, th: &RTensor<T>, phi: &[T]) -> Vec<SsParams<T>> {
    (0..phi.len())
        .map(|ch| {
            let mut p = SsParams { w: [T::zero(); SS_TERMS], theta: [T::zero(); SS_TERMS], phi: phi[ch] };
            p.w.copy_from_slice(&w.data()[ch * SS_TERMS..(ch + 1) * SS_TERMS]);
            p.theta.copy_from_slice(&th.data()[ch * SS_TERMS..(ch + 1) * SS_TERMS]);
            p
        })
        .collect()
}

/// A per-channel activation layer with its trainable parameters.
#[derive(Clone, Debug)]
pub struct Activation {
    pub kind: ActivationKind,
    pub channels: usize,
    params: Vec<ParamId>,
}

impl Activation {
    /// Registers parameters under `name`: `beta_r`/`beta_i` for ℂPReLU,
    /// `w`/`theta` (and `phi` for PC-SS) for the sinusoid family.
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, kind: ActivationKind, channels: usize) -> Self {
        let params = match kind {
            ActivationKind::CPRelu => vec![
                store.add(format!("{name}.beta_r"), RTensor::full(&[channels], T::lit(CPRELU_INIT))),
                store.add(format!("{name}.beta_i"), RTensor::full(&[channels], T::lit(CPRELU_INIT))),
            ],
            ActivationKind::PcSs | ActivationKind::PpSs | ActivationKind::TipSs => {
                let init = SsParams::<T>::default();
                let w = RTensor::from_fn(&[channels, SS_TERMS], |i| init.w[i % SS_TERMS]);
                let mut ids = vec![
                    store.add(format!("{name}.w"), w),
                    store.add(format!("{name}.theta"), RTensor::<T>::zeros(&[channels, SS_TERMS])),
                ];
                if kind == ActivationKind::PcSs {
                    ids.push(store.add(format!("{name}.phi"), RTensor::<T>::zeros(&[channels])));
                }
                ids
            }
            _ => Vec::new(),
        };
        Self { kind, channels, params }
    }

    pub fn param_ids(&self) -> &[ParamId] {
        &self.params
    }

    pub fn forward<T: Real>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let p: Vec<Var> = self.params.iter().map(|&id| cx.var(id)).collect();
        let t = &mut *cx.tape;
        match self.kind {
            ActivationKind::CRelu => t.crelu(x),
            ActivationKind::CPRelu => t.cprelu(x, p[0], p[1]),
            ActivationKind::ZRelu => t.zrelu(x),
            ActivationKind::Cardioid => t.cardioid(x),
            k => {
                let v = k.ss_variant().expect("sinusoid variant");
                t.sinusoid_gain(x, p[0], p[1], p.get(2).copied(), v)
            }
        }
    }
}
