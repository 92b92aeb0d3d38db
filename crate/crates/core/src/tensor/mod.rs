//! Dense real and complex n-dimensional arrays.
//!
//! A single generic [`Array`] backs both element kinds: [`RTensor`] stores
//! plain floats and [`CTensor`] stores `Complex<T>`, which is laid out as
//! interleaved `(re, im)` pairs in row-major order. Feature maps use the
//! `[batch, channel, height, width]` convention; spatial operations act on
//! the last two dimensions.

mod fft;
pub(crate) mod io;
mod resample;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_complex::Complex;
use num_traits::{Float, FloatConst, Num, NumAssign};

use crate::error::{Error, Result};

pub use fft::{fft2, fftshift, ifft2, ifftshift};
pub use io::{decode_cvt, encode_cvt, read_cvt, write_cvt, CVT_MAGIC};
pub use resample::{avg_pool2, avg_pool2_backward, crop, pad_zero, upsample_bilinear, upsample_bilinear_backward};

/// Floating-point scalar used throughout (implemented for `f32` and `f64`).
pub trait Real:
    Float
    + FloatConst
    + NumAssign
    + Elem<Real = Self>
    + rustfft::FftNum
    + Default
    + Debug
    + Display
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `c = alpha * a(m×k) · b(k×n) + beta * c`, all row-major with
    /// optional transposition expressed through strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_trans: bool,
        b: &[Self],
        b_trans: bool,
        beta: Self,
        c: &mut [Self],
    );
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            #[inline]
            fn lit(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_trans: bool,
                b: &[Self],
                b_trans: bool,
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                if m == 0 || n == 0 {
                    return;
                }
                let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
                let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
                // SAFETY: the asserts above guarantee every strided access
                // stays inside the three slices.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// Element of an [`Array`]: a real scalar or a complex number over one.
pub trait Elem: Copy + Default + Debug + Num + AddAssign + SubAssign + Send + Sync + 'static {
    type Real: Real;
    const KIND: &'static str;

    fn scale(self, s: Self::Real) -> Self;
    fn modulus(self) -> Self::Real;
    fn finite(self) -> bool;
    fn conj(self) -> Self;
}

macro_rules! impl_real_elem {
    ($t:ty) => {
        impl Elem for $t {
            type Real = $t;
            const KIND: &'static str = "real";

            #[inline]
            fn scale(self, s: $t) -> $t {
                self * s
            }

            #[inline]
            fn modulus(self) -> $t {
                self.abs()
            }

            #[inline]
            fn finite(self) -> bool {
                self.is_finite()
            }

            #[inline]
            fn conj(self) -> Self {
                self
            }
        }
    };
}

impl_real_elem!(f32);
impl_real_elem!(f64);

impl<T: Real> Elem for Complex<T> {
    type Real = T;
    const KIND: &'static str = "complex";

    #[inline]
    fn scale(self, s: T) -> Self {
        Complex::new(self.re * s, self.im * s)
    }

    #[inline]
    fn modulus(self) -> T {
        self.norm()
    }

    #[inline]
    fn finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    #[inline]
    fn conj(self) -> Self {
        Complex::conj(&self)
    }
}

/// Row-major dense array.
#[derive(Clone, Debug, PartialEq)]
pub struct Array<E> {
    shape: Vec<usize>,
    data: Vec<E>,
}

pub type RTensor<T> = Array<T>;
pub type CTensor<T> = Array<Complex<T>>;

fn volume(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<E: Elem> Array<E> {
    pub fn new(shape: &[usize], data: Vec<E>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::dim(format!("zero-sized dimension in {shape:?}")));
        }
        if volume(shape) != data.len() {
            return Err(Error::dim(format!(
                "shape {shape:?} needs {} elements, got {}",
                volume(shape),
                data.len()
            )));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, E::zero())
    }

    pub fn full(shape: &[usize], value: E) -> Self {
        Self { shape: shape.to_vec(), data: vec![value; volume(shape)] }
    }

    pub fn scalar(value: E) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> E) -> Self {
        let data = (0..volume(shape)).map(&mut f).collect();
        Self { shape: shape.to_vec(), data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<E> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Returns the single element of a one-element array.
    pub fn item(&self) -> Result<E> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::dim(format!("item() on shape {:?}", self.shape)))
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if volume(shape) != self.data.len() {
            return Err(Error::dim(format!("cannot reshape {:?} into {shape:?}", self.shape)));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// `(batch-like prefix, height, width)` for spatial operations.
    pub fn spatial(&self) -> Result<(usize, usize, usize)> {
        let n = self.shape.len();
        if n < 2 {
            return Err(Error::dim(format!("expected at least 2 dims, got {:?}", self.shape)));
        }
        let (h, w) = (self.shape[n - 2], self.shape[n - 1]);
        Ok((self.data.len() / (h * w), h, w))
    }

    /// `(n, c, h, w)` of a feature map.
    pub fn nchw(&self) -> Result<(usize, usize, usize, usize)> {
        match *self.shape.as_slice() {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::dim(format!("expected [N, C, H, W], got {:?}", self.shape))),
        }
    }

    pub fn map(&self, f: impl Fn(E) -> E) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn map_to<F: Elem>(&self, f: impl Fn(E) -> F) -> Array<F> {
        Array { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(E, E) -> E) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { shape: self.shape.clone(), data })
    }

    pub fn check_same_shape<F>(&self, other: &Array<F>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dim(format!("shape mismatch {:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    /// Elementwise product (complex multiplication for complex arrays).
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn mul_scalar(&self, s: E) -> Self {
        self.map(|a| a * s)
    }

    pub fn add_scalar(&self, s: E) -> Self {
        self.map(|a| a + s)
    }

    pub fn scale(&self, s: E::Real) -> Self {
        self.map(|a| a.scale(s))
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> E {
        self.data.iter().fold(E::zero(), |acc, &x| acc + x)
    }

    pub fn norm_l2(&self) -> E::Real {
        self.data
            .iter()
            .map(|x| {
                let m = x.modulus();
                m * m
            })
            .sum::<E::Real>()
            .sqrt()
    }

    pub fn max_abs(&self) -> E::Real {
        self.data.iter().map(|x| x.modulus()).fold(<E::Real as num_traits::Zero>::zero(), |a, b| a.max(b))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.finite())
    }

    /// Concatenates `[N, C_i, H, W]` arrays along the channel axis.
    pub fn concat_channels(parts: &[&Self]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::dim("concat of zero arrays"))?;
        let (n, _, h, w) = first.nchw()?;
        let mut total_c = 0;
        for p in parts {
            let (pn, pc, ph, pw) = p.nchw()?;
            if (pn, ph, pw) != (n, h, w) {
                return Err(Error::dim(format!("concat mismatch {:?} vs {:?}", first.shape, p.shape)));
            }
            total_c += pc;
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * total_c * plane);
        for b in 0..n {
            for p in parts {
                let c = p.shape[1];
                data.extend_from_slice(&p.data[b * c * plane..(b + 1) * c * plane]);
            }
        }
        Ok(Self { shape: vec![n, total_c, h, w], data })
    }

    /// Inverse of [`Array::concat_channels`] for the given channel counts.
    pub fn split_channels(&self, counts: &[usize]) -> Result<Vec<Self>> {
        let (n, c, h, w) = self.nchw()?;
        if counts.iter().sum::<usize>() != c {
            return Err(Error::dim(format!("split {counts:?} of {c} channels")));
        }
        let plane = h * w;
        let mut out: Vec<Self> = counts.iter().map(|&k| Self::zeros(&[n, k, h, w])).collect();
        for b in 0..n {
            let mut offset = 0;
            for (k, part) in counts.iter().zip(out.iter_mut()) {
                let src = &self.data[(b * c + offset) * plane..(b * c + offset + k) * plane];
                part.data[b * k * plane..(b + 1) * k * plane].copy_from_slice(src);
                offset += k;
            }
        }
        Ok(out)
    }
}

impl<T: Real> Array<T> {
    pub fn cast<U: Real>(&self) -> Array<U> {
        Array { shape: self.shape.clone(), data: self.data.iter().map(|x| U::lit(x.as_f64())).collect() }
    }

    pub fn to_complex(&self) -> CTensor<T> {
        self.map_to(|x| Complex::new(x, T::zero()))
    }

    pub fn max(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn mean(&self) -> T {
        self.sum() / T::lit(self.data.len() as f64)
    }
}

impl<T: Real> Array<Complex<T>> {
    pub fn from_parts(re: &RTensor<T>, im: &RTensor<T>) -> Result<Self> {
        re.check_same_shape(im)?;
        Ok(Array {
            shape: re.shape.clone(),
            data: re.data.iter().zip(&im.data).map(|(&r, &i)| Complex::new(r, i)).collect(),
        })
    }

    pub fn cast<U: Real>(&self) -> CTensor<U> {
        self.map_to(|z| Complex::new(U::lit(z.re.as_f64()), U::lit(z.im.as_f64())))
    }

    pub fn re(&self) -> RTensor<T> {
        self.map_to(|z| z.re)
    }

    pub fn im(&self) -> RTensor<T> {
        self.map_to(|z| z.im)
    }

    /// `|a| = sqrt(a_R² + a_I²)`.
    pub fn magnitude(&self) -> RTensor<T> {
        self.map_to(|z| z.norm())
    }

    /// `∠a = atan2(a_I, a_R)` in `(−π, π]`, with `∠0 = 0`.
    pub fn phase(&self) -> RTensor<T> {
        self.map_to(phase_of)
    }

    pub fn conj(&self) -> Self {
        self.map(|z| Complex::conj(&z))
    }

    /// Hermitian inner product `⟨a, b⟩ = Σ conj(a)·b`.
    pub fn inner(&self, other: &Self) -> Result<Complex<T>> {
        self.check_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + a.conj() * b))
    }
}

/// Phase angle in `(−π, π]`; the phase of zero is defined as zero.
#[inline]
pub fn phase_of<T: Real>(z: Complex<T>) -> T {
    if z.re == T::zero() && z.im == T::zero() {
        T::zero()
    } else {
        let p = z.im.atan2(z.re);
        // atan2 returns −π for (negative, −0.0); fold it onto +π.
        if p == -T::PI() {
            T::PI()
        } else {
            p
        }
    }
}

/// A tensor of either element kind.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyTensor<T: Real> {
    Real(RTensor<T>),
    Complex(CTensor<T>),
}

impl<T: Real> AnyTensor<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            AnyTensor::Real(_) => "real",
            AnyTensor::Complex(_) => "complex",
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            AnyTensor::Real(t) => t.shape(),
            AnyTensor::Complex(t) => t.shape(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            AnyTensor::Real(t) => t.len(),
            AnyTensor::Complex(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of real degrees of freedom.
    pub fn real_len(&self) -> usize {
        match self {
            AnyTensor::Real(t) => t.len(),
            AnyTensor::Complex(t) => 2 * t.len(),
        }
    }

    pub fn as_real(&self) -> Result<&RTensor<T>> {
        match self {
            AnyTensor::Real(t) => Ok(t),
            other => Err(Error::Kind { expected: "real", found: other.kind() }),
        }
    }

    pub fn as_complex(&self) -> Result<&CTensor<T>> {
        match self {
            AnyTensor::Complex(t) => Ok(t),
            other => Err(Error::Kind { expected: "complex", found: other.kind() }),
        }
    }

    pub fn as_real_mut(&mut self) -> Result<&mut RTensor<T>> {
        match self {
            AnyTensor::Real(t) => Ok(t),
            other => Err(Error::Kind { expected: "real", found: other.kind() }),
        }
    }

    pub fn as_complex_mut(&mut self) -> Result<&mut CTensor<T>> {
        match self {
            AnyTensor::Complex(t) => Ok(t),
            other => Err(Error::Kind { expected: "complex", found: other.kind() }),
        }
    }

    /// Real component `i` of the flattened `(re, im)` view.
    pub fn component(&self, i: usize) -> T {
        match self {
            AnyTensor::Real(t) => t.data()[i],
            AnyTensor::Complex(t) => {
                let z = t.data()[i / 2];
                if i.is_multiple_of(2) {
                    z.re
                } else {
                    z.im
                }
            }
        }
    }

    pub fn set_component(&mut self, i: usize, v: T) {
        match self {
            AnyTensor::Real(t) => t.data_mut()[i] = v,
            AnyTensor::Complex(t) => {
                let z = &mut t.data_mut()[i / 2];
                if i.is_multiple_of(2) {
                    z.re = v;
                } else {
                    z.im = v;
                }
            }
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            AnyTensor::Real(t) => AnyTensor::Real(RTensor::zeros(t.shape())),
            AnyTensor::Complex(t) => AnyTensor::Complex(CTensor::zeros(t.shape())),
        }
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        match (self, other) {
            (AnyTensor::Real(a), AnyTensor::Real(b)) => a.add_assign(b),
            (AnyTensor::Complex(a), AnyTensor::Complex(b)) => a.add_assign(b),
            (a, b) => Err(Error::Kind { expected: a.kind(), found: b.kind() }),
        }
    }

    pub fn all_finite(&self) -> bool {
        match self {
            AnyTensor::Real(t) => t.all_finite(),
            AnyTensor::Complex(t) => t.all_finite(),
        }
    }

    pub fn max_abs_component(&self) -> T {
        match self {
            AnyTensor::Real(t) => t.max_abs(),
            AnyTensor::Complex(t) => t.data().iter().fold(T::zero(), |m, z| m.max(z.re.abs()).max(z.im.abs())),
        }
    }

    pub fn cast<U: Real>(&self) -> AnyTensor<U> {
        match self {
            AnyTensor::Real(t) => AnyTensor::Real(t.cast()),
            AnyTensor::Complex(t) => AnyTensor::Complex(t.cast()),
        }
    }
}

impl<T: Real> From<RTensor<T>> for AnyTensor<T> {
    fn from(t: RTensor<T>) -> Self {
        AnyTensor::Real(t)
    }
}

impl<T: Real> From<CTensor<T>> for AnyTensor<T> {
    fn from(t: CTensor<T>) -> Self {
        AnyTensor::Complex(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn complex_elementwise_algebra() {
        let a = CTensor::new(&[1], vec![c(1.0, 1.0)]).unwrap();
        let b = CTensor::new(&[1], vec![c(2.0, -1.0)]).unwrap();
        assert_eq!(a.mul(&b).unwrap().data()[0], c(3.0, 1.0));

        let z = CTensor::new(&[2], vec![c(0.3, -2.0), c(-1.5, 4.0)]).unwrap();
        assert_eq!(z.add(&CTensor::zeros(&[2])).unwrap(), z);
        assert_eq!(z.mul(&CTensor::full(&[2], c(1.0, 0.0))).unwrap(), z);
        assert!(matches!(z.add(&CTensor::zeros(&[3])), Err(Error::Dimension(_))));
    }

    #[test]
    fn magnitude_phase_conj() {
        let z = CTensor::new(&[4], vec![c(3.0, 4.0), c(0.0, 1.0), c(0.0, 0.0), c(-1.0, -0.0)]).unwrap();
        assert_eq!(z.magnitude().data()[0], 5.0);
        let p = z.phase();
        assert!((p.data()[1] - PI / 2.0).abs() < 1e-15);
        assert_eq!(p.data()[2], 0.0);
        assert_eq!(p.data()[3], PI);
        assert_eq!(z.conj().conj(), z);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(RTensor::<f32>::new(&[2, 2], vec![0.0; 3]).is_err());
        assert!(RTensor::<f32>::new(&[0, 2], vec![]).is_err());
    }

    #[test]
    fn concat_split_inverse() {
        let a = RTensor::<f64>::from_fn(&[2, 1, 2, 2], |i| i as f64);
        let b = RTensor::<f64>::from_fn(&[2, 3, 2, 2], |i| -(i as f64));
        let cat = RTensor::concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape(), &[2, 4, 2, 2]);
        assert_eq!(cat.data()[4], -0.0);
        assert_eq!(cat.data()[16], 4.0);
        let parts = cat.split_channels(&[1, 3]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn gemm_with_transposes() {
        // a = [[1,2,3],[4,5,6]], b = [[1,0],[0,1],[1,1]]
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0f64, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut c = [0.0; 4];
        f64::gemm(2, 3, 2, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);
        // aᵀ stored as 3×2
        let at = [1.0f64, 4.0, 2.0, 5.0, 3.0, 6.0];
        let mut c2 = [1.0; 4];
        f64::gemm(2, 3, 2, &at, true, &b, false, 1.0, &mut c2);
        assert_eq!(c2, [5.0, 6.0, 11.0, 12.0]);
    }
}
