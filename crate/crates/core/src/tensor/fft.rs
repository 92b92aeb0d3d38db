//! Unitary 2-D DFT over the last two dimensions.

use num_complex::Complex;
use rustfft::{FftDirection, FftPlanner};

use super::{CTensor, Real};
use crate::error::{Error, Result};

fn transform<T: Real>(a: &CTensor<T>, direction: FftDirection) -> Result<CTensor<T>> {
    let (batch, h, w) = a.spatial()?;
    if !h.is_power_of_two() || !w.is_power_of_two() {
        return Err(Error::UnsupportedSize(format!("fft2 needs power-of-two dims, got {h}x{w}")));
    }
    let mut planner = FftPlanner::<T>::new();
    let row_fft = planner.plan_fft(w, direction);
    let col_fft = planner.plan_fft(h, direction);
    let scale = T::one() / T::lit((h * w) as f64).sqrt();

    let mut out = a.clone();
    let mut column = vec![Complex::new(T::zero(), T::zero()); h];
    for plane in out.data_mut().chunks_exact_mut(h * w) {
        row_fft.process(plane);
        for x in 0..w {
            for (y, v) in column.iter_mut().enumerate() {
                *v = plane[y * w + x];
            }
            col_fft.process(&mut column);
            for (y, v) in column.iter().enumerate() {
                plane[y * w + x] = *v * scale;
            }
        }
    }
    debug_assert_eq!(out.len(), batch * h * w);
    Ok(out)
}

/// Forward unitary 2-D DFT (scaled by `1/√(HW)`).
pub fn fft2<T: Real>(a: &CTensor<T>) -> Result<CTensor<T>> {
    transform(a, FftDirection::Forward)
}

/// Inverse unitary 2-D DFT; exact adjoint and inverse of [`fft2`].
pub fn ifft2<T: Real>(a: &CTensor<T>) -> Result<CTensor<T>> {
    transform(a, FftDirection::Inverse)
}

fn roll<E: super::Elem>(a: &super::Array<E>, dy: usize, dx: usize) -> Result<super::Array<E>> {
    let (_, h, w) = a.spatial()?;
    let mut out = a.clone();
    for (src, dst) in a.data().chunks_exact(h * w).zip(out.data_mut().chunks_exact_mut(h * w)) {
        for y in 0..h {
            for x in 0..w {
                dst[((y + dy) % h) * w + (x + dx) % w] = src[y * w + x];
            }
        }
    }
    Ok(out)
}

/// Moves the zero-frequency bin to the centre `(H/2, W/2)`.
pub fn fftshift<E: super::Elem>(a: &super::Array<E>) -> Result<super::Array<E>> {
    let (_, h, w) = a.spatial()?;
    roll(a, h / 2, w / 2)
}

/// Inverse of [`fftshift`].
pub fn ifftshift<E: super::Elem>(a: &super::Array<E>) -> Result<super::Array<E>> {
    let (_, h, w) = a.spatial()?;
    roll(a, h - h / 2, w - w / 2)
}
