//! Pooling, bilinear upsampling, zero padding and cropping on the last two
//! dimensions. Complex arrays are handled per component implicitly because
//! every operation is a real-weighted linear combination.

use num_traits::One;

use super::{Array, Elem, Real};
use crate::error::{Error, Result};

fn check_factor(factor: usize) -> Result<()> {
    if factor == 0 || !factor.is_power_of_two() {
        return Err(Error::dim(format!("resampling factor must be a power of two, got {factor}")));
    }
    Ok(())
}

fn with_spatial<E: Elem>(a: &Array<E>, h: usize, w: usize) -> Vec<usize> {
    let mut s = a.shape().to_vec();
    let n = s.len();
    s[n - 2] = h;
    s[n - 1] = w;
    s
}

/// Block-mean pooling by `factor` in both spatial directions.
pub fn avg_pool2<E: Elem>(a: &Array<E>, factor: usize) -> Result<Array<E>> {
    check_factor(factor)?;
    let (_, h, w) = a.spatial()?;
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::dim(format!("{h}x{w} not divisible by pool factor {factor}")));
    }
    let (oh, ow) = (h / factor, w / factor);
    let inv = E::Real::one() / E::Real::lit((factor * factor) as f64);
    let mut out: Array<E> = Array::zeros(&with_spatial(a, oh, ow));
    for (src, dst) in a.data().chunks_exact(h * w).zip(out.data_mut().chunks_exact_mut(oh * ow)) {
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            let orow = &mut dst[(y / factor) * ow..(y / factor + 1) * ow];
            for (x, &v) in row.iter().enumerate() {
                orow[x / factor] += v;
            }
        }
        for v in dst.iter_mut() {
            *v = v.scale(inv);
        }
    }
    Ok(out)
}

/// Adjoint of [`avg_pool2`]: spreads each cotangent uniformly over its block.
pub fn avg_pool2_backward<E: Elem>(grad: &Array<E>, factor: usize, input_shape: &[usize]) -> Result<Array<E>> {
    let mut out = Array::zeros(input_shape);
    let (_, h, w) = out.spatial()?;
    let (_, oh, ow) = grad.spatial()?;
    if oh * factor != h || ow * factor != w {
        return Err(Error::dim("pool backward shape mismatch"));
    }
    let inv = E::Real::one() / E::Real::lit((factor * factor) as f64);
    for (g, dst) in grad.data().chunks_exact(oh * ow).zip(out.data_mut().chunks_exact_mut(h * w)) {
        for y in 0..h {
            for x in 0..w {
                dst[y * w + x] = g[(y / factor) * ow + x / factor].scale(inv);
            }
        }
    }
    Ok(out)
}

/// Interpolation taps `(i0, i1, w0, w1)` for half-pixel-centred bilinear
/// upsampling of an axis of length `n` by `factor`.
fn taps<T: Real>(n: usize, factor: usize) -> Vec<(usize, usize, T, T)> {
    (0..n * factor)
        .map(|o| {
            let src = ((o as f64 + 0.5) / factor as f64 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            let t = if i1 == i0 { 0.0 } else { src - i0 as f64 };
            (i0, i1, T::lit(1.0 - t), T::lit(t))
        })
        .collect()
}

/// Separable bilinear upsampling by `factor` (edge-clamped, half-pixel centres).
pub fn upsample_bilinear<E: Elem>(a: &Array<E>, factor: usize) -> Result<Array<E>> {
    check_factor(factor)?;
    let (_, h, w) = a.spatial()?;
    let (oh, ow) = (h * factor, w * factor);
    let ty = taps::<E::Real>(h, factor);
    let tx = taps::<E::Real>(w, factor);
    let mut out: Array<E> = Array::zeros(&with_spatial(a, oh, ow));
    let mut rows = vec![E::zero(); h * ow];
    for (src, dst) in a.data().chunks_exact(h * w).zip(out.data_mut().chunks_exact_mut(oh * ow)) {
        for y in 0..h {
            for (x, &(i0, i1, w0, w1)) in tx.iter().enumerate() {
                rows[y * ow + x] = src[y * w + i0].scale(w0) + src[y * w + i1].scale(w1);
            }
        }
        for (y, &(i0, i1, w0, w1)) in ty.iter().enumerate() {
            for x in 0..ow {
                dst[y * ow + x] = rows[i0 * ow + x].scale(w0) + rows[i1 * ow + x].scale(w1);
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`upsample_bilinear`].
pub fn upsample_bilinear_backward<E: Elem>(grad: &Array<E>, factor: usize, input_shape: &[usize]) -> Result<Array<E>> {
    let mut out = Array::zeros(input_shape);
    let (_, h, w) = out.spatial()?;
    let (_, oh, ow) = grad.spatial()?;
    if oh != h * factor || ow != w * factor {
        return Err(Error::dim("upsample backward shape mismatch"));
    }
    let ty = taps::<E::Real>(h, factor);
    let tx = taps::<E::Real>(w, factor);
    let mut rows = vec![E::zero(); h * ow];
    for (g, dst) in grad.data().chunks_exact(oh * ow).zip(out.data_mut().chunks_exact_mut(h * w)) {
        rows.iter_mut().for_each(|v| *v = E::zero());
        for (y, &(i0, i1, w0, w1)) in ty.iter().enumerate() {
            for x in 0..ow {
                let v = g[y * ow + x];
                rows[i0 * ow + x] += v.scale(w0);
                rows[i1 * ow + x] += v.scale(w1);
            }
        }
        for y in 0..h {
            for (x, &(i0, i1, w0, w1)) in tx.iter().enumerate() {
                let v = rows[y * ow + x];
                dst[y * w + i0] += v.scale(w0);
                dst[y * w + i1] += v.scale(w1);
            }
        }
    }
    Ok(out)
}

/// Zero padding of the last two dims by `(top, bottom, left, right)`.
pub fn pad_zero<E: Elem>(a: &Array<E>, top: usize, bottom: usize, left: usize, right: usize) -> Result<Array<E>> {
    let (_, h, w) = a.spatial()?;
    let (oh, ow) = (h + top + bottom, w + left + right);
    let mut out: Array<E> = Array::zeros(&with_spatial(a, oh, ow));
    for (src, dst) in a.data().chunks_exact(h * w).zip(out.data_mut().chunks_exact_mut(oh * ow)) {
        for y in 0..h {
            dst[(y + top) * ow + left..(y + top) * ow + left + w].copy_from_slice(&src[y * w..(y + 1) * w]);
        }
    }
    Ok(out)
}

/// Crops an `out_h × out_w` window starting at `(top, left)`.
pub fn crop<E: Elem>(a: &Array<E>, top: usize, left: usize, out_h: usize, out_w: usize) -> Result<Array<E>> {
    let (_, h, w) = a.spatial()?;
    if top + out_h > h || left + out_w > w || out_h == 0 || out_w == 0 {
        return Err(Error::dim(format!("crop {out_h}x{out_w}@({top},{left}) outside {h}x{w}")));
    }
    let mut out = Array::zeros(&with_spatial(a, out_h, out_w));
    for (src, dst) in a.data().chunks_exact(h * w).zip(out.data_mut().chunks_exact_mut(out_h * out_w)) {
        for y in 0..out_h {
            dst[y * out_w..(y + 1) * out_w].copy_from_slice(&src[(y + top) * w + left..(y + top) * w + left + out_w]);
        }
    }
    Ok(out)
}
