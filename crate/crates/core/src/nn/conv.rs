use num_complex::Complex;
use rand::Rng;

use super::{Ctx, ParamId, ParamStore};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{AnyTensor, Array, CTensor, Real, RTensor};

/// Output size and leading pad of a "same" convolution.
pub fn conv_output_size(size: usize, k: usize, stride: usize) -> (usize, usize) {
    let out = size.div_ceil(stride);
    let total = ((out - 1) * stride + k).saturating_sub(size);
    (out, total / 2)
}

/// Geometry of one planar real convolution `[N, C, H, W] → [N, O, OH, OW]`.
#[derive(Clone, Copy, Debug)]
struct Geom {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    k: usize,
    stride: usize,
    oh: usize,
    ow: usize,
    pt: usize,
    pl: usize,
}

impl Geom {
    fn new(x: &[usize], wshape: &[usize], stride: usize) -> Result<Self> {
        if x.len() != 4 || wshape.len() != 4 {
            return Err(Error::dim(format!("conv2d expects 4-D input and kernel, got {x:?} and {wshape:?}")));
        }
        let (n, c, h, w) = (x[0], x[1], x[2], x[3]);
        let (o, ci, k) = (wshape[0], wshape[1], wshape[2]);
        if wshape[3] != k {
            return Err(Error::dim(format!("kernel must be square, got {wshape:?}")));
        }
        if ci != c {
            return Err(Error::dim(format!("kernel expects {ci} input channels, input has {c}")));
        }
        if h == 0 || w == 0 || k == 0 {
            return Err(Error::dim(format!("empty input {h}x{w} or kernel {k}x{k}")));
        }
        if stride != 1 && stride != 2 {
            return Err(Error::contract(format!("stride must be 1 or 2, got {stride}")));
        }
        let (oh, pt) = conv_output_size(h, k, stride);
        let (ow, pl) = conv_output_size(w, k, stride);
        Ok(Self { n, c, h, w, o, k, stride, oh, ow, pt, pl })
    }

    fn direct(&self) -> bool {
        self.k == 1 && self.stride == 1
    }

    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    fn in_plane(&self) -> usize {
        self.c * self.h * self.w
    }

    fn out_plane(&self) -> usize {
        self.o * self.cols()
    }

    /// Taps of output row `oy` (or column) for kernel offset `kk` that fall
    /// inside the image: `(first output, last output + 1)`.
    fn valid(&self, kk: usize, pad: usize, out: usize, size: usize) -> (usize, usize) {
        // Input index = o·stride + kk − pad must lie in [0, size).
        let lo = pad.saturating_sub(kk).div_ceil(self.stride);
        let hi_excl = if size + pad > kk { (size + pad - kk - 1) / self.stride + 1 } else { 0 };
        (lo.min(out), hi_excl.min(out).max(lo.min(out)))
    }

    fn im2col<T: Real>(&self, img: &[T], cols: &mut [T]) {
        let (k, s, ncol) = (self.k, self.stride, self.cols());
        for c in 0..self.c {
            let plane = &img[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..k {
                let (y0, y1) = self.valid(ky, self.pt, self.oh, self.h);
                for kx in 0..k {
                    let (x0, x1) = self.valid(kx, self.pl, self.ow, self.w);
                    let row = &mut cols[((c * k + ky) * k + kx) * ncol..][..ncol];
                    row.fill(T::zero());
                    for oy in y0..y1 {
                        let iy = oy * s + ky - self.pt;
                        let src = &plane[iy * self.w..];
                        let dst = &mut row[oy * self.ow..];
                        for ox in x0..x1 {
                            dst[ox] = src[ox * s + kx - self.pl];
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Real>(&self, cols: &[T], img: &mut [T]) {
        let (k, s, ncol) = (self.k, self.stride, self.cols());
        for c in 0..self.c {
            let plane = &mut img[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..k {
                let (y0, y1) = self.valid(ky, self.pt, self.oh, self.h);
                for kx in 0..k {
                    let (x0, x1) = self.valid(kx, self.pl, self.ow, self.w);
                    let row = &cols[((c * k + ky) * k + kx) * ncol..][..ncol];
                    for oy in y0..y1 {
                        let iy = oy * s + ky - self.pt;
                        let src = &row[oy * self.ow..];
                        let dst = &mut plane[iy * self.w..];
                        for ox in x0..x1 {
                            dst[ox * s + kx - self.pl] += src[ox];
                        }
                    }
                }
            }
        }
    }

    fn forward<T: Real>(&self, x: &[T], wm: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n * self.out_plane()];
        let mut cols = if self.direct() { Vec::new() } else { vec![T::zero(); self.rows() * self.cols()] };
        for b in 0..self.n {
            let img = &x[b * self.in_plane()..(b + 1) * self.in_plane()];
            let colsr: &[T] = if self.direct() {
                img
            } else {
                self.im2col(img, &mut cols);
                &cols
            };
            let dst = &mut out[b * self.out_plane()..(b + 1) * self.out_plane()];
            T::gemm(self.o, self.rows(), self.cols(), wm, false, colsr, false, T::zero(), dst);
        }
        out
    }

    /// Returns `(dx, dw)` for output cotangent `dy`.
    fn backward<T: Real>(&self, x: &[T], wm: &[T], dy: &[T]) -> (Vec<T>, Vec<T>) {
        let mut dx = vec![T::zero(); self.n * self.in_plane()];
        let mut dw = vec![T::zero(); self.o * self.rows()];
        let mut cols = if self.direct() { Vec::new() } else { vec![T::zero(); self.rows() * self.cols()] };
        let mut dcols = vec![T::zero(); if self.direct() { 0 } else { self.rows() * self.cols() }];
        for b in 0..self.n {
            let img = &x[b * self.in_plane()..(b + 1) * self.in_plane()];
            let g = &dy[b * self.out_plane()..(b + 1) * self.out_plane()];
            let colsr: &[T] = if self.direct() {
                img
            } else {
                self.im2col(img, &mut cols);
                &cols
            };
            T::gemm(self.o, self.cols(), self.rows(), g, false, colsr, true, T::one(), &mut dw);
            let dimg = &mut dx[b * self.in_plane()..(b + 1) * self.in_plane()];
            if self.direct() {
                T::gemm(self.rows(), self.o, self.cols(), wm, true, g, false, T::zero(), dimg);
            } else {
                T::gemm(self.rows(), self.o, self.cols(), wm, true, g, false, T::zero(), &mut dcols);
                self.col2im(&dcols, dimg);
            }
        }
        (dx, dw)
    }
}

fn bias_check<E: crate::tensor::Elem>(b: Option<&Array<E>>, o: usize) -> Result<()> {
    match b {
        Some(b) if b.shape() != [o] => Err(Error::dim(format!("bias {:?} for {o} output channels", b.shape()))),
        _ => Ok(()),
    }
}

fn add_bias<E: crate::tensor::Elem>(out: &mut [E], b: &[E], plane: usize) {
    for (i, chunk) in out.chunks_exact_mut(plane).enumerate() {
        let v = b[i % b.len()];
        chunk.iter_mut().for_each(|x| *x += v);
    }
}

fn bias_grad<E: crate::tensor::Elem>(g: &[E], o: usize, plane: usize) -> Vec<E> {
    let mut db = vec![E::zero(); o];
    for (i, chunk) in g.chunks_exact(plane).enumerate() {
        db[i % o] = chunk.iter().fold(db[i % o], |s, &v| s + v);
    }
    db
}

/// Real "same" cross-correlation.
pub fn conv2d<T: Real>(x: &RTensor<T>, w: &RTensor<T>, b: Option<&RTensor<T>>, stride: usize) -> Result<RTensor<T>> {
    let g = Geom::new(x.shape(), w.shape(), stride)?;
    bias_check(b, g.o)?;
    let mut out = g.forward(x.data(), w.data());
    if let Some(b) = b {
        add_bias(&mut out, b.data(), g.cols());
    }
    Array::new(&[g.n, g.o, g.oh, g.ow], out)
}

/// Stacks `[N, C, H, W]` complex planes as `[N, 2C, H, W]` real: real
/// parts first, then imaginary parts.
fn stack_planes<T: Real>(x: &CTensor<T>, n: usize, plane: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(2 * x.len());
    for img in x.data().chunks_exact(plane) {
        out.extend(img.iter().map(|z| z.re));
        out.extend(img.iter().map(|z| z.im));
    }
    debug_assert_eq!(out.len(), 2 * n * plane);
    out
}

fn unstack_planes<T: Real>(s: &[T], plane: usize) -> Vec<Complex<T>> {
    let mut out = Vec::with_capacity(s.len() / 2);
    for img in s.chunks_exact(2 * plane) {
        let (re, im) = img.split_at(plane);
        out.extend(re.iter().zip(im).map(|(&r, &i)| Complex::new(r, i)));
    }
    out
}

/// Real block form `[[W_R, −W_I], [W_I, W_R]]` of a complex kernel, laid out
/// as a `[2O, 2C·k·k]` matrix acting on stacked planes.
fn block_weight<T: Real>(w: &CTensor<T>) -> Vec<T> {
    let (o, c, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let kk = k * k;
    let row = 2 * c * kk;
    let mut m = vec![T::zero(); 2 * o * row];
    for oc in 0..o {
        for ic in 0..c {
            for t in 0..kk {
                let z = w.data()[(oc * c + ic) * kk + t];
                m[oc * row + ic * kk + t] = z.re;
                m[oc * row + (c + ic) * kk + t] = -z.im;
                m[(o + oc) * row + ic * kk + t] = z.im;
                m[(o + oc) * row + (c + ic) * kk + t] = z.re;
            }
        }
    }
    m
}

fn complex_geom(x: &[usize], w: &[usize], stride: usize) -> Result<(Geom, Geom)> {
    let g = Geom::new(x, w, stride)?;
    let stacked = Geom { c: 2 * g.c, o: 2 * g.o, ..g };
    Ok((g, stacked))
}

/// Complex "same" cross-correlation, computed as a single real convolution
/// on stacked planes: `A_R = W_R*F_R − W_I*F_I`, `A_I = W_I*F_R + W_R*F_I`.
pub fn complex_conv2d<T: Real>(
    x: &CTensor<T>,
    w: &CTensor<T>,
    b: Option<&CTensor<T>>,
    stride: usize,
) -> Result<CTensor<T>> {
    let (g, sg) = complex_geom(x.shape(), w.shape(), stride)?;
    bias_check(b, g.o)?;
    let xs = stack_planes(x, g.n, g.c * g.h * g.w);
    let ys = sg.forward(&xs, &block_weight(w));
    let mut out = unstack_planes(&ys, g.out_plane());
    if let Some(b) = b {
        add_bias(&mut out, b.data(), g.cols());
    }
    Array::new(&[g.n, g.o, g.oh, g.ow], out)
}

impl<T: Real> Tape<T> {
    /// Convolution of a real or complex input with a kernel of the same kind.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize) -> Result<Var> {
        let bv = b.map(|b| self.value(b));
        let out: AnyTensor<T> = match (self.value(x), self.value(w)) {
            (AnyTensor::Real(x), AnyTensor::Real(w)) => {
                let b = bv.map(|b| b.as_real()).transpose()?;
                conv2d(x, w, b, stride)?.into()
            }
            (AnyTensor::Complex(x), AnyTensor::Complex(w)) => {
                let b = bv.map(|b| b.as_complex()).transpose()?;
                complex_conv2d(x, w, b, stride)?.into()
            }
            (p, q) => return Err(Error::Kind { expected: p.kind(), found: q.kind() }),
        };
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(
            out,
            inputs,
            Box::new(move |gy, inp, _| {
                let mut grads = match (inp[0], inp[1], gy) {
                    (AnyTensor::Real(x), AnyTensor::Real(w), AnyTensor::Real(gy)) => {
                        let g = Geom::new(x.shape(), w.shape(), stride)?;
                        let (dx, dw) = g.backward(x.data(), w.data(), gy.data());
                        let mut v = vec![
                            Some(Array::new(x.shape(), dx)?.into()),
                            Some(Array::new(w.shape(), dw)?.into()),
                        ];
                        if inp.len() == 3 {
                            v.push(Some(Array::new(&[g.o], bias_grad(gy.data(), g.o, g.cols()))?.into()));
                        }
                        v
                    }
                    (AnyTensor::Complex(x), AnyTensor::Complex(w), AnyTensor::Complex(gy)) => {
                        let (g, sg) = complex_geom(x.shape(), w.shape(), stride)?;
                        let xs = stack_planes(x, g.n, g.c * g.h * g.w);
                        let gs = stack_planes(gy, g.n, g.out_plane());
                        let (dxs, dwb) = sg.backward(&xs, &block_weight(w), &gs);
                        let dx = unstack_planes(&dxs, g.c * g.h * g.w);
                        // Fold the block gradient back: dW_R = dB00 + dB11,
                        // dW_I = dB10 − dB01.
                        let kk = g.k * g.k;
                        let row = 2 * g.c * kk;
                        let mut dw = vec![Complex::new(T::zero(), T::zero()); w.len()];
                        for oc in 0..g.o {
                            for ic in 0..g.c {
                                for t in 0..kk {
                                    let b00 = dwb[oc * row + ic * kk + t];
                                    let b01 = dwb[oc * row + (g.c + ic) * kk + t];
                                    let b10 = dwb[(g.o + oc) * row + ic * kk + t];
                                    let b11 = dwb[(g.o + oc) * row + (g.c + ic) * kk + t];
                                    dw[(oc * g.c + ic) * kk + t] = Complex::new(b00 + b11, b10 - b01);
                                }
                            }
                        }
                        let mut v = vec![
                            Some(Array::new(x.shape(), dx)?.into()),
                            Some(Array::new(w.shape(), dw)?.into()),
                        ];
                        if inp.len() == 3 {
                            v.push(Some(Array::new(&[g.o], bias_grad(gy.data(), g.o, g.cols()))?.into()));
                        }
                        v
                    }
                    (p, q, _) => return Err(Error::Kind { expected: p.kind(), found: q.kind() }),
                };
                grads.truncate(inp.len());
                Ok(grads)
            }),
        ))
    }
}

/// Complex convolution layer with "same" padding.
#[derive(Clone, Debug)]
pub struct ComplexConv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub stride: usize,
}

impl ComplexConv2d {
    /// Registers `{name}.w` (and `{name}.b`) with Rayleigh magnitudes of
    /// scale `1/√(fan_in + fan_out)` and uniform phases.
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let sigma = 1.0 / (((in_ch + out_ch) * k * k) as f64).sqrt();
        let w = CTensor::from_fn(&[out_ch, in_ch, k, k], |_| {
            let u: f64 = rng.random::<f64>();
            let mag = sigma * (-2.0 * (1.0 - u).ln()).sqrt();
            let phase = std::f64::consts::PI * (1.0 - 2.0 * rng.random::<f64>());
            Complex::from_polar(T::lit(mag), T::lit(phase))
        });
        let weight = store.add(format!("{name}.w"), w);
        let bias = bias.then(|| store.add(format!("{name}.b"), CTensor::<T>::zeros(&[out_ch])));
        Self { weight, bias, in_ch, out_ch, k, stride }
    }

    pub fn forward<T: Real>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let (w, b) = (cx.var(self.weight), self.bias.map(|b| cx.var(b)));
        cx.tape.conv2d(x, w, b, self.stride)
    }
}

/// Real convolution layer with "same" padding (discriminator).
#[derive(Clone, Debug)]
pub struct RealConv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub stride: usize,
}

impl RealConv2d {
    /// Glorot-uniform kernel, zero bias.
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (((in_ch + out_ch) * k * k) as f64)).sqrt();
        let w = RTensor::from_fn(&[out_ch, in_ch, k, k], |_| T::lit(limit * (2.0 * rng.random::<f64>() - 1.0)));
        let weight = store.add(format!("{name}.w"), w);
        let bias = bias.then(|| store.add(format!("{name}.b"), RTensor::<T>::zeros(&[out_ch])));
        Self { weight, bias, in_ch, out_ch, k, stride }
    }

    pub fn forward<T: Real>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let (w, b) = (cx.var(self.weight), self.bias.map(|b| cx.var(b)));
        cx.tape.conv2d(x, w, b, self.stride)
    }
}
